"""Points, concrete ray-embedded spaces, and the metric primitives every other module builds on.

A metric oracle is vectorised: it takes two coordinate arrays of shapes (n, dim) and
(m, dim) and returns the (n, m) matrix of distances. Single-pair evaluation wraps it.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Literal

import numpy as np
from scipy.spatial.distance import cdist, directed_hausdorff
from scipy.stats import qmc

from lusin.errors import DomainError, OracleError, ParameterError


logger = logging.getLogger(__name__)

Metric = Callable[[np.ndarray, np.ndarray], np.ndarray]

POINT_EQUALITY_TOL = 1e-12
MEMBERSHIP_TOL = 1e-9
MAX_RECORDED_VIOLATIONS = 1000


def euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return cdist(a, b)


def squared_euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return cdist(a, b, "sqeuclidean")


@dataclass(frozen=True)
class Point:
    coords: tuple[float, ...]
    branch_id: int | None = None

    def __post_init__(self) -> None:
        coords = tuple(float(value) for value in np.atleast_1d(self.coords))
        if not coords:
            raise DomainError("point has no coordinates")
        if not all(math.isfinite(value) for value in coords):
            raise DomainError(f"point coordinates must be finite, got {coords}")
        object.__setattr__(self, "coords", coords)

    @property
    def dimension(self) -> int:
        return len(self.coords)

    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float).reshape(1, -1)


def as_array(points: Point | Iterable | np.ndarray, dimension: int | None = None) -> np.ndarray:
    """Stack Points, coordinate tuples, scalars or an array into shape (n, dim).

    A flat input is read as points of dimension one, or as consecutive coordinates
    of `dimension`-dim points when a dimension is given.
    """
    if isinstance(points, Point):
        arr = points.array()
    elif isinstance(points, (np.ndarray, int, float, np.number)):
        arr = np.asarray(points, dtype=float)
        arr = arr.reshape(-1, 1) if arr.ndim <= 1 else arr
    else:
        rows = [p.coords if isinstance(p, Point) else tuple(np.atleast_1d(p)) for p in points]
        if not rows:
            return np.empty((0, dimension or 0))
        arr = np.asarray(rows, dtype=float).reshape(len(rows), -1)
    if dimension is not None and dimension > 1 and arr.shape[1] == 1 and arr.size % dimension == 0:
        arr = arr.reshape(-1, dimension)
    return arr


@dataclass(frozen=True)
class Ray:
    """Affine ray t -> origin + t * direction, t in [0, inf), with its sampling law."""

    origin: tuple[float, ...]
    direction: tuple[float, ...]
    span: float = 100.0
    law: Literal["uniform", "log", "rational"] = "log"

    def __post_init__(self) -> None:
        origin = np.asarray(self.origin, dtype=float).ravel()
        direction = np.asarray(self.direction, dtype=float).ravel()
        norm = float(np.linalg.norm(direction))
        if origin.shape != direction.shape or norm == 0.0 or not np.all(np.isfinite(origin)):
            raise DomainError(f"malformed ray origin={self.origin} direction={self.direction}")
        if not self.span > 0:
            raise ParameterError(f"ray span must be positive, got {self.span}")
        if self.law not in ("uniform", "log", "rational"):
            raise ParameterError(f"unknown sampling law {self.law!r}")
        object.__setattr__(self, "origin", tuple(origin))
        object.__setattr__(self, "direction", tuple(direction / norm))

    @property
    def dimension(self) -> int:
        return len(self.origin)

    def embed(self, params: np.ndarray) -> np.ndarray:
        t = np.asarray(params, dtype=float).reshape(-1, 1)
        return np.asarray(self.origin) + t * np.asarray(self.direction)

    def project(self, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (parameter, distance to the ray) for every row of coords."""
        offset = as_array(coords, self.dimension) - np.asarray(self.origin)
        tau = np.clip(offset @ np.asarray(self.direction), 0.0, None)
        foot = tau[:, None] * np.asarray(self.direction)
        return tau, np.linalg.norm(offset - foot, axis=1)

    def draw(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if count <= 0:
            return np.empty(0)
        unit = qmc.Halton(d=1, scramble=True, seed=rng).random(count)[:, 0]
        if self.law == "uniform":
            return self.span * unit
        if self.law == "rational":
            # uniform in t/(1+t) over [0, span/(1+span)]
            ratio = unit * self.span / (1.0 + self.span)
            return ratio / (1.0 - ratio)
        return np.expm1(unit * np.log1p(self.span))


@dataclass(frozen=True)
class SpaceDescriptor:
    """A concrete space: a finite union of affine rays inside R^dimension."""

    name: str
    dimension: int
    branches: tuple[Ray, ...]
    distance: Metric = euclidean
    branch_separation: float | None = None

    def __post_init__(self) -> None:
        if self.dimension <= 0:
            raise ParameterError("dimension must be positive")
        if not self.branches:
            raise DomainError(f"space {self.name!r} declares no branches")
        for ray in self.branches:
            if ray.dimension != self.dimension:
                raise DomainError(f"branch of dimension {ray.dimension} in a {self.dimension}-dim space")

    def _projections(self, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        params, gaps = zip(*(ray.project(coords) for ray in self.branches))
        return np.vstack(params), np.vstack(gaps)

    def contains(self, points) -> np.ndarray:
        coords = as_array(points, self.dimension)
        if coords.shape[1] != self.dimension or not np.all(np.isfinite(coords)):
            return np.zeros(len(coords), dtype=bool)
        _, gaps = self._projections(coords)
        return gaps.min(axis=0) <= MEMBERSHIP_TOL

    def locate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Branch index and ray parameter of every point; non-members raise DomainError."""
        coords = as_array(points, self.dimension)
        if not np.all(self.contains(coords)):
            raise DomainError(f"point outside {self.name}")
        params, gaps = self._projections(coords)
        branch = np.argmin(gaps, axis=0)
        return branch, params[branch, np.arange(len(coords))]

    def embed(self, branch: int, params) -> np.ndarray:
        if not 0 <= branch < len(self.branches):
            raise DomainError(f"{self.name} has no branch {branch}")
        return self.branches[branch].embed(params)

    def point(self, param: float, branch: int = 0) -> Point:
        return Point(tuple(self.embed(branch, [param])[0]), branch_id=branch)

    def require(self, points) -> np.ndarray:
        coords = as_array(points, self.dimension)
        member = self.contains(coords)
        if not np.all(member):
            bad = coords[~member][0]
            raise DomainError(f"{tuple(bad)} is not a point of {self.name}")
        if isinstance(points, Point) and points.branch_id is not None:
            if not 0 <= points.branch_id < len(self.branches):
                raise DomainError(f"{self.name} has no branch {points.branch_id}")
            _, gaps = self.branches[points.branch_id].project(coords)
            if gaps[0] > MEMBERSHIP_TOL:
                raise DomainError(f"{points} does not lie on branch {points.branch_id}")
        return coords

    def origins(self) -> np.ndarray:
        anchors = np.asarray([ray.origin for ray in self.branches])
        return np.unique(anchors, axis=0) if len(anchors) > 1 else anchors

    def sample(self, count: int, seed: int) -> np.ndarray:
        """Branch origins followed by scrambled-Halton draws split evenly across branches."""
        if count <= 0:
            raise ParameterError("sample count must be positive")
        anchors = self.origins()
        if count <= len(anchors):
            return anchors[:count].copy()
        remaining = count - len(anchors)
        share, extra = divmod(remaining, len(self.branches))
        children = np.random.SeedSequence(seed).spawn(len(self.branches))
        chunks = [anchors]
        for idx, (ray, child) in enumerate(zip(self.branches, children)):
            params = ray.draw(share + (1 if idx < extra else 0), np.random.default_rng(child))
            if len(params):
                chunks.append(ray.embed(params))
        return np.vstack(chunks)


@dataclass(frozen=True)
class AxiomViolation:
    points: tuple[tuple[float, ...], ...]
    axiom: str
    slack: float


@dataclass(frozen=True)
class AxiomReport:
    pairs_checked: int
    triples_checked: int
    violations: tuple[AxiomViolation, ...] = field(default_factory=tuple)
    violation_count: int = 0

    @property
    def max_slack(self) -> float:
        return max((entry.slack for entry in self.violations), default=0.0)

    @property
    def ok(self) -> bool:
        return self.violation_count == 0


def dist(space: SpaceDescriptor, x, y) -> float:
    a = space.require(x)
    b = space.require(y)
    return float(space.distance(a, b)[0, 0])


def _repeated(picks: np.ndarray) -> np.ndarray:
    return (picks[:, 0] == picks[:, 1]) | (picks[:, 0] == picks[:, 2]) | (picks[:, 1] == picks[:, 2])


def _worst(found: list[AxiomViolation]) -> list[AxiomViolation]:
    found.sort(key=lambda entry: entry.slack, reverse=True)
    return found[:MAX_RECORDED_VIOLATIONS]


def check_metric_axioms(
    distance: Metric,
    samples,
    tolerance: float,
    triples: int | None = None,
    seed: int = 0,
) -> AxiomReport:
    """Check nonnegativity, identity, symmetry and the triangle inequality on a sample.

    The triangle inequality is tested on every (x, y, z) with x before y in the sample
    and z distinct from both; pass ``triples`` to test that many seeded random triples
    instead.
    """
    pts = as_array(samples)
    n = len(pts)
    if n == 0:
        raise ParameterError("check_metric_axioms needs at least one sample")
    if tolerance < 0:
        raise ParameterError("tolerance must be nonnegative")

    matrix = np.asarray(distance(pts, pts), dtype=float)
    bad = ~np.isfinite(matrix) | (matrix < 0)
    if bad.any():
        i, j = (int(v) for v in np.argwhere(bad)[0])
        partial = AxiomReport(pairs_checked=i * n + j, triples_checked=0)
        raise OracleError(f"oracle returned {matrix[i, j]} for sample pair ({i}, {j})", report=partial)

    def coords(*idx: int) -> tuple[tuple[float, ...], ...]:
        return tuple(tuple(float(c) for c in pts[k]) for k in idx)

    found: list[AxiomViolation] = []
    count = 0

    diag = np.abs(np.diag(matrix))
    for i in np.flatnonzero(diag > tolerance):
        found.append(AxiomViolation(coords(i, i), "identity", float(diag[i])))
        count += 1

    upper_i, upper_j = np.triu_indices(n, k=1)
    asym = np.abs(matrix[upper_i, upper_j] - matrix[upper_j, upper_i])
    for k in np.flatnonzero(asym > tolerance):
        found.append(AxiomViolation(coords(upper_i[k], upper_j[k]), "symmetry", float(asym[k])))
        count += 1

    gap = np.abs(pts[upper_i] - pts[upper_j]).max(axis=1)
    merged = (matrix[upper_i, upper_j] <= 0.0) & (gap > POINT_EQUALITY_TOL)
    for k in np.flatnonzero(merged):
        found.append(AxiomViolation(coords(upper_i[k], upper_j[k]), "identity", float(gap[k])))
        count += 1

    if triples is None:
        triples_checked = len(upper_i) * max(n - 2, 0)
        upper = np.triu(np.ones((n, n), dtype=bool), k=1)
        for z in range(n):
            excess = matrix - (matrix[:, z, None] + matrix[None, z, :])
            mask = upper & (excess > tolerance)
            mask[z, :] = False
            mask[:, z] = False
            hits = np.argwhere(mask)
            count += len(hits)
            for x, y in hits[:MAX_RECORDED_VIOLATIONS]:
                found.append(AxiomViolation(coords(x, y, z), "triangle", float(excess[x, y])))
            if len(found) > 4 * MAX_RECORDED_VIOLATIONS:
                found = _worst(found)
    else:
        if n < 3:
            raise ParameterError("random triple checks need at least three samples")
        rng = np.random.default_rng(seed)
        picks = rng.integers(0, n, size=(triples, 3))
        clash = _repeated(picks)
        while clash.any():
            picks[clash] = rng.integers(0, n, size=(int(clash.sum()), 3))
            clash = _repeated(picks)
        x = np.minimum(picks[:, 0], picks[:, 1])
        y = np.maximum(picks[:, 0], picks[:, 1])
        z = picks[:, 2]
        excess = matrix[x, y] - (matrix[x, z] + matrix[z, y])
        triples_checked = triples
        for k in np.flatnonzero(excess > tolerance):
            found.append(AxiomViolation(coords(x[k], y[k], z[k]), "triangle", float(excess[k])))
            count += 1

    report = AxiomReport(
        pairs_checked=len(upper_i),
        triples_checked=triples_checked,
        violations=tuple(_worst(found)),
        violation_count=count,
    )
    if count:
        logger.debug("metric axiom check found %d violations, max slack %.3g", count, report.max_slack)
    return report


def greedy_net(distance: Metric, samples, epsilon: float) -> np.ndarray:
    """Farthest-point net: indices of a subset covering every sample within strict epsilon."""
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    pts = as_array(samples)
    if len(pts) == 0:
        raise ParameterError("cannot build a net of an empty sample")
    centers = [0]
    nearest = np.asarray(distance(pts[:1], pts), dtype=float)[0]
    while nearest.max() >= epsilon:
        # argmax picks the first farthest sample, so ties follow sample order
        idx = int(np.argmax(nearest))
        centers.append(idx)
        nearest = np.minimum(nearest, np.asarray(distance(pts[idx : idx + 1], pts), dtype=float)[0])
    return np.asarray(centers, dtype=int)


def epsilon_net(space: SpaceDescriptor, region_samples, epsilon: float) -> np.ndarray:
    pts = as_array(region_samples, space.dimension)
    return pts[greedy_net(space.distance, pts, epsilon)]


class SequenceClass(str, Enum):
    CAUCHY = "cauchy"
    DIVERGENT = "divergent"
    UNDETERMINED = "undetermined"


def cauchy_classify(sequence, distance: Metric, window: int, tolerance: float) -> SequenceClass:
    """Classify a finite sequence by its last 2*window terms only."""
    if window <= 0 or not tolerance > 0:
        raise ParameterError("window and tolerance must be positive")
    pts = as_array(sequence)
    if len(pts) <= 2 * window:
        raise ParameterError(f"sequence of length {len(pts)} is too short for window {window}")
    tail = pts[-2 * window :]
    matrix = np.asarray(distance(tail, tail), dtype=float)
    if matrix[window:, window:].max() < tolerance:
        return SequenceClass.CAUCHY
    diameters = [matrix[s : s + window, s : s + window].max() for s in range(window + 1)]
    if min(diameters) >= tolerance:
        return SequenceClass.DIVERGENT
    return SequenceClass.UNDETERMINED


def hausdorff_distance(a, b) -> float:
    left, right = as_array(a), as_array(b)
    if len(left) == 0 and len(right) == 0:
        return 0.0
    if len(left) == 0 or len(right) == 0:
        return math.inf
    return max(directed_hausdorff(left, right)[0], directed_hausdorff(right, left)[0])


def nearest_distance(points, reference, distance: Metric = euclidean) -> np.ndarray:
    """Distance from each point to the nearest reference point (inf for an empty reference)."""
    pts, ref = as_array(points), as_array(reference)
    if len(ref) == 0:
        return np.full(len(pts), np.inf)
    if len(pts) == 0:
        return np.empty(0)
    return np.asarray(distance(pts, ref), dtype=float).min(axis=1)
