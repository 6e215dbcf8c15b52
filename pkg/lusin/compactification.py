"""Compact exhaustions and the compactification metric.

For an exhaustion K_1 ⊂ K_2 ⊂ ... with radii r_n and a base point x0 ∈ K_1:

    g(x) = max_n [r_n - d(x, K_n)]
    h(x) = min{d(x, x0), g(x)}
    delta(x, y) = min{d(x, y), h(x) + h(y)}

delta is a metric under which the space is compact, with sequences escaping every
K_n converging to x0.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from lusin.errors import DepthExhaustedError, DescriptorError, ParameterError
from lusin.metric import Point, SpaceDescriptor, as_array, greedy_net


logger = logging.getLogger(__name__)

VALIDATION_TOL = 1e-12
TAIL_THRESHOLD = 1e-3
CHUNK = 256


def _segment_distances(ray, coords: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Distance from every row of coords to the ray segments [lo[j], hi[j]]; inf where lo > hi."""
    offset = coords - np.asarray(ray.origin)
    tau = offset @ np.asarray(ray.direction)
    perp2 = np.clip(np.einsum("ij,ij->i", offset, offset) - tau**2, 0.0, None)
    along = tau[:, None] - np.clip(tau[:, None], lo[None, :], np.maximum(lo, hi)[None, :])
    return np.where(lo[None, :] <= hi[None, :], np.sqrt(perp2[:, None] + along**2), np.inf)


class RayIntervals:
    """K_n = union over branches of the ray segments with parameter in [0, bounds[n-1]]."""

    kind = "intervals"

    def __init__(self, bounds):
        self.bounds = np.asarray(bounds, dtype=float).ravel()
        if self.bounds.size == 0 or not np.all(np.isfinite(self.bounds)) or np.any(self.bounds < 0):
            raise DescriptorError("interval bounds must be finite and nonnegative")

    def __len__(self) -> int:
        return len(self.bounds)

    def distances(self, space: SpaceDescriptor, coords: np.ndarray, start: int, stop: int) -> np.ndarray:
        bounds = self.bounds[start:stop]
        lo = np.zeros_like(bounds)
        return np.min([_segment_distances(ray, coords, lo, bounds) for ray in space.branches], axis=0)

    def nesting_defects(self, space: SpaceDescriptor) -> list[tuple[int, str]]:
        out = []
        for n in np.flatnonzero(self.bounds[1:] - self.bounds[:-1] <= VALIDATION_TOL):
            out.append((int(n) + 1, f"[0,{self.bounds[n]:.6g}] not inside the interior of [0,{self.bounds[n + 1]:.6g}]"))
        return out

    def enlargement_defects(self, space: SpaceDescriptor, radii: np.ndarray) -> list[tuple[int, str]]:
        out = []
        reach = self.bounds[:-1] + radii[:-1]
        for n in np.flatnonzero(reach > self.bounds[1:] + VALIDATION_TOL):
            out.append((int(n) + 1, f"[0,{reach[n]:.6g}) not inside [0,{self.bounds[n + 1]:.6g}]"))
        if space.branch_separation is not None:
            for n in np.flatnonzero(radii[:-1] >= space.branch_separation):
                out.append((int(n) + 1, f"r_n={radii[n]:.6g} reaches across branches"))
        return out

    def grid(self, space: SpaceDescriptor, n: int, spacing: float) -> np.ndarray:
        upper = self.bounds[n - 1]
        steps = max(int(math.ceil(upper / spacing)), 1)
        params = np.linspace(0.0, upper, steps + 1)
        return np.unique(np.vstack([ray.embed(params) for ray in space.branches]), axis=0)


class Balls:
    """K_n = closed ball of radius extents[n-1] around centers[n-1], intersected with the space."""

    kind = "balls"

    def __init__(self, centers, extents):
        self.centers = np.atleast_2d(np.asarray(centers, dtype=float))
        self.extents = np.asarray(extents, dtype=float).ravel()
        if len(self.centers) != len(self.extents) or not np.all(np.isfinite(self.centers)):
            raise DescriptorError("ball centers and extents must be finite and of equal length")
        if np.any(self.extents < 0) or not np.all(np.isfinite(self.extents)):
            raise DescriptorError("ball extents must be finite and nonnegative")

    def __len__(self) -> int:
        return len(self.extents)

    def _intervals(self, ray, start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
        """Parameter interval of each ball ∩ ray; lo > hi marks a ball that misses the ray."""
        offset = np.asarray(ray.origin) - self.centers[start:stop]
        b = offset @ np.asarray(ray.direction)
        disc = b**2 - (np.einsum("ij,ij->i", offset, offset) - self.extents[start:stop] ** 2)
        root = np.sqrt(np.clip(disc, 0.0, None))
        lo, hi = np.maximum(-b - root, 0.0), -b + root
        return np.where(disc < 0, np.inf, lo), np.where(disc < 0, -np.inf, hi)

    def distances(self, space: SpaceDescriptor, coords: np.ndarray, start: int, stop: int) -> np.ndarray:
        # distance to K_n = ball ∩ X, measured within X's branches
        return np.min(
            [_segment_distances(ray, coords, *self._intervals(ray, start, stop)) for ray in space.branches], axis=0
        )

    def _shift(self) -> np.ndarray:
        return np.linalg.norm(self.centers[1:] - self.centers[:-1], axis=1)

    def nesting_defects(self, space: SpaceDescriptor) -> list[tuple[int, str]]:
        reach = self._shift() + self.extents[:-1]
        return [
            (int(n) + 1, f"ball {n + 1} not inside the interior of ball {n + 2}")
            for n in np.flatnonzero(reach >= self.extents[1:] - VALIDATION_TOL)
        ]

    def enlargement_defects(self, space: SpaceDescriptor, radii: np.ndarray) -> list[tuple[int, str]]:
        reach = self._shift() + self.extents[:-1] + radii[:-1]
        return [
            (int(n) + 1, f"enlarged ball {n + 1} reaches {reach[n]:.6g} > {self.extents[n + 1]:.6g}")
            for n in np.flatnonzero(reach > self.extents[1:] + VALIDATION_TOL)
        ]

    def grid(self, space: SpaceDescriptor, n: int, spacing: float) -> np.ndarray:
        chunks = []
        for ray in space.branches:
            lo, hi = (float(v[0]) for v in self._intervals(ray, n - 1, n))
            if hi < lo:
                continue
            steps = max(int(math.ceil((hi - lo) / spacing)), 1)
            chunks.append(ray.embed(np.linspace(lo, hi, steps + 1)))
        if not chunks:
            return np.empty((0, space.dimension))
        return np.unique(np.vstack(chunks), axis=0)


@dataclass(frozen=True)
class Exhaustion:
    regions: RayIntervals | Balls
    radii: np.ndarray
    n_max: int

    def __post_init__(self) -> None:
        radii = np.asarray(self.radii, dtype=float).ravel()
        if len(radii) != self.n_max or len(self.regions) != self.n_max:
            raise DescriptorError(
                f"exhaustion declares n_max={self.n_max} but has {len(self.regions)} regions and {len(radii)} radii"
            )
        if not np.all(np.isfinite(radii)) or np.any(radii <= 0):
            raise DescriptorError("exhaustion radii must be finite and positive")
        object.__setattr__(self, "radii", radii)

    @classmethod
    def standard(cls, n_max: int) -> "Exhaustion":
        """K_n = [0, n] on every branch, r_n = 1/n."""
        index = np.arange(1, n_max + 1, dtype=float)
        return cls(regions=RayIntervals(index), radii=1.0 / index, n_max=n_max)

    def region_distance(self, space: SpaceDescriptor, points, n: int) -> np.ndarray:
        coords = as_array(points, space.dimension)
        return self.regions.distances(space, coords, n - 1, n)[:, 0]


@dataclass(frozen=True)
class ConditionViolation:
    condition: str
    index: int
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[ConditionViolation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def conditions(self) -> set[str]:
        return {entry.condition for entry in self.violations}


def validate_exhaustion(exh: Exhaustion, base: SpaceDescriptor) -> ValidationReport:
    """Check nesting and conditions (a) K_n^{r_n} ⊂ K_{n+1}, (b) r_n decreasing, (c) r_n -> 0."""
    if exh.n_max < 2:
        raise DescriptorError("an exhaustion needs at least two regions")
    found = [ConditionViolation("nested", n, detail) for n, detail in exh.regions.nesting_defects(base)]
    found += [ConditionViolation("a", n, detail) for n, detail in exh.regions.enlargement_defects(base, exh.radii)]
    for n in np.flatnonzero(exh.radii[:-1] - exh.radii[1:] <= VALIDATION_TOL):
        found.append(
            ConditionViolation("b", int(n) + 1, f"r_{n + 1}={exh.radii[n]:.6g} <= r_{n + 2}={exh.radii[n + 1]:.6g}")
        )
    if exh.radii[-1] >= TAIL_THRESHOLD:
        found.append(
            ConditionViolation("c", exh.n_max, f"r_{exh.n_max}={exh.radii[-1]:.6g} not below {TAIL_THRESHOLD:g}")
        )
    return ValidationReport(tuple(found))


@dataclass(frozen=True)
class CompactifiedSpace:
    base: SpaceDescriptor
    x0: Point
    exhaustion: Exhaustion

    def __post_init__(self) -> None:
        report = validate_exhaustion(self.exhaustion, self.base)
        if not report.ok:
            first = report.violations[0]
            raise DescriptorError(
                f"invalid exhaustion for {self.base.name}: condition {first.condition} at n={first.index}: {first.detail}"
            )
        anchor = self.base.require(self.x0)
        if self.exhaustion.region_distance(self.base, anchor, 1)[0] > VALIDATION_TOL:
            raise DescriptorError(f"x0={self.x0.coords} is not in K_1")

    @property
    def name(self) -> str:
        return self.base.name

    @property
    def anchor(self) -> np.ndarray:
        return self.x0.array()

    def g(self, points) -> np.ndarray:
        """Evaluate g, stopping at the first n whose r_n does not exceed the running maximum."""
        coords = as_array(points, self.base.dimension)
        radii = self.exhaustion.radii
        n_max = self.exhaustion.n_max
        best = np.full(len(coords), -np.inf)
        active = np.arange(len(coords))
        start = 0
        while active.size and start < n_max:
            stop = min(start + CHUNK, n_max)
            terms = radii[None, start:stop] - self.exhaustion.regions.distances(
                self.base, coords[active], start, stop
            )
            running = np.maximum.accumulate(np.hstack([best[active, None], terms]), axis=1)
            trigger = radii[None, start:stop] <= running[:, :-1]
            hit = trigger.any(axis=1)
            first = np.argmax(trigger, axis=1)
            rows = np.arange(len(active))
            best[active] = np.where(hit, running[rows, first], running[:, -1])
            active = active[~hit]
            start = stop
        if active.size:
            short = best[active] < radii[-1]
            if short.any():
                worst = float(best[active][short].min())
                raise DepthExhaustedError(
                    f"g did not settle within n_max={n_max} for {int(short.sum())} points",
                    lower=worst,
                    upper=float(radii[-1]),
                )
        return best

    def h(self, points) -> np.ndarray:
        coords = as_array(points, self.base.dimension)
        to_anchor = self.base.distance(coords, self.anchor)[:, 0]
        return np.minimum(to_anchor, self.g(coords))

    def delta(self, a, b) -> np.ndarray:
        """Pairwise compactification metric; usable wherever a Metric oracle is expected."""
        left, right = as_array(a, self.base.dimension), as_array(b, self.base.dimension)
        direct = np.asarray(self.base.distance(left, right), dtype=float)
        return np.minimum(direct, self.h(left)[:, None] + self.h(right)[None, :])

    def n_epsilon(self, epsilon: float) -> int:
        below = np.flatnonzero(self.exhaustion.radii < epsilon)
        if below.size == 0:
            raise DepthExhaustedError(
                f"no r_n below epsilon={epsilon:g} within n_max={self.exhaustion.n_max}",
                lower=float(self.exhaustion.radii[-1]),
                upper=float(self.exhaustion.radii[0]),
            )
        return int(below[0]) + 1


def g_value(cspace: CompactifiedSpace, x) -> float:
    return float(cspace.g(cspace.base.require(x))[0])


def h_value(cspace: CompactifiedSpace, x) -> float:
    return float(cspace.h(cspace.base.require(x))[0])


def delta(cspace: CompactifiedSpace, x, y) -> float:
    return float(cspace.delta(cspace.base.require(x), cspace.base.require(y))[0, 0])


def total_boundedness_net(cspace: CompactifiedSpace, epsilon: float, check_samples=None) -> np.ndarray:
    """Finite delta-net D = C ∪ {x0}, with C a d-net of K_{n_eps} where r_n < epsilon for n >= n_eps.

    Points outside K_{n_eps} have h < epsilon, so x0 alone covers them.
    """
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    n_eps = cspace.n_epsilon(epsilon)
    grid = cspace.exhaustion.regions.grid(cspace.base, n_eps, epsilon / 4.0)
    if len(grid):
        cover = grid[greedy_net(cspace.base.distance, grid, 0.75 * epsilon)]
        net = np.unique(np.vstack([cspace.anchor, cover]), axis=0)
    else:
        net = cspace.anchor.copy()
    if check_samples is not None:
        logger.debug(
            "net for eps=%g (n_eps=%d) has %d points, worst coverage %.6g",
            epsilon,
            n_eps,
            len(net),
            net_coverage(cspace, net, check_samples),
        )
    return net


def net_coverage(cspace: CompactifiedSpace, net, points) -> float:
    """Largest delta-distance from a sample point to its nearest net point."""
    return float(cspace.delta(as_array(points, cspace.base.dimension), as_array(net, cspace.base.dimension)).min(axis=1).max())


@dataclass(frozen=True)
class EscapeReport:
    h_values: np.ndarray
    delta_to_x0: np.ndarray
    converges_to_x0: bool


def escape_convergence_check(cspace: CompactifiedSpace, sequence, tolerance: float = 1e-3) -> EscapeReport:
    """Evaluate h and delta(., x0) along a sequence; converged when the tail half is nonincreasing below tolerance."""
    coords = cspace.base.require(sequence)
    if len(coords) == 0:
        raise ParameterError("escape check needs a nonempty sequence")
    h_values = cspace.h(coords)
    to_anchor = cspace.delta(coords, cspace.anchor)[:, 0]
    tail = to_anchor[len(to_anchor) // 2 :]
    converges = bool(tail.max() < tolerance and np.all(np.diff(tail) <= VALIDATION_TOL))
    return EscapeReport(h_values=h_values, delta_to_x0=to_anchor, converges_to_x0=converges)
