"""Continuous bijections on ray-branched spaces and the estimators of their discontinuity sets.

A map is described branch by branch: branch i of the domain is carried by the analytic
form forms[i]. The set X1 where the inverse fails to be continuous is estimated from
limits of f along escaping sequences, and cross-checked by the compact-closure test
on preimages of small balls.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from sklearn.cluster import DBSCAN

from lusin.errors import DescriptorError, DomainError, InconclusiveError, MapError, ParameterError
from lusin.forms import Form
from lusin.metric import MEMBERSHIP_TOL, SpaceDescriptor, as_array, euclidean, greedy_net


logger = logging.getLogger(__name__)

INVERSE_TOL = 1e-6
DEFAULT_PHASES = 8


@dataclass(frozen=True)
class KnownX1:
    """Analytic X1: isolated domain points plus whole branches."""

    points: tuple[tuple[float, ...], ...] = ()
    branches: tuple[int, ...] = ()

    @property
    def is_empty(self) -> bool:
        return not self.points and not self.branches

    @property
    def is_singleton(self) -> bool:
        return len(self.points) == 1 and not self.branches

    def contains(self, domain: SpaceDescriptor, coords, tol: float) -> np.ndarray:
        pts = as_array(coords, domain.dimension)
        inside = np.zeros(len(pts), dtype=bool)
        if self.points:
            inside |= np.asarray(domain.distance(pts, np.asarray(self.points))).min(axis=1) <= tol
        for branch in self.branches:
            _, gaps = domain.branches[branch].project(pts)
            inside |= gaps <= MEMBERSHIP_TOL
        return inside


@dataclass(frozen=True)
class MapInstance:
    name: str
    domain: SpaceDescriptor
    forms: tuple[Form, ...]
    known_x1: KnownX1 | None = None
    escape_phases: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if len(self.forms) != len(self.domain.branches):
            raise DescriptorError(
                f"map {self.name!r} has {len(self.forms)} forms for {len(self.domain.branches)} branches"
            )
        dims = {form.dimension for form in self.forms}
        if len(dims) != 1:
            raise DescriptorError(f"map {self.name!r} mixes codomain dimensions {sorted(dims)}")
        if self.escape_phases is None:
            object.__setattr__(self, "escape_phases", (DEFAULT_PHASES,) * len(self.forms))
        elif len(self.escape_phases) != len(self.forms) or min(self.escape_phases) < 1:
            raise DescriptorError(f"map {self.name!r} needs one positive escape phase count per branch")

    @property
    def codomain_dimension(self) -> int:
        return self.forms[0].dimension

    def forward_branch(self, branch: int, params) -> np.ndarray:
        images = self.forms[branch].forward(params)
        if not np.all(np.isfinite(images)):
            raise MapError(f"{self.name}: non-finite image on branch {branch}")
        return images

    def forward(self, points) -> np.ndarray:
        coords = as_array(points, self.domain.dimension)
        branch, params = self.domain.locate(coords)
        out = np.empty((len(coords), self.codomain_dimension))
        for idx in np.unique(branch):
            mask = branch == idx
            out[mask] = self.forward_branch(int(idx), params[mask])
        return out

    def preimage(self, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Branch index, ray parameter and residual of the best preimage of each codomain point."""
        images = as_array(y, self.codomain_dimension)
        if images.shape[1] != self.codomain_dimension:
            raise MapError(f"{self.name}: expected {self.codomain_dimension}-dim image points")
        params, residuals = zip(*(form.inverse(images) for form in self.forms))
        params, residuals = np.vstack(params), np.nan_to_num(np.vstack(residuals), nan=np.inf)
        branch = np.argmin(residuals, axis=0)
        cols = np.arange(len(images))
        return branch, params[branch, cols], residuals[branch, cols]

    def inverse(self, y) -> np.ndarray:
        branch, params, residuals = self.preimage(y)
        if not np.all(residuals <= INVERSE_TOL):
            worst = int(np.argmax(residuals))
            raise MapError(f"{self.name}: {tuple(as_array(y, self.codomain_dimension)[worst])} is not in the image")
        out = np.empty((len(params), self.domain.dimension))
        for idx in np.unique(branch):
            mask = branch == idx
            out[mask] = self.domain.embed(int(idx), params[mask])
        return out


def bijection_defect(fmap: MapInstance, samples) -> float:
    """Largest |f^-1(f(x)) - x| over the samples."""
    coords = fmap.domain.require(samples)
    return float(np.linalg.norm(fmap.inverse(fmap.forward(coords)) - coords, axis=1).max())


def continuity_defect(fmap: MapInstance, step: float = 1e-3, span: float = 50.0) -> float:
    """Largest ratio of adjacent-image distance to the form's declared speed times step.

    Values at most 1 mean every branch stayed within its modulus on the grid.
    """
    grid = np.arange(0.0, span + step, step)
    worst = 0.0
    for idx, form in enumerate(fmap.forms):
        images = fmap.forward_branch(idx, grid)
        jumps = np.linalg.norm(np.diff(images, axis=0), axis=1)
        worst = max(worst, float(jumps.max() / (form.speed * step)))
    return worst


@dataclass(frozen=True)
class EscapeSampler:
    """Parameters ceil(factor**n) + j/phases[i] on branch branch_ids[i], n < steps, j < phases[i]."""

    branch_ids: tuple[int, ...]
    phases: tuple[int, ...]
    factor: float = 1.5
    steps: int = 64

    def __post_init__(self) -> None:
        if len(self.branch_ids) != len(self.phases):
            raise ParameterError("escape sampler needs one phase count per branch")
        if not self.factor > 1 or self.steps < 2:
            raise ParameterError("escape schedule needs factor > 1 and at least two steps")

    @classmethod
    def for_map(cls, fmap: MapInstance, factor: float = 1.5, steps: int = 64) -> "EscapeSampler":
        return cls(tuple(range(len(fmap.forms))), tuple(fmap.escape_phases), factor, steps)

    def restrict(self, branch_ids) -> "EscapeSampler":
        keep = set(branch_ids)
        pairs = [(b, c) for b, c in zip(self.branch_ids, self.phases) if b in keep]
        return EscapeSampler(tuple(b for b, _ in pairs), tuple(c for _, c in pairs), self.factor, self.steps)

    @property
    def schedule(self) -> np.ndarray:
        return np.ceil(self.factor ** np.arange(self.steps))

    def parameters(self, position: int) -> np.ndarray:
        count = self.phases[position]
        return self.schedule[None, :] + (np.arange(count) / count)[:, None]

    def points(self, fmap: MapInstance) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Domain coordinates, images and parameters of every schedule point."""
        coords, images, params = [], [], []
        for pos, branch in enumerate(self.branch_ids):
            flat = self.parameters(pos).ravel()
            coords.append(fmap.domain.embed(branch, flat))
            images.append(fmap.forward_branch(branch, flat))
            params.append(flat)
        if not params:
            return (
                np.empty((0, fmap.domain.dimension)),
                np.empty((0, fmap.codomain_dimension)),
                np.empty(0),
            )
        return np.vstack(coords), np.vstack(images), np.concatenate(params)


def _tail_images(fmap: MapInstance, sampler: EscapeSampler):
    for pos, branch in enumerate(sampler.branch_ids):
        params = sampler.parameters(pos)
        images = fmap.forward_branch(branch, params.ravel()).reshape(params.shape[0], sampler.steps, -1)
        yield branch, images[:, sampler.steps // 2 :, :]


def escape_limit_set(fmap: MapInstance, sampler: EscapeSampler, tol: float, min_hits: int = 3) -> np.ndarray:
    """Cluster representatives of the accumulation points of f along escaping sequences.

    A sequence contributes a candidate wherever at least min_hits of its tail images
    gather within tol/2; candidates closer than tol/4 are merged into their centroid.
    """
    if not tol > 0:
        raise ParameterError(f"cluster tolerance must be positive, got {tol}")
    candidates = []
    for branch, tails in _tail_images(fmap, sampler):
        found = 0
        for tail in tails:
            labels = DBSCAN(eps=tol / 2.0, min_samples=min_hits).fit(tail).labels_
            for label in np.unique(labels[labels >= 0]):
                candidates.append(tail[labels == label].mean(axis=0))
                found += 1
        logger.debug("%s: branch %d contributed %d accumulation candidates", fmap.name, branch, found)
    if not candidates:
        return np.empty((0, fmap.codomain_dimension))
    stacked = np.vstack(candidates)
    labels = DBSCAN(eps=tol / 4.0, min_samples=1).fit(stacked).labels_
    limits = np.vstack([stacked[labels == label].mean(axis=0) for label in np.unique(labels)])
    logger.debug("%s: escape limit set has %d clusters", fmap.name, len(limits))
    return limits


def extends_to_infinity(fmap: MapInstance, sampler: EscapeSampler, tol: float, min_hits: int = 3) -> bool:
    """True when every escaping tail converges to one common limit, so X1 is at most a point."""
    limits = escape_limit_set(fmap, sampler, tol, min_hits)
    if len(limits) != 1:
        return False
    return all(
        float(np.linalg.norm(tails - limits[0], axis=2).max()) <= tol for _, tails in _tail_images(fmap, sampler)
    )


@dataclass(frozen=True)
class DiscontinuityEstimate:
    x1: np.ndarray
    y1: np.ndarray
    mask: np.ndarray = field(repr=False)


def discontinuity_set(fmap: MapInstance, limits, domain_samples, tol: float) -> DiscontinuityEstimate:
    """Samples whose image lies within tol of the escape limit set, and those images."""
    coords = fmap.domain.require(domain_samples)
    images = fmap.forward(coords)
    limits = as_array(limits, fmap.codomain_dimension)
    if len(limits) == 0:
        mask = np.zeros(len(coords), dtype=bool)
    else:
        gaps, _ = cKDTree(limits).query(images)
        mask = gaps <= tol
    return DiscontinuityEstimate(x1=coords[mask], y1=images[mask], mask=mask)


@dataclass(frozen=True)
class PullbackCloud:
    """Image points with the ray parameters of their preimages, indexed for ball queries."""

    images: np.ndarray
    params: np.ndarray
    tree: cKDTree = field(repr=False)

    @classmethod
    def build(cls, fmap: MapInstance, domain_samples, sampler: EscapeSampler | None) -> "PullbackCloud":
        coords = fmap.domain.require(domain_samples)
        _, params = fmap.domain.locate(coords)
        images, all_params = [fmap.forward(coords)], [params]
        if sampler is not None:
            _, escape_images, escape_params = sampler.points(fmap)
            images.append(escape_images)
            all_params.append(escape_params)
        images, params = np.vstack(images), np.concatenate(all_params)
        return cls(images=images, params=params, tree=cKDTree(images))


def default_radius_schedule(tol: float) -> tuple[float, ...]:
    return (8 * tol, 4 * tol, 2 * tol, tol)


def proper_neighborhood_test(fmap: MapInstance, y, radius_schedule, bound: float, cloud: PullbackCloud) -> bool:
    """True when some ball around y pulls back to cloud samples of bounded ray parameter only.

    Raises InconclusiveError when no ball in the schedule captures any cloud sample.
    """
    radii = [float(r) for r in radius_schedule]
    if not radii or min(radii) <= 0 or any(a <= b for a, b in zip(radii, radii[1:])):
        raise ParameterError("radius schedule must be positive and strictly decreasing")
    if not bound > 0:
        raise ParameterError("parameter bound must be positive")
    center = as_array(y, fmap.codomain_dimension)
    if center.shape != (1, fmap.codomain_dimension):
        raise DomainError(f"{fmap.name}: expected a single {fmap.codomain_dimension}-dim image point")
    captured_any = False
    for radius in radii:
        hits = cloud.tree.query_ball_point(center[0], radius)
        if not hits:
            continue
        captured_any = True
        if np.all(cloud.params[hits] <= bound):
            return True
    if not captured_any:
        raise InconclusiveError(f"{fmap.name}: no sample within {radii[0]:g} of {tuple(center[0])}")
    return False


@dataclass(frozen=True)
class CompactnessReport:
    limit: tuple[float, ...] | None
    tail_gap: float
    net_size: int
    compact: bool


def image_compactness_check(
    fmap: MapInstance,
    sampler: EscapeSampler,
    domain_samples,
    epsilon: float,
    tol: float,
    min_hits: int = 3,
) -> CompactnessReport:
    """When escapes converge to a single image point, the sampled image admits a finite epsilon-net."""
    limits = escape_limit_set(fmap, sampler, tol, min_hits)
    if len(limits) != 1:
        return CompactnessReport(limit=None, tail_gap=math.inf, net_size=0, compact=False)
    tail_gap = max(float(np.linalg.norm(tails - limits[0], axis=2).max()) for _, tails in _tail_images(fmap, sampler))
    _, escape_images, _ = sampler.points(fmap)
    cloud = np.vstack([fmap.forward(fmap.domain.require(domain_samples)), escape_images])
    net = greedy_net(euclidean, cloud, epsilon)
    return CompactnessReport(
        limit=tuple(float(c) for c in limits[0]),
        tail_gap=tail_gap,
        net_size=len(net),
        compact=tail_gap < epsilon,
    )
