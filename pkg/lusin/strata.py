"""Descending stratification Y ⊃ Y1 ⊃ Y2 ⊃ ... of a bijection's image, and the stratum metrics.

Level k restricts f to X_k = f^-1(Y_k), estimates the next discontinuity set from
escapes that stay inside X_k, and records Z_k = Y_k \\ Y_{k+1}. Each open stratum
carries the complete metric

    delta_k(y, y') = d(x, x') + |1/d(x, X_{k+1}) - 1/d(x', X_{k+1})|,  x = f^-1(y).
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from lusin.compactification import CompactifiedSpace
from lusin.errors import BoundaryContactError, ParameterError, ResolutionError, ScopeError
from lusin.maps import EscapeSampler, MapInstance, escape_limit_set, extends_to_infinity
from lusin.metric import (
    POINT_EQUALITY_TOL,
    Metric,
    SequenceClass,
    as_array,
    cauchy_classify,
    euclidean,
    nearest_distance,
)


logger = logging.getLogger(__name__)

CARRY_COUNT = 3
BOUNDARY_TOL = 1e-12
BLOWUP_THRESHOLD = 1e3


@dataclass(frozen=True)
class Level:
    k: int
    x_samples: np.ndarray
    y_samples: np.ndarray
    next_mask: np.ndarray
    limits: np.ndarray
    branches: tuple[int, ...]

    @property
    def z_samples(self) -> np.ndarray:
        return self.y_samples[~self.next_mask]

    @property
    def x_next(self) -> np.ndarray:
        return self.x_samples[self.next_mask]

    @property
    def y_next(self) -> np.ndarray:
        return self.y_samples[self.next_mask]

    def summary(self) -> dict:
        return {
            "k": self.k,
            "x_samples": int(len(self.x_samples)),
            "z_samples": int((~self.next_mask).sum()),
            "next_samples": int(self.next_mask.sum()),
            "escape_branches": list(self.branches),
            "limit_clusters": int(len(self.limits)),
        }


@dataclass(frozen=True)
class Stratification:
    map_name: str
    tol: float
    levels: tuple[Level, ...]
    terminated: bool

    def z_sets(self) -> list[np.ndarray]:
        """Z-sample sets in level order, followed by the unresolved Y set when the chain was cut off."""
        parts = [level.z_samples for level in self.levels]
        if not self.terminated:
            parts.append(self.levels[-1].y_next)
        return parts


def _carried(branch: int, located: np.ndarray, params: np.ndarray, idx: np.ndarray, next_idx: np.ndarray) -> bool:
    on_branch = idx[located[idx] == branch]
    if on_branch.size == 0:
        return False
    top = on_branch[np.argsort(params[on_branch])[-CARRY_COUNT:]]
    return bool(np.isin(top, next_idx).all())


def stratify(
    fmap: MapInstance,
    max_depth: int,
    tol: float,
    domain_samples,
    sampler: EscapeSampler,
    min_hits: int = 3,
    min_level_samples: int = 3,
) -> Stratification:
    if max_depth < 1:
        raise ParameterError("stratification depth must be at least 1")
    if not tol > 0:
        raise ParameterError("stratification tolerance must be positive")
    coords = fmap.domain.require(domain_samples)
    images = fmap.forward(coords)
    located, params = fmap.domain.locate(coords)

    idx = np.arange(len(coords))
    active = sampler
    levels: list[Level] = []
    terminated = False
    for k in range(max_depth):
        if active.branch_ids:
            limits = escape_limit_set(fmap, active, tol, min_hits)
        else:
            limits = np.empty((0, fmap.codomain_dimension))
        if len(limits) and len(idx) < min_level_samples:
            raise ResolutionError(
                f"{len(idx)} samples left, need {min_level_samples} to resolve {len(limits)} limit clusters",
                level=k,
            )
        if len(limits):
            gaps, _ = cKDTree(limits).query(images[idx])
            next_mask = gaps <= tol
        else:
            next_mask = np.zeros(len(idx), dtype=bool)
        levels.append(
            Level(
                k=k,
                x_samples=coords[idx],
                y_samples=images[idx],
                next_mask=next_mask,
                limits=limits,
                branches=active.branch_ids,
            )
        )
        logger.debug(
            "%s level %d: %d samples, %d limit clusters, %d carried to the next level",
            fmap.name,
            k,
            len(idx),
            len(limits),
            int(next_mask.sum()),
        )
        next_idx = idx[next_mask]
        if next_idx.size == 0:
            terminated = True
            break
        carried = [b for b in active.branch_ids if _carried(b, located, params, idx, next_idx)]
        active = active.restrict(carried)
        idx = next_idx
    return Stratification(map_name=fmap.name, tol=tol, levels=tuple(levels), terminated=terminated)


@dataclass(frozen=True)
class ChainReport:
    inclusion_ok: bool
    disjoint_ok: bool

    @property
    def ok(self) -> bool:
        return self.inclusion_ok and self.disjoint_ok


def chain_invariants(strat: Stratification) -> ChainReport:
    """Y_{k+1} ⊂ Y_k and Z_k ∩ Y_{k+1} = ∅ on the sample sets."""
    inclusion, disjoint = True, True
    for level, successor in zip(strat.levels, strat.levels[1:]):
        inclusion &= bool(np.all(nearest_distance(successor.y_samples, level.y_samples) <= POINT_EQUALITY_TOL))
    for level in strat.levels:
        if len(level.z_samples) and len(level.y_next):
            disjoint &= bool(np.all(nearest_distance(level.z_samples, level.y_next) > POINT_EQUALITY_TOL))
    return ChainReport(inclusion_ok=inclusion, disjoint_ok=disjoint)


@dataclass(frozen=True)
class ProxyReport:
    radius: float
    per_level: tuple[tuple[int, int, float], ...]
    ok: bool


def density_proxy(strat: Stratification, radius: float = 0.05) -> ProxyReport:
    """Every Y_k sample lies within radius of a Z_k sample, on levels with nonempty Z_k."""
    rows = []
    ok = True
    for level in strat.levels:
        if len(level.z_samples) == 0:
            continue
        worst = float(nearest_distance(level.y_samples, level.z_samples).max())
        rows.append((level.k, len(level.y_samples), worst))
        ok &= worst < radius
    return ProxyReport(radius=radius, per_level=tuple(rows), ok=ok)


def nowhere_density_proxy(strat: Stratification, balls: int = 100, radius: float = 0.1, seed: int = 0) -> ProxyReport:
    """No sampled ball around a Y_k sample captures only Y_{k+1} samples."""
    rng = np.random.default_rng(seed)
    rows = []
    ok = True
    for level in strat.levels:
        if not level.next_mask.any():
            continue
        tree = cKDTree(level.y_samples)
        centers = level.y_samples[rng.integers(0, len(level.y_samples), size=balls)]
        swallowed = sum(
            1 for hits in tree.query_ball_point(centers, radius) if hits and np.all(level.next_mask[hits])
        )
        rows.append((level.k, balls, float(swallowed)))
        ok &= swallowed == 0
    return ProxyReport(radius=radius, per_level=tuple(rows), ok=ok)


@dataclass(frozen=True)
class StratumMetric:
    level: int
    boundary_samples: np.ndarray
    base_distance: Metric = euclidean

    def __post_init__(self) -> None:
        object.__setattr__(self, "boundary_samples", as_array(self.boundary_samples))

    @property
    def _dimension(self) -> int | None:
        return self.boundary_samples.shape[1] or None

    def kappa(self, points) -> np.ndarray:
        coords = as_array(points, self._dimension)
        if len(self.boundary_samples) == 0:
            return np.zeros(len(coords))
        gaps = nearest_distance(coords, self.boundary_samples, self.base_distance)
        if np.any(gaps <= BOUNDARY_TOL):
            raise BoundaryContactError(f"point {tuple(coords[np.argmin(gaps)])} lies on the level-{self.level} boundary")
        return 1.0 / gaps

    def domain_metric(self, a, b) -> np.ndarray:
        left, right = as_array(a, self._dimension), as_array(b, self._dimension)
        direct = np.asarray(self.base_distance(left, right), dtype=float)
        return direct + np.abs(self.kappa(left)[:, None] - self.kappa(right)[None, :])

    def image_metric(self, fmap: MapInstance) -> Metric:
        def metric(a: np.ndarray, b: np.ndarray) -> np.ndarray:
            return self.domain_metric(fmap.inverse(a), fmap.inverse(b))

        return metric


def stratum_metric(strat: Stratification, k: int, fmap: MapInstance) -> StratumMetric:
    if not 0 <= k < len(strat.levels):
        raise ParameterError(f"{strat.map_name} has no level {k}")
    return StratumMetric(level=k, boundary_samples=strat.levels[k].x_next, base_distance=fmap.domain.distance)


def stratum_metric_eval(sm: StratumMetric, fmap: MapInstance, y, y2) -> float:
    dimension = fmap.codomain_dimension
    return float(sm.image_metric(fmap)(as_array(y, dimension), as_array(y2, dimension))[0, 0])


@dataclass(frozen=True)
class BlowupReport:
    max_kappa: float
    classification: SequenceClass
    ok: bool


def boundary_blowup_check(sm: StratumMetric, fmap: MapInstance, sequence, window: int, tolerance: float) -> BlowupReport:
    """Along image points whose preimages approach X_{k+1}, kappa explodes and the sequence is not delta_k-Cauchy."""
    domain = fmap.inverse(as_array(sequence, fmap.codomain_dimension))
    kappa = sm.kappa(domain)
    label = cauchy_classify(domain, sm.domain_metric, window, tolerance)
    peak = float(kappa.max()) if len(kappa) else 0.0
    return BlowupReport(
        max_kappa=peak,
        classification=label,
        ok=peak > BLOWUP_THRESHOLD and label is not SequenceClass.CAUCHY,
    )


@dataclass(frozen=True)
class Decomposition:
    parts: tuple[np.ndarray, ...]
    labels: np.ndarray
    ambiguous: np.ndarray = field(repr=False)


def decompose_open_set(a_samples, strat: Stratification) -> Decomposition:
    """Split A into A ∩ Z_0, A ∩ Z_1, ... by nearest stratum."""
    points = as_array(a_samples, strat.levels[0].y_samples.shape[1])
    strata = strat.z_sets()
    gaps = np.column_stack([nearest_distance(points, stratum) for stratum in strata])
    labels = np.argmin(gaps, axis=1)
    ordered = np.sort(gaps, axis=1)
    nearest = ordered[:, 0]
    runner_up = ordered[:, 1] if len(strata) > 1 else np.full(len(points), np.inf)
    ambiguous = (nearest > strat.tol) & (runner_up - nearest <= strat.tol)
    if ambiguous.any():
        logger.warning(
            "%s: %d samples sit between strata beyond tolerance %g", strat.map_name, int(ambiguous.sum()), strat.tol
        )
    parts = tuple(points[labels == k] for k in range(len(strata)))
    return Decomposition(parts=parts, labels=labels, ambiguous=ambiguous)


@dataclass(frozen=True)
class CertificateEntry:
    delta_class: SequenceClass
    image_class: SequenceClass
    label: str | None = None

    @property
    def agree(self) -> bool:
        return self.delta_class is self.image_class


@dataclass(frozen=True)
class CertificateReport:
    entries: tuple[CertificateEntry, ...]

    @property
    def agreement(self) -> float:
        if not self.entries:
            return 0.0
        return sum(entry.agree for entry in self.entries) / len(self.entries)

    @property
    def labels_matched(self) -> float:
        labelled = [e for e in self.entries if e.label is not None]
        if not labelled:
            return 1.0
        expected = {"convergent": SequenceClass.CAUCHY, "divergent": SequenceClass.DIVERGENT}
        return sum(expected.get(e.label) is e.delta_class for e in labelled) / len(labelled)


def _check_scope(fmap: MapInstance, cspace: CompactifiedSpace, sampler: EscapeSampler | None, tol: float) -> None:
    if fmap.known_x1 is not None:
        if not fmap.known_x1.is_singleton:
            raise ScopeError(f"{fmap.name}: X1 is not a single point")
        anchor = np.asarray(fmap.known_x1.points[0])
        if np.abs(cspace.anchor[0] - anchor).max() > 1e-9:
            raise ScopeError(f"{fmap.name}: compactification base point is not the X1 point {tuple(anchor)}")
        return
    if sampler is None or not extends_to_infinity(fmap, sampler, tol):
        raise ScopeError(f"{fmap.name}: escapes do not converge to a single image point")


def homeo_certificate(
    fmap: MapInstance,
    cspace: CompactifiedSpace,
    test_sequences,
    window: int,
    tolerance: float,
    labels=None,
    sampler: EscapeSampler | None = None,
    tol: float = 1e-2,
) -> CertificateReport:
    """Compare delta-Cauchy classification of each sequence with classification of its images."""
    _check_scope(fmap, cspace, sampler, tol)
    labels = list(labels) if labels is not None else [None] * len(test_sequences)
    entries = []
    for sequence, label in zip(test_sequences, labels):
        tail = cspace.base.require(as_array(sequence, cspace.base.dimension)[-2 * window - 1 :])
        entries.append(
            CertificateEntry(
                delta_class=cauchy_classify(tail, cspace.delta, window, tolerance),
                image_class=cauchy_classify(fmap.forward(tail), euclidean, window, tolerance),
                label=label,
            )
        )
    report = CertificateReport(tuple(entries))
    logger.debug("%s certificate: %d sequences, agreement %.3f", fmap.name, len(entries), report.agreement)
    return report


def certificate_sequences(cspace: CompactifiedSpace, count: int, length: int, seed: int):
    """Seeded test sequences with analytic labels, half convergent in delta and half divergent.

    Convergent: a + b/m on one branch, or c*m escaping along a branch.
    Divergent: alternating between two separated points, or between an escape and a fixed point.
    """
    if count < 2 or length < 2:
        raise ParameterError("need at least two sequences of length two")
    rng = np.random.default_rng(seed)
    base = cspace.base
    m = np.arange(1, length + 1, dtype=float)
    branches = len(base.branches)
    sequences, labels = [], []
    for i in range(count):
        branch = int(rng.integers(branches))
        if i < count // 2:
            if i % 2 == 0:
                params = rng.uniform(0.5, 5.0) + rng.uniform(0.5, 2.0) / m
            else:
                params = rng.uniform(1.0, 2.0) * m
            sequences.append(base.embed(branch, params))
            labels.append("convergent")
            continue
        other = int(rng.integers(branches))
        if i % 2 == 0:
            p = rng.uniform(0.5, 2.5)
            left, right = base.embed(branch, np.full(length, p)), base.embed(other, np.full(length, p + rng.uniform(0.5, 2.5)))
        else:
            left = base.embed(branch, rng.uniform(1.0, 2.0) * m)
            right = base.embed(other, np.full(length, rng.uniform(1.0, 5.0)))
        sequences.append(np.where((np.arange(length) % 2 == 0)[:, None], left, right))
        labels.append("divergent")
    return sequences, labels
