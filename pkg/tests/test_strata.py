import numpy as np
import pytest

from lusin.catalog import catalog_map, compactified
from lusin.errors import BoundaryContactError, ParameterError, ResolutionError, ScopeError
from lusin.maps import EscapeSampler
from lusin.metric import SequenceClass, check_metric_axioms
from lusin.strata import (
    StratumMetric,
    boundary_blowup_check,
    certificate_sequences,
    chain_invariants,
    decompose_open_set,
    density_proxy,
    homeo_certificate,
    nowhere_density_proxy,
    stratify,
    stratum_metric,
    stratum_metric_eval,
)
from tests.conftest import line_points


TOL = 1e-2


def run_stratify(fmap, depth=4, samples=1000, seed=7, **kwargs):
    domain = fmap.domain.sample(samples, seed)
    return stratify(fmap, depth, TOL, domain, EscapeSampler.for_map(fmap), **kwargs)


def test_identity_is_a_single_stratum(identity):
    strat = run_stratify(identity)
    assert strat.terminated
    assert len(strat.levels) == 1
    assert len(strat.levels[0].limits) == 0
    assert len(strat.z_sets()) == 1


def test_lollipop_has_two_levels(lollipop):
    strat = run_stratify(lollipop)
    assert strat.terminated
    assert len(strat.levels) == 2
    first = strat.levels[0]
    np.testing.assert_allclose(first.limits, [[1.0, 0.0]], atol=TOL)
    assert first.x_next.max() < 0.01
    assert strat.levels[1].branches == ()


def test_lollipop_cut_short_keeps_the_remainder(lollipop):
    strat = run_stratify(lollipop, depth=1)
    assert not strat.terminated
    parts = strat.z_sets()
    assert len(parts) == 2
    assert len(parts[-1]) == strat.levels[0].next_mask.sum()


def test_spiral_lollipop_has_three_levels(spiral):
    strat = run_stratify(spiral)
    assert strat.terminated
    assert len(strat.levels) == 3
    # the open spiral arm is the first stratum, the circle without its start the second
    first, second = strat.levels[0], strat.levels[1]
    assert np.all(np.linalg.norm(first.z_samples, axis=1) > 1.0 + TOL)
    np.testing.assert_allclose(np.linalg.norm(second.y_samples, axis=1), 1.0, atol=1e-9)
    assert second.branches == (1,)
    np.testing.assert_allclose(second.y_next, np.tile([1.0, 0.0], (len(second.y_next), 1)), atol=2 * TOL)
    report = chain_invariants(strat)
    assert report.ok


def test_strata_proxies(spiral, lollipop):
    for fmap in (spiral, lollipop):
        strat = run_stratify(fmap)
        assert density_proxy(strat).ok
        assert nowhere_density_proxy(strat, seed=1).ok


def test_too_few_samples_is_a_resolution_error(lollipop):
    with pytest.raises(ResolutionError) as info:
        run_stratify(lollipop, samples=5, min_level_samples=10)
    assert info.value.level == 0
    assert str(info.value).startswith("level 0:")


def test_stratify_argument_checks(lollipop):
    with pytest.raises(ParameterError):
        run_stratify(lollipop, depth=0)


def test_stratum_metric_spot_value(lollipop):
    sm = StratumMetric(level=0, boundary_samples=line_points([0.0]))
    y1, y2 = lollipop.forward(line_points([1.0, 2.0]))
    assert stratum_metric_eval(sm, lollipop, [y1], [y2]) == pytest.approx(1.5)
    with pytest.raises(BoundaryContactError):
        sm.kappa(line_points([0.0]))


def test_stratum_metric_without_boundary_is_the_base_distance():
    sm = StratumMetric(level=0, boundary_samples=np.empty((0, 1)))
    np.testing.assert_allclose(sm.domain_metric(line_points([1.0]), line_points([4.0])), [[3.0]])


def test_stratum_metrics_are_metrics(spiral):
    strat = run_stratify(spiral)
    for k, level in enumerate(strat.levels):
        if len(level.z_samples) < 3:
            continue
        sm = stratum_metric(strat, k, spiral)
        z = level.z_samples[:120]
        assert check_metric_axioms(sm.image_metric(spiral), z, 1e-9).ok
        preimages = spiral.inverse(z)
        dominated = sm.image_metric(spiral)(z, z) - spiral.domain.distance(preimages, preimages)
        assert dominated.min() >= -1e-9
    with pytest.raises(ParameterError):
        stratum_metric(strat, len(strat.levels), spiral)


def test_boundary_blowup(lollipop):
    sm = StratumMetric(level=0, boundary_samples=line_points([0.0]))
    m = np.arange(1, 2001, dtype=float)
    report = boundary_blowup_check(sm, lollipop, lollipop.forward(line_points(1.0 / m)), 20, 1e-3)
    assert report.max_kappa == pytest.approx(2000.0)
    assert report.classification is SequenceClass.DIVERGENT
    assert report.ok


def test_decomposition_labels_by_nearest_stratum(spiral):
    strat = run_stratify(spiral)
    points = np.vstack([strat.levels[0].z_samples[:5], strat.levels[1].z_samples[:5]])
    decomposition = decompose_open_set(points, strat)
    np.testing.assert_array_equal(decomposition.labels, [0] * 5 + [1] * 5)
    assert not decomposition.ambiguous.any()
    assert sum(len(part) for part in decomposition.parts) == 10


def test_neighbourhood_of_the_gluing_point_meets_every_stratum(spiral):
    strat = run_stratify(spiral)
    images = strat.levels[0].y_samples
    near = images[np.linalg.norm(images - [1.0, 0.0], axis=1) < 0.3]
    decomposition = decompose_open_set(near, strat)
    assert len(decomposition.parts) == 3
    assert all(len(part) > 0 for part in decomposition.parts)
    assert sum(len(part) for part in decomposition.parts) == len(near)


@pytest.mark.parametrize("name, space", [("lollipop", "half-line"), ("figure-eight", "real-line")])
def test_homeomorphism_certificate(name, space):
    fmap, cspace = catalog_map(name), compactified(space)
    sequences, labels = certificate_sequences(cspace, 50, 10_000, seed=7)
    assert labels.count("convergent") == labels.count("divergent") == 25
    report = homeo_certificate(fmap, cspace, sequences, 20, 1e-3, labels=labels)
    assert report.agreement == 1.0
    assert report.labels_matched == 1.0


def test_certificate_refuses_out_of_scope_maps(spiral, identity):
    with pytest.raises(ScopeError):
        homeo_certificate(spiral, compactified("two-ray"), [], 20, 1e-3)
    with pytest.raises(ScopeError):
        homeo_certificate(identity, compactified("real-line"), [], 20, 1e-3)


def test_certificate_sequences_are_seeded(half_line):
    first, _ = certificate_sequences(half_line, 6, 100, seed=3)
    again, _ = certificate_sequences(half_line, 6, 100, seed=3)
    assert all(np.array_equal(a, b) for a, b in zip(first, again))
    with pytest.raises(ParameterError):
        certificate_sequences(half_line, 1, 100, seed=3)
