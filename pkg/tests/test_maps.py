import numpy as np
import pytest

from lusin.catalog import catalog_map
from lusin.errors import DescriptorError, DomainError, InconclusiveError, MapError, ParameterError
from lusin.forms import make_form
from lusin.maps import (
    EscapeSampler,
    MapInstance,
    PullbackCloud,
    bijection_defect,
    continuity_defect,
    default_radius_schedule,
    discontinuity_set,
    escape_limit_set,
    extends_to_infinity,
    image_compactness_check,
    proper_neighborhood_test,
)
from tests.conftest import line_points


TOL = 1e-2


def sampler_for(fmap):
    return EscapeSampler.for_map(fmap)


@pytest.mark.parametrize("name", ["identity", "lollipop", "figure-eight", "spiral-lollipop"])
def test_catalog_maps_are_continuous_bijections(name):
    fmap = catalog_map(name)
    samples = fmap.domain.sample(400, seed=1)
    assert bijection_defect(fmap, samples) < 1e-6
    assert continuity_defect(fmap, step=1e-2, span=20.0) <= 1.0 + 1e-9


def test_spiral_gluing_point_inverts_to_the_circle_origin(spiral):
    branch, params, residuals = spiral.preimage([[1.0, 0.0]])
    assert (branch[0], params[0], residuals[0]) == (1, 0.0, 0.0)
    np.testing.assert_allclose(spiral.inverse([1.0, 0.0]), [[0.0, 2.0]])
    origins = spiral.domain.origins()
    np.testing.assert_allclose(spiral.inverse(spiral.forward(origins)), origins)


def test_figure_eight_origin_is_its_own_preimage(figure_eight):
    np.testing.assert_allclose(figure_eight.inverse(figure_eight.forward(line_points([0.0]))), [[0.0]])
    with pytest.raises(MapError):
        figure_eight.inverse([[0.5, 0.5]])


def test_lollipop_closes_on_its_start(lollipop):
    np.testing.assert_allclose(lollipop.forward(line_points([0.0])), [[1.0, 0.0]])
    with pytest.raises(MapError):
        lollipop.inverse([[0.0, 0.0]])
    with pytest.raises(DomainError):
        lollipop.forward(line_points([-1.0]))


def test_map_needs_one_form_per_branch(lollipop):
    with pytest.raises(DescriptorError):
        MapInstance("broken", lollipop.domain, (lollipop.forms[0], lollipop.forms[0]))
    with pytest.raises(DescriptorError):
        MapInstance("broken", lollipop.domain, lollipop.forms, escape_phases=(0,))


def test_mixed_codomains_are_refused(identity):
    forms = (make_form("affine", [0.0, 1.0]), make_form("figure_eight", [-1.0]))
    with pytest.raises(DescriptorError):
        MapInstance("mixed", identity.domain, forms)


def test_escape_schedule():
    sampler = EscapeSampler((0,), (4,), factor=1.5, steps=6)
    np.testing.assert_array_equal(sampler.schedule, [1, 2, 3, 4, 6, 8])
    params = sampler.parameters(0)
    assert params.shape == (4, 6)
    np.testing.assert_allclose(params[:, 0], [1.0, 1.25, 1.5, 1.75])
    assert sampler.restrict([]).branch_ids == ()
    with pytest.raises(ParameterError):
        EscapeSampler((0,), (4,), factor=1.0)


def test_identity_has_no_escape_limits(identity):
    assert len(escape_limit_set(identity, sampler_for(identity), TOL)) == 0
    assert not extends_to_infinity(identity, sampler_for(identity), TOL)


@pytest.mark.parametrize("name, limit", [("lollipop", [1.0, 0.0]), ("figure-eight", [0.0, 0.0])])
def test_single_point_escape_limits(name, limit):
    fmap = catalog_map(name)
    limits = escape_limit_set(fmap, sampler_for(fmap), TOL)
    assert limits.shape == (1, 2)
    np.testing.assert_allclose(limits[0], limit, atol=TOL)
    assert extends_to_infinity(fmap, sampler_for(fmap), TOL)


def test_spiral_limits_fill_the_circle(spiral):
    limits = escape_limit_set(spiral, sampler_for(spiral), TOL)
    assert len(limits) > 50
    np.testing.assert_allclose(np.linalg.norm(limits, axis=1), 1.0, atol=TOL)
    angles = np.sort(np.mod(np.arctan2(limits[:, 1], limits[:, 0]), 2 * np.pi))
    gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * np.pi]]))
    assert gaps.max() < 0.05
    assert not extends_to_infinity(spiral, sampler_for(spiral), TOL)


def test_discontinuity_set_of_the_lollipop(lollipop):
    samples = lollipop.domain.sample(500, seed=2)
    limits = escape_limit_set(lollipop, sampler_for(lollipop), TOL)
    estimate = discontinuity_set(lollipop, limits, samples, TOL)
    assert len(estimate.x1) >= 1
    # only the start of the ray maps near (1, 0); the top sample stays outside the band
    assert estimate.x1.max() < 0.01
    assert np.all(np.linalg.norm(estimate.y1 - [1.0, 0.0], axis=1) <= TOL)


def test_proper_neighbourhoods_match_the_limit_set(lollipop):
    samples = lollipop.domain.sample(500, seed=3)
    cloud = PullbackCloud.build(lollipop, samples, sampler_for(lollipop))
    schedule = default_radius_schedule(TOL)
    assert not proper_neighborhood_test(lollipop, [[1.0, 0.0]], schedule, 1e4, cloud)
    assert proper_neighborhood_test(lollipop, [[-1.0, 0.0]], schedule, 1e4, cloud)


def test_proper_neighbourhood_argument_checks(lollipop):
    cloud = PullbackCloud.build(lollipop, lollipop.domain.sample(50, seed=3), None)
    with pytest.raises(ParameterError):
        proper_neighborhood_test(lollipop, [[1.0, 0.0]], (0.01, 0.02), 1e4, cloud)
    with pytest.raises(DomainError):
        proper_neighborhood_test(lollipop, [[1.0, 0.0, 0.0]], (0.02, 0.01), 1e4, cloud)
    with pytest.raises(InconclusiveError):
        proper_neighborhood_test(lollipop, [[5.0, 5.0]], (0.02, 0.01), 1e4, cloud)


def test_image_compactness(lollipop, figure_eight, spiral):
    for fmap in (lollipop, figure_eight):
        samples = fmap.domain.sample(300, seed=4)
        report = image_compactness_check(fmap, sampler_for(fmap), samples, 0.02, TOL)
        assert report.compact
        assert report.net_size > 0
        assert report.tail_gap < 0.02
    report = image_compactness_check(spiral, sampler_for(spiral), spiral.domain.sample(300, seed=4), 0.02, TOL)
    assert not report.compact
    assert report.limit is None
