import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from lusin.catalog import compactified
from lusin.compactification import (
    Balls,
    CompactifiedSpace,
    Exhaustion,
    RayIntervals,
    delta,
    escape_convergence_check,
    g_value,
    h_value,
    net_coverage,
    total_boundedness_net,
    validate_exhaustion,
)
from lusin.errors import DepthExhaustedError, DescriptorError, ParameterError
from lusin.metric import Point, check_metric_axioms
from tests.conftest import line_points


def brute_force_g(x: float, n_max: int = 1000) -> float:
    n = np.arange(1, n_max + 1, dtype=float)
    return float(np.max(1.0 / n - np.clip(x - n, 0.0, None)))


def test_spot_values_on_the_half_line(half_line):
    assert g_value(half_line, [2.5]) == pytest.approx(1 / 3, abs=1e-12)
    assert h_value(half_line, [10.2]) == pytest.approx(1 / 11, abs=1e-12)
    assert h_value(half_line, [0.2]) == pytest.approx(0.2, abs=1e-12)
    assert delta(half_line, [2.5], [10.2]) == pytest.approx(14 / 33, abs=1e-12)


@pytest.mark.parametrize("m", [2, 10, 100, 10_000])
def test_escape_points_approach_the_anchor(half_line, m):
    assert delta(half_line, [float(m)], [0.0]) == pytest.approx(1 / m, abs=1e-12)


def test_anchor_values(half_line, two_ray):
    for cspace in (half_line, two_ray):
        assert g_value(cspace, cspace.anchor) == cspace.exhaustion.radii[0]
        assert h_value(cspace, cspace.anchor) == 0.0


def test_second_origin_of_two_ray(two_ray):
    assert delta(two_ray, [0.0, 0.0], [0.0, 2.0]) == pytest.approx(1.0)


def test_ball_regions_are_measured_within_the_branches(two_ray):
    # the ball of radius 3 around (0, 0) meets the upper ray in x <= sqrt(5)
    balls = Balls(np.zeros((1, 2)), [3.0])
    gaps = balls.distances(two_ray.base, np.array([[5.0, 2.0], [1.0, 2.0], [5.0, 0.0]]), 0, 1)[:, 0]
    np.testing.assert_allclose(gaps, [5.0 - np.sqrt(5.0), 0.0, 2.0])
    grid = balls.grid(two_ray.base, 1, 0.5)
    assert np.all(two_ray.base.contains(grid))
    assert np.linalg.norm(grid, axis=1).max() == pytest.approx(3.0)


def test_ball_missing_every_branch_is_infinitely_far(two_ray):
    balls = Balls([[0.0, -10.0]], [1.0])
    assert np.isinf(balls.distances(two_ray.base, np.array([[1.0, 0.0]]), 0, 1)[0, 0])
    assert len(balls.grid(two_ray.base, 1, 0.5)) == 0


@hsettings(max_examples=60, deadline=None)
@given(st.floats(min_value=0.0, max_value=900.0))
def test_truncated_g_matches_brute_force(x):
    half_line = compactified("half-line")
    assert g_value(half_line, [x]) == pytest.approx(brute_force_g(x), abs=1e-12)


@hsettings(max_examples=60, deadline=None)
@given(st.floats(min_value=0.0, max_value=5e3), st.floats(min_value=0.0, max_value=5e3))
def test_h_is_one_lipschitz_and_delta_is_dominated(x, y):
    half_line = compactified("half-line")
    assert abs(h_value(half_line, [x]) - h_value(half_line, [y])) <= abs(x - y) + 1e-12
    assert delta(half_line, [x], [y]) <= abs(x - y)
    assert delta(half_line, [x], [y]) == delta(half_line, [y], [x])


def test_delta_satisfies_the_axioms_on_samples(half_line, two_ray):
    for cspace in (half_line, two_ray):
        samples = cspace.base.sample(150, seed=3)
        assert check_metric_axioms(cspace.delta, samples, 1e-9).ok


def test_g_is_positive_everywhere(real_line):
    samples = real_line.base.sample(500, seed=9)
    assert np.all(real_line.g(samples) > 0)


def test_standard_exhaustion_validates(half_line):
    assert validate_exhaustion(Exhaustion.standard(2000), half_line.base).ok


def test_broken_exhaustions_report_their_conditions(half_line):
    n = np.arange(1, 6, dtype=float)
    frozen = Exhaustion(RayIntervals(np.ones(5)), 1.0 / n, 5)
    assert {"nested", "c"} <= validate_exhaustion(frozen, half_line.base).conditions()

    flat = Exhaustion(RayIntervals(n), np.full(5, 0.5), 5)
    assert "b" in validate_exhaustion(flat, half_line.base).conditions()

    wide = Exhaustion(RayIntervals(n), np.full(5, 3.0) / n, 5)
    assert "a" in validate_exhaustion(wide, half_line.base).conditions()


def test_two_ray_radii_must_not_reach_across_branches(two_ray):
    n = np.arange(1, 2001, dtype=float)
    wide = Exhaustion(RayIntervals(5 * n), 2.5 / n, 2000)
    assert "a" in validate_exhaustion(wide, two_ray.base).conditions()


def test_invalid_compactifications_are_refused(half_line):
    with pytest.raises(DescriptorError):
        CompactifiedSpace(half_line.base, Point((0.0,)), Exhaustion(RayIntervals(np.ones(5)), np.ones(5), 5))
    with pytest.raises(DescriptorError):
        CompactifiedSpace(half_line.base, Point((5.0,)), Exhaustion.standard(2000))
    with pytest.raises(DescriptorError):
        Exhaustion(RayIntervals([1.0, 2.0]), [1.0, -1.0], 2)


def test_depth_exhausted_reports_bounds(half_line):
    short = CompactifiedSpace(half_line.base, Point((0.0,)), Exhaustion.standard(2000))
    with pytest.raises(DepthExhaustedError) as info:
        short.g(line_points([5000.0]))
    assert info.value.upper == pytest.approx(1 / 2000)
    assert "g in [" in str(info.value)
    with pytest.raises(DepthExhaustedError):
        short.n_epsilon(1e-4)


@pytest.mark.parametrize("eps, n_eps", [(0.5, 3), (0.1, 11), (0.02, 51)])
def test_n_epsilon(half_line, eps, n_eps):
    assert half_line.n_epsilon(eps) == n_eps


def test_nets_cover_samples_and_grow(half_line, two_ray):
    for cspace in (half_line, two_ray):
        samples = cspace.base.sample(300, seed=21)
        sizes = []
        for eps in (0.5, 0.1, 0.02):
            net = total_boundedness_net(cspace, eps, check_samples=samples)
            assert net_coverage(cspace, net, samples) < eps
            assert any(np.array_equal(row, cspace.anchor[0]) for row in net)
            sizes.append(len(net))
        assert sizes == sorted(sizes)


def test_net_needs_positive_epsilon(half_line):
    with pytest.raises(ParameterError):
        total_boundedness_net(half_line, 0.0)


def test_escape_converges_and_fixed_point_does_not(half_line, real_line):
    m = np.arange(1, 10_001, dtype=float)
    for cspace in (half_line, real_line):
        report = escape_convergence_check(cspace, cspace.base.embed(0, m), 1e-3)
        assert report.converges_to_x0
        assert report.delta_to_x0[-1] == pytest.approx(1e-4)
    fixed = escape_convergence_check(half_line, line_points(np.ones(100)), 1e-3)
    assert not fixed.converges_to_x0
    assert fixed.delta_to_x0[0] == pytest.approx(1.0)
