import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tkwfp.nudft import (
    TransformPlan,
    direct_modes_to_points,
    direct_points_to_modes,
    kernel_params,
    modes_to_points,
    points_to_modes,
)
from tkwfp.spectrum import ModeGrid

DK = 1.1


def rel_l2(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def random_case(rng, m, n, d=3):
    pts = rng.uniform(-1, 1, (m, d))
    s = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    cube = rng.standard_normal((n,) * d) + 1j * rng.standard_normal((n,) * d)
    return pts, s, cube


def naive_type1(pts, s, n, dk):
    h = (n - 1) // 2
    ax = np.arange(-h, h + 1)
    k = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1).reshape(-1, 3) * dk
    return (np.exp(1j * k @ pts.T) @ s).reshape(n, n, n)


def test_kernel_width_and_shape():
    w, beta = kernel_params(1e-6)
    assert w == 8
    assert beta > 0
    assert kernel_params(1e-9)[0] == 11


def test_single_point_at_origin():
    plan = TransformPlan(np.zeros((1, 3)), 9, DK)
    cube = plan.points_to_modes(np.array([2.5 - 1j]))
    assert np.allclose(cube, 2.5 - 1j, rtol=1e-6)


def test_zero_mode_is_total_strength():
    rng = np.random.default_rng(0)
    pts, s, _ = random_case(rng, 37, 9)
    cube = points_to_modes(TransformPlan(pts, 9, DK), s)
    assert cube[4, 4, 4] == pytest.approx(s.sum(), rel=1e-6)


def test_direct_sum_matches_naive():
    rng = np.random.default_rng(1)
    pts, s, _ = random_case(rng, 13, 7)
    assert np.allclose(direct_points_to_modes(pts, s, 7, DK), naive_type1(pts, s, 7, DK), atol=1e-12)


def test_phase_conventions():
    y = np.array([[0.3, -0.2, 0.7]])
    cube = direct_points_to_modes(y, np.array([1.0]), 3, DK)
    # n = (1, 0, 0) sits at index (2, 1, 1): exp(+i dk y_1)
    assert cube[2, 1, 1] == pytest.approx(np.exp(1j * DK * 0.3))
    c = np.zeros((3, 3, 3), complex)
    c[2, 1, 1] = 1.0
    assert direct_modes_to_points(y, c, DK)[0] == pytest.approx(np.exp(-1j * DK * 0.3))


def test_hundred_points_n25():
    rng = np.random.default_rng(2)
    pts, s, _ = random_case(rng, 100, 25)
    plan = TransformPlan(pts, 25, DK, 1e-6)
    assert rel_l2(plan.points_to_modes(s), direct_points_to_modes(pts, s, 25, DK)) <= 1e-6


def test_constant_mode_reaches_every_point():
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1, 1, (20, 3))
    c = np.zeros((9, 9, 9), complex)
    c[4, 4, 4] = 3.0 + 1j
    assert np.allclose(modes_to_points(TransformPlan(pts, 9, DK), c), 3.0 + 1j, rtol=1e-6)


def test_round_trip_single_source_far_targets():
    y = np.array([[0.1, 0.2, -0.3]])
    cube = TransformPlan(y, 25, DK).points_to_modes(np.array([1.0]))
    x = np.array([[1.0, -1.0, 1.0], [-0.9, 0.95, -1.0], [0.7, 0.7, 0.7]])
    got = TransformPlan(x, 25, DK).modes_to_points(cube)
    ref = direct_modes_to_points(x, direct_points_to_modes(y, np.array([1.0]), 25, DK), DK)
    assert rel_l2(got, ref) <= 1e-6


@pytest.mark.parametrize("eps", [1e-3, 1e-6, 1e-9])
def test_adjoint_identity(eps):
    rng = np.random.default_rng(4)
    pts, s, cube = random_case(rng, 50, 9)
    plan = TransformPlan(pts, 9, DK, eps)
    lhs = np.vdot(s, plan.modes_to_points(cube))
    rhs = np.conj(np.vdot(cube.ravel(), plan.points_to_modes(s).ravel()))
    assert abs(lhs - rhs) <= 10 * eps * np.linalg.norm(s) * np.linalg.norm(cube)


def test_linearity():
    rng = np.random.default_rng(5)
    pts, s, cube = random_case(rng, 30, 9)
    _, s2, cube2 = random_case(rng, 30, 9)
    plan = TransformPlan(pts, 9, DK)
    a, b = 0.7 - 2j, 1.3
    lhs = plan.points_to_modes(a * s + b * s2)
    assert np.allclose(lhs, a * plan.points_to_modes(s) + b * plan.points_to_modes(s2), rtol=1e-13, atol=1e-12)
    lhs = plan.modes_to_points(a * cube + b * cube2)
    assert np.allclose(lhs, a * plan.modes_to_points(cube) + b * plan.modes_to_points(cube2), rtol=1e-13, atol=1e-11)


def test_two_dimensional_plan():
    rng = np.random.default_rng(6)
    pts, s, cube = random_case(rng, 200, 25, d=2)
    plan = TransformPlan(pts, 25, DK, 1e-6)
    assert rel_l2(plan.points_to_modes(s), direct_points_to_modes(pts, s, 25, DK)) <= 1e-6
    assert rel_l2(plan.modes_to_points(cube), direct_modes_to_points(pts, cube, DK)) <= 1e-6


def test_masked_plan_zeroes_outside_ball():
    g = ModeGrid(dk=DK, N=11, K=4.0)
    rng = np.random.default_rng(7)
    pts, s, cube = random_case(rng, 40, 11)
    plan = TransformPlan.for_grid(pts, g, 1e-6)
    out = plan.points_to_modes(s)
    assert np.all(out[~g.mask] == 0)
    ref = direct_modes_to_points(pts, np.where(g.mask, cube, 0), DK)
    assert rel_l2(plan.modes_to_points(cube), ref) <= 1e-6


def test_domain_errors():
    g = ModeGrid(dk=DK, N=11, K=4.0)
    with pytest.raises(ValueError, match="unit box"):
        TransformPlan.for_grid(np.array([[1.2, 0, 0]]), g)
    with pytest.raises(ValueError, match="periodic"):
        TransformPlan(np.array([[3.0, 0, 0]]), 11, DK)
    with pytest.raises(ValueError):
        TransformPlan(np.zeros((2, 3)), 10, DK)
    plan = TransformPlan(np.zeros((2, 3)), 9, DK)
    with pytest.raises(ValueError):
        plan.points_to_modes(np.ones(3))
    with pytest.raises(ValueError):
        plan.modes_to_points(np.ones((7, 7, 7)))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 60), st.sampled_from([5, 9, 15]), st.integers(0, 2**32 - 1))
def test_fast_matches_direct_property(m, n, seed):
    rng = np.random.default_rng(seed)
    pts, s, cube = random_case(rng, m, n)
    plan = TransformPlan(pts, n, DK, 1e-6)
    direct = TransformPlan(pts, n, DK, 1e-6, method="direct")
    assert rel_l2(plan.points_to_modes(s), direct.points_to_modes(s)) <= 1e-6
    assert rel_l2(plan.modes_to_points(cube), direct.modes_to_points(cube)) <= 1e-6
