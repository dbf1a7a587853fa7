import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.special import i0

from tkwfp.window import BlendWindow, kb_sinc, phi, phi_dprime, phi_prime, phi_prime_ft, tail_bound

B6 = np.log(1e6)


@pytest.fixture(scope="module")
def w():
    return BlendWindow(1e-6, 0.2)


def _i0_series(x, terms=80):
    # independent power series oracle for I0
    k = np.arange(terms)
    lg = np.cumsum(np.log(np.maximum(k, 1)))
    return float(np.exp(2 * k * np.log(x / 2) - 2 * lg).sum())


def test_shape_parameter_is_log_inverse_tolerance(w):
    assert w.b == np.log(1e6)
    assert BlendWindow(1e-3, 1.0).b == np.log(1e3)


@pytest.mark.parametrize("eps,delta", [(0.0, 0.2), (1.0, 0.2), (1e-6, 0.0), (1e-6, -1.0)])
def test_invalid_window_rejected(eps, delta):
    with pytest.raises(ValueError):
        BlendWindow(eps, delta)


def test_phi_examples(w):
    assert phi(w, -0.1) == 0.0
    assert phi(w, 0.1) == pytest.approx(0.5, abs=1e-13)
    assert phi(w, 0.2) == 1.0


def test_phi_prime_examples(w):
    assert phi_prime(w, 0.3) == 0.0
    peak = B6 * _i0_series(B6) / (0.2 * np.sinh(B6))
    assert phi_prime(w, 0.1) == pytest.approx(peak, rel=1e-12)
    assert phi_prime(w, 0.1) == pytest.approx(14.96, rel=2e-3)
    edge = B6 / (0.2 * np.sinh(B6))
    assert phi_prime(w, 0.0) == pytest.approx(edge, rel=1e-12)
    assert phi_prime(w, 0.0) == pytest.approx(1.38e-4, rel=1e-2)


def test_bessel_normalization_identity():
    val, _ = integrate.quad(lambda v: i0(B6 * np.sqrt(1 - v * v)), -1, 1, epsabs=0, epsrel=1e-13)
    assert val == pytest.approx(2 * np.sinh(B6) / B6, rel=1e-12)


def test_phi_dprime_examples(w):
    assert phi_dprime(w, 0.1) == pytest.approx(0.0, abs=1e-12)
    lim = B6**3 / (0.04 * np.sinh(B6))
    assert phi_dprime(w, 1e-14) == pytest.approx(lim, rel=1e-6)
    assert lim == pytest.approx(0.1318, rel=2e-3)
    assert phi_dprime(w, 0.2 - 1e-14) == pytest.approx(-lim, rel=1e-6)


@pytest.mark.parametrize("t", [0.013, 0.05, 0.0999, 0.137, 0.19])
def test_derivatives_match_finite_differences(w, t):
    h = 1e-5
    fd1 = (phi(w, t + h) - phi(w, t - h)) / (2 * h)
    assert fd1 == pytest.approx(phi_prime(w, t), rel=1e-6, abs=1e-8)
    fd2 = (phi_prime(w, t + h) - phi_prime(w, t - h)) / (2 * h)
    assert fd2 == pytest.approx(phi_dprime(w, t), rel=1e-5, abs=1e-4)


def test_support(w):
    t = np.array([-1.0, -1e-9, 0.2 + 1e-9, 5.0])
    assert np.all(phi_prime(w, t) == 0.0)
    assert np.all(phi_dprime(w, t) == 0.0)
    assert np.all(phi(w, t[:2]) == 0.0) and np.all(phi(w, t[2:]) == 1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-0.5, 0.7))
def test_partition_symmetry(t):
    w = BlendWindow(1e-6, 0.2)
    assert phi(w, t) + phi(w, 0.2 - t) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-12, 1e-2), st.floats(0.01, 3.0))
def test_phi_monotone_and_bounded(eps, delta):
    w = BlendWindow(eps, delta)
    t = np.linspace(-0.1 * delta, 1.1 * delta, 2001)
    y = phi(w, t)
    assert np.all(np.diff(y) >= -1e-13)
    assert y.min() >= -1e-13 and y.max() <= 1 + 1e-13
    assert np.all(phi_prime(w, t) >= 0)


def test_phi_accuracy_against_quadrature(w):
    for t in np.linspace(0.0, 0.2, 17):
        ref, _ = integrate.quad(lambda s: phi_prime(w, s), 0, t, epsabs=1e-14, epsrel=1e-13)
        assert phi(w, t) == pytest.approx(ref, abs=1e-12)


def test_ft_examples(w):
    assert phi_prime_ft(w, 0.0) == pytest.approx(1.0, abs=1e-13)
    v = phi_prime_ft(w, 2 * B6 / 0.2)
    ref = B6 / np.sinh(B6) * np.exp(-1j * B6)
    assert abs(v - ref) < 1e-15
    assert abs(v) == pytest.approx(2.763e-5, rel=1e-3)


def test_ft_matches_quadrature(w):
    rng = np.random.default_rng(3)
    for om in rng.uniform(-4 * B6 / 0.2, 4 * B6 / 0.2, 10):
        re, _ = integrate.quad(lambda t: phi_prime(w, t) * np.cos(om * t), 0, 0.2, limit=400, epsabs=1e-13)
        im, _ = integrate.quad(lambda t: -phi_prime(w, t) * np.sin(om * t), 0, 0.2, limit=400, epsabs=1e-13)
        assert abs(phi_prime_ft(w, om) - (re + 1j * im)) < 1e-10


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e4, 1e4))
def test_ft_bounded_by_one(om):
    assert abs(phi_prime_ft(BlendWindow(1e-6, 0.2), om)) <= 1.0 + 1e-14


def test_kb_sinc_branches():
    assert kb_sinc(np.array([0.0]))[0] == 1.0
    assert kb_sinc(np.array([4.0]))[0] == pytest.approx(np.sin(2) / 2)
    assert kb_sinc(np.array([-4.0]))[0] == pytest.approx(np.sinh(2) / 2)
    assert kb_sinc(np.array([1e-14]))[0] == pytest.approx(1.0)


def test_tail_bound_threshold(w):
    om, _ = tail_bound(w, 1.25)
    assert om == pytest.approx(2 * B6 / (0.2 * 0.6), rel=1e-12)
    assert om == pytest.approx(230.26, abs=0.01)
    om_inf, _ = tail_bound(w, 1e8)
    assert om_inf == pytest.approx(2 * B6 / 0.2, rel=1e-12)


@pytest.mark.parametrize("theta", [1.0, 0.5, -2.0])
def test_tail_bound_rejects_small_theta(w, theta):
    with pytest.raises(ValueError):
        tail_bound(w, theta)


@pytest.mark.parametrize("eps", [1e-3, 1e-6, 1e-9])
@pytest.mark.parametrize("theta", [1.1, 1.5, 4.0])
def test_tail_bound_holds(eps, theta):
    w = BlendWindow(eps, 0.2)
    om_min, bound = tail_bound(w, theta)
    om = om_min * (1 + np.random.default_rng(0).exponential(3.0, 1000))
    assert np.all(np.abs(phi_prime_ft(w, om)) < bound(om))
    assert np.all(np.abs(phi_prime_ft(w, -om)) < bound(-om))
