import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import pdist

from tkwfp.scenarios import (
    CustomSignal,
    ErfSine,
    GaussianPulse,
    SourceSet,
    corner_sources,
    cruller_sources,
    cruller_surface,
    make_rng,
    pulse_source,
    random_sources,
)


def test_corner_geometry():
    src = corner_sources()
    assert len(src) == 8
    pos = {tuple(p) for p in src.positions}
    assert pos == {tuple(-np.array(p)) for p in pos}
    assert np.all(np.abs(src.positions) == 1.0)


def test_corner_signal_form():
    src = corner_sources()
    t = np.array([1.2, 1.5, 2.0, 3.3])
    ref = 0.5 * (1 + np.array([math.erf(5 * (x - 1.5)) for x in t])) * np.sin(30 * np.pi * (t - 1.5))
    assert np.allclose(src.sigma(t[:, None], np.arange(8)[None, :]), ref[:, None], atol=1e-14)


def test_cruller_origin_point_and_fit():
    pts = cruller_surface(4, 4)
    assert np.allclose(pts[0], [1.0, 0.0, 0.0], atol=1e-15)
    big = cruller_surface(64, 64)
    assert big.shape == (64 * 64, 3)
    assert np.abs(big).max() <= 1.0 + 1e-15


@pytest.mark.parametrize("nu,nv", [(3, 10), (10, 2)])
def test_cruller_minimum_grid(nu, nv):
    with pytest.raises(ValueError):
        cruller_surface(nu, nv)


def test_cruller_sources_signals():
    src = cruller_sources(8, 8)
    assert len(src) == 64
    # staggered pulses: peak of the last source is at t0 = 7 with amplitude 10
    assert src.sigma(7.0, 63) == pytest.approx(10.0)
    assert abs(src.sigma(0.0 + 1e-9, 0)) < 1e-6 * 10


def test_random_sources_deterministic_and_separated():
    a = random_sources(500, seed=3)
    b = random_sources(500, seed=3)
    c = random_sources(500, seed=4)
    assert np.array_equal(a.positions, b.positions)
    assert not np.array_equal(a.positions, c.positions)
    assert np.all(np.abs(a.positions) <= 1.0)
    t = np.linspace(0, 6, 7)
    assert np.array_equal(a.sigma(t[:, None], np.arange(500)[None]), b.sigma(t[:, None], np.arange(500)[None]))


def test_random_sources_min_separation_large():
    src = random_sources(10_000, seed=0)
    from scipy.spatial import cKDTree

    d, _ = cKDTree(src.positions).query(src.positions, k=2)
    assert d[:, 1].min() >= 1e-6


def test_random_separation_is_enforced():
    src = random_sources(200, seed=1, min_sep=0.1)
    assert pdist(src.positions).min() >= 0.1


def test_random_signal_parameters():
    src = random_sources(11, seed=2)
    s = src.signal
    assert np.allclose(np.sort(s.t0), np.linspace(1.5, 5.0, 11))
    assert np.allclose(np.sort(s.omega), np.linspace(0.0, 30 * np.pi, 11))


def test_pcg64_stream():
    assert make_rng(5).bit_generator.__class__.__name__ == "PCG64"
    assert make_rng(5).integers(0, 2**62) == np.random.Generator(np.random.PCG64(5)).integers(0, 2**62)


def test_erf_sine_small_at_origin():
    for t0 in (1.5, 2.0, 5.0):
        sig = ErfSine.make(1, 5.0, t0, 30 * np.pi)
        assert abs(sig(1e-12, 0)) < 1e-6


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 0))
def test_causality_floor(t):
    sig = GaussianPulse.make(3, mu=[1.0, 5.0, 50.0], t0=[0.0, 0.1, 0.2])
    assert np.all(sig(t) == 0.0)
    assert np.all(CustomSignal(lambda t, idx: np.ones_like(t), 2)(t) == 0.0)


def test_gaussian_bandlimit_formula():
    for mu in (1.0, 50.0, 400.0):
        g = GaussianPulse.make(1, mu, 3.0, 10.0)
        assert g.bandlimit(1e-6) == pytest.approx(2 * math.sqrt(mu * math.log(10 / 1e-6)))
    # the Fourier transform at the bandlimit is at the eps level of its peak
    mu = 50.0
    k0 = GaussianPulse.make(1, mu, 3.0, 1.0).bandlimit(1e-6)
    assert math.exp(-k0**2 / (4 * mu)) == pytest.approx(1e-6, rel=1e-9)


def test_signal_shapes():
    sig = GaussianPulse.make(4, mu=50.0, t0=1.0)
    assert sig(1.0).shape == (4,)
    assert sig(np.array([0.5, 1.0])).shape == (2, 4)
    assert sig(np.array([0.5, 1.0]), np.array([0, 3])).shape == (2,)


def test_source_set_validation():
    with pytest.raises(ValueError):
        SourceSet(np.array([[1.5, 0, 0]]), GaussianPulse.make(1, 1.0, 1.0))
    with pytest.raises(ValueError):
        SourceSet(np.zeros((2, 3)), GaussianPulse.make(3, 1.0, 1.0))
    with pytest.raises(ValueError):
        SourceSet(np.zeros((2, 2)), GaussianPulse.make(2, 1.0, 1.0))


def test_pulse_source():
    src = pulse_source(mu=50.0, t0=1.0, amplitude=2.0)
    assert src.positions.shape == (1, 3)
    assert src.sigma(1.0, 0) == pytest.approx(2.0)
