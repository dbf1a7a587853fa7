"""Source signals and source geometries.

Every signal is causal: it returns exactly 0 for t <= 0.  Signals are
vectorized over both time and source index, ``signal(t, idx)`` broadcasting
``t`` against ``idx``.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import erf

__all__ = [
    "ErfSine",
    "GaussianPulse",
    "CustomSignal",
    "SourceSet",
    "corner_sources",
    "cruller_surface",
    "cruller_sources",
    "random_sources",
    "pulse_source",
    "make_rng",
]


def _per_source(x, n):
    x = np.asarray(x, dtype=float)
    return np.broadcast_to(x, (n,)).copy() if x.ndim == 0 else x


class _Signal:
    n: int

    def _values(self, t, idx):
        raise NotImplementedError

    def __call__(self, t, idx=None):
        t = np.asarray(t, dtype=float)
        if idx is None:
            # all sources, time along the last axis
            idx = np.arange(self.n)
            t, idx = np.broadcast_arrays(t[..., None], idx) if t.ndim else (np.full(self.n, t), idx)
        else:
            t, idx = np.broadcast_arrays(t, np.asarray(idx))
        out = np.where(t > 0.0, self._values(np.where(t > 0.0, t, 0.0), idx), 0.0)
        return out


@dataclass(frozen=True, eq=False)
class ErfSine(_Signal):
    """``a/2 (1 + erf(s (t - t0))) sin(omega (t - t0))``, one parameter set per source."""

    slope: np.ndarray
    t0: np.ndarray
    omega: np.ndarray
    amplitude: np.ndarray

    @classmethod
    def make(cls, n, slope, t0, omega, amplitude=1.0):
        return cls(*(_per_source(v, n) for v in (slope, t0, omega, amplitude)))

    @property
    def n(self):
        return self.slope.size

    def _values(self, t, i):
        return (0.5 * self.amplitude[i] * (1.0 + erf(self.slope[i] * (t - self.t0[i])))
                * np.sin(self.omega[i] * (t - self.t0[i])))

    def bandlimit(self, epsilon):
        return float(self.omega.max() + 2.0 * self.slope.max() * math.sqrt(math.log(1.0 / epsilon)))


@dataclass(frozen=True, eq=False)
class GaussianPulse(_Signal):
    """``a exp(-mu (t - t0)^2)``, one parameter set per source."""

    mu: np.ndarray
    t0: np.ndarray
    amplitude: np.ndarray

    @classmethod
    def make(cls, n, mu, t0, amplitude=1.0):
        return cls(*(_per_source(v, n) for v in (mu, t0, amplitude)))

    @property
    def n(self):
        return self.mu.size

    def _values(self, t, i):
        return self.amplitude[i] * np.exp(-self.mu[i] * (t - self.t0[i]) ** 2)

    def bandlimit(self, epsilon):
        amp = np.abs(self.amplitude).max()
        return float(2.0 * math.sqrt(self.mu.max() * math.log(max(amp / epsilon, math.e))))


@dataclass(frozen=True, eq=False)
class CustomSignal(_Signal):
    """User callable ``func(t, idx)``; causality is still enforced here."""

    func: Callable
    n_sources: int
    band: Optional[float] = None

    @property
    def n(self):
        return self.n_sources

    def _values(self, t, i):
        return np.asarray(self.func(t, i), dtype=float)

    def bandlimit(self, epsilon):
        if self.band is None:
            raise NotImplementedError("custom signal needs an explicit bandlimit K0")
        return float(self.band)


@dataclass(frozen=True, eq=False)
class SourceSet:
    """Point sources at ``positions`` (M, 3) inside [-1, 1]^3 driven by ``signal``."""

    positions: np.ndarray
    signal: _Signal

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be (M, 3), got {pos.shape}")
        if np.abs(pos).max(initial=0.0) > 1.0 + 1e-12:
            raise ValueError("sources must lie in the unit box [-1, 1]^3")
        if self.signal.n != pos.shape[0]:
            raise ValueError(f"signal has {self.signal.n} channels for {pos.shape[0]} sources")
        object.__setattr__(self, "positions", pos)

    def __len__(self):
        return self.positions.shape[0]

    def sigma(self, t, idx=None):
        return self.signal(t, idx)


def make_rng(seed):
    """PCG64 generator; the bit stream is fixed by numpy's documented algorithm."""
    return np.random.Generator(np.random.PCG64(seed))


def corner_sources(signal=None):
    """Eight sources at the corners of the unit box.

    Default signal: ``0.5 (1 + erf(5 (t - 1.5))) sin(30 pi (t - 1.5))`` at
    every corner.
    """
    c = np.array([-1.0, 1.0])
    pos = np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1).reshape(-1, 3)
    if signal is None:
        signal = ErfSine.make(8, slope=5.0, t0=1.5, omega=30 * math.pi, amplitude=1.0)
    return SourceSet(pos, signal)


def cruller_surface(n_u, n_v, r1=0.3, r2=0.6):
    """Tensor grid of points on a fluted torus ("cruller").

    ``x = ((r2 + H cos psi) cos theta, (r2 + H cos psi) sin theta, H sin psi)``
    with ``H = r1 + 0.1 cos(5 theta + 3 psi)``; the defaults just fit in the unit box.
    """
    if n_u < 4 or n_v < 4:
        raise ValueError("cruller grid needs n_u, n_v >= 4")
    th = 2 * math.pi * np.arange(n_u) / n_u
    ps = 2 * math.pi * np.arange(n_v) / n_v
    th, ps = np.meshgrid(th, ps, indexing="ij")
    h = r1 + 0.1 * np.cos(5 * th + 3 * ps)
    rho = r2 + h * np.cos(ps)
    return np.stack([rho * np.cos(th), rho * np.sin(th), h * np.sin(ps)], axis=-1).reshape(-1, 3)


def cruller_sources(n_u=40, n_v=40):
    """Cruller geometry with staggered Gaussian pulses of amplitude 10."""
    pos = cruller_surface(n_u, n_v)
    m = pos.shape[0]
    j = np.arange(1, m + 1)
    sig = GaussianPulse.make(m, mu=30.0 + 20.0 * j / m, t0=2.0 + 5.0 * j / m, amplitude=10.0)
    return SourceSet(pos, sig)


def _uniform_separated(rng, m, min_sep):
    pos = rng.uniform(-1.0, 1.0, size=(m, 3))
    for _ in range(100):
        pairs = cKDTree(pos).query_pairs(min_sep, output_type="ndarray")
        if pairs.size == 0:
            return pos
        redo = np.unique(pairs[:, 1])
        pos[redo] = rng.uniform(-1.0, 1.0, size=(redo.size, 3))
    raise RuntimeError("could not separate random sources")


def random_sources(m, seed=0, min_sep=1e-6):
    """Uniform random sources with ErfSine signals (slope 5, amplitude 1).

    Onsets and frequencies are random permutations of M equispaced values in
    [1.5, 5] and [0, 30 pi].
    """
    rng = make_rng(seed)
    pos = _uniform_separated(rng, m, min_sep)
    t0 = rng.permutation(np.linspace(1.5, 5.0, m))
    om = rng.permutation(np.linspace(0.0, 30 * math.pi, m))
    return SourceSet(pos, ErfSine.make(m, slope=5.0, t0=t0, omega=om, amplitude=1.0))


def pulse_source(mu=50.0, t0=1.0, amplitude=1.0, position=(0.0, 0.0, 0.0)):
    """Single Gaussian pulse, handy for decay and boundary checks."""
    return SourceSet(np.asarray([position], float), GaussianPulse.make(1, mu, t0, amplitude))
