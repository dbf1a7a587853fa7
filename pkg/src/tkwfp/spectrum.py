"""Scheme parameter selection and the Fourier mode grid."""

import math
import warnings
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

__all__ = [
    "SchemeParams",
    "ModeGrid",
    "select_params",
    "estimate_bandlimit",
    "build_grid",
    "three_square_numbers",
]

SQRT3 = math.sqrt(3.0)


class UnderResolvedWarning(UserWarning):
    """The time step leaves too little Nyquist band for the signals."""


@dataclass(frozen=True)
class SchemeParams:
    """All derived parameters of one scheme instance.

    ``A`` (history horizon) is stored together with ``nA = A/dt`` since the
    annihilation window samples the step grid at ``t - A + delta``.
    """

    epsilon: float
    gamma: float
    dt: float
    K0: float
    T: float
    b: float
    W: int
    delta: float
    nA: int
    A: float
    dk: float
    K: float
    N: int
    Nt: int

    @property
    def t_final(self):
        return self.Nt * self.dt

    def with_dk(self, dk):
        """Same scheme on a different mode spacing (grid size follows)."""
        return replace(self, dk=dk, N=_grid_size(self.K, dk))


def _ceil(x):
    # guards against 18.000000000000004 -> 19
    return math.ceil(x - 1e-9 * max(1.0, abs(x)))


def _grid_size(K, dk):
    n = math.ceil(2.0 * K / dk - 1e-9)
    return n if n % 2 else n + 1


def select_params(epsilon, gamma, dt, K0, T, *, K=None, fixed_delta=None):
    """Derive (W, delta, A, dk, K, N, Nt) from tolerance, Nyquist fraction and step.

    ``K`` overrides the cutoff (the convergence sweeps use ``pi/dt``).
    ``fixed_delta`` pins the blending width; W is then the nearest integer
    number of steps so that the window still ends on the step grid.
    """
    errors = []
    if not 0.0 < epsilon < 1.0:
        errors.append(f"epsilon={epsilon} not in (0, 1)")
    if not 0.0 < gamma < 1.0:
        errors.append(f"gamma={gamma} not in (0, 1)")
    if not dt > 0.0:
        errors.append(f"dt={dt} must be positive")
    if not K0 >= 0.0:
        errors.append(f"K0={K0} must be non-negative")
    if not T > 0.0:
        errors.append(f"T={T} must be positive")
    if fixed_delta is not None and not fixed_delta > 0.0:
        errors.append(f"fixed_delta={fixed_delta} must be positive")
    if K is not None and not K > 0.0:
        errors.append(f"K={K} must be positive")
    if errors:
        raise ValueError("invalid scheme parameters: " + "; ".join(errors))

    b = math.log(1.0 / epsilon)
    if fixed_delta is None:
        W = _ceil(2.0 * b / (math.pi * gamma))
    else:
        W = max(1, int(round(fixed_delta / dt)))
    delta = W * dt
    nA = _ceil((2.0 * SQRT3 + delta) / dt)
    A = nA * dt
    dk = 2.0 * math.pi / (A + 2.0)
    if K is None:
        K = float(_ceil(K0 + math.pi * gamma / dt))
    N = _grid_size(K, dk)
    Nt = int(round(T / dt))
    if K0 * dt > math.pi * (1.0 - gamma):
        warnings.warn(
            f"time step under-resolves signal band: K0*dt={K0 * dt:.3g} > pi(1-gamma)={math.pi * (1 - gamma):.3g}",
            UnderResolvedWarning,
            stacklevel=2,
        )
    return SchemeParams(
        epsilon=float(epsilon), gamma=float(gamma), dt=float(dt), K0=float(K0), T=float(T),
        b=b, W=W, delta=delta, nA=nA, A=A, dk=dk, K=float(K), N=N, Nt=Nt,
    )


def estimate_bandlimit(signal, epsilon):
    """Closed-form epsilon-bandlimit estimate of a built-in signal family."""
    try:
        fn = signal.bandlimit
    except AttributeError:
        raise NotImplementedError(f"no bandlimit rule for {type(signal).__name__}") from None
    return fn(epsilon)


def three_square_numbers(limit):
    """Integers 0..limit expressible as a sum of three squares (Legendre)."""
    n = np.arange(limit + 1, dtype=np.int64)
    m = n.copy()
    nz = m > 0
    while True:
        div4 = nz & (m % 4 == 0)
        if not div4.any():
            break
        m[div4] //= 4
    return n[~(nz & (m % 8 == 7))]


@dataclass(frozen=True)
class ModeGrid:
    """Cube of N^3 wavevectors ``n*dk``; only the ball ``|n dk| <= K`` is active.

    Per-mode arrays (``flat_index``, ``radius_sq``, ``shell``) list the active
    modes in C order of the cube.  Shells are the distinct values of ``|n|^2``
    inside the ball; weights are shared per shell since they only depend on
    ``|k|``.
    """

    dk: float
    N: int
    K: float

    def __post_init__(self):
        if self.N % 2 != 1:
            raise ValueError(f"N must be odd, got {self.N}")

    @property
    def n_max(self):
        return (self.N - 1) // 2

    @property
    def r2_max(self):
        # |n dk| <= K in integers, robust to rounding at the ball edge
        return int(math.floor((self.K / self.dk) ** 2 * (1 + 1e-12)))

    @property
    def axis(self):
        return np.arange(-self.n_max, self.n_max + 1)

    @cached_property
    def mask(self):
        n2 = self.axis.astype(np.int64) ** 2
        return (n2[:, None, None] + n2[None, :, None] + n2[None, None, :]) <= self.r2_max

    @cached_property
    def flat_index(self):
        return np.flatnonzero(self.mask)

    @property
    def n_active(self):
        return self.flat_index.size

    @cached_property
    def mode_indices(self):
        """Integer wavevector indices n of active modes, shape (n_active, 3)."""
        idx = np.stack(np.unravel_index(self.flat_index, (self.N,) * 3), axis=1)
        return idx - self.n_max

    @cached_property
    def radius_sq(self):
        return (self.mode_indices.astype(np.int64) ** 2).sum(axis=1)

    @cached_property
    def shell_r2(self):
        return three_square_numbers(min(self.r2_max, 3 * self.n_max**2))

    @property
    def shell_kappa(self):
        return np.sqrt(self.shell_r2) * self.dk

    @cached_property
    def shell(self):
        """Shell index of each active mode."""
        return np.searchsorted(self.shell_r2, self.radius_sq)

    @property
    def kappa(self):
        return np.sqrt(self.radius_sq) * self.dk

    def to_cube(self, values):
        cube = np.zeros(self.N**3, dtype=np.result_type(values, np.complex128))
        cube[self.flat_index] = values
        return cube.reshape((self.N,) * 3)

    def from_cube(self, cube):
        return np.asarray(cube).reshape(-1)[self.flat_index]


def build_grid(p):
    """Mode grid of a scheme: spacing dk, N per side, ball of radius K."""
    return ModeGrid(dk=p.dk, N=p.N, K=p.K)
