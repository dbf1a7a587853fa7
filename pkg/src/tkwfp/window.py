"""Kaiser-Bessel blending function.

The blending function ``phi`` rises smoothly from 0 (t <= 0) to 1
(t >= delta).  Its derivative is a unit-integral Kaiser-Bessel bump

    phi'(t) = b / (delta sinh b) * I0(b sqrt(1 - (2t/delta - 1)^2)),  0 <= t <= delta

with shape parameter ``b = ln(1/epsilon)``, so that ``phi`` is smooth to
tolerance ``epsilon``.  The bump has the closed-form Fourier transform

    phi'^(omega) = b exp(-i delta omega / 2) / sinh(b) * sinc(sqrt((delta omega/2)^2 - b^2)).
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy.special import i0, i1

__all__ = [
    "BlendWindow",
    "phi",
    "phi_prime",
    "phi_dprime",
    "phi_prime_ft",
    "tail_bound",
    "kb_sinc",
]

# Chebyshev degree for phi on [0, delta].  I0(b sqrt(1 - v^2)) is entire in v,
# so coefficients fall below 1e-16 well before this for b <= 35 (eps >= 1e-15).
_CHEB_DEGREE = 120


def kb_sinc(zsq):
    """Return ``sin(z)/z`` given ``z**2`` (real, possibly negative).

    For ``z**2 < 0`` the argument is imaginary and ``sinh(|z|)/|z|`` is
    returned.  A Taylor fallback is used for ``|z| < 1e-6``.
    """
    zsq = np.asarray(zsq, dtype=float)
    out = np.empty_like(zsq)
    z = np.sqrt(np.abs(zsq))
    small = z < 1e-6
    pos = (zsq >= 0) & ~small
    neg = (zsq < 0) & ~small
    out[pos] = np.sin(z[pos]) / z[pos]
    out[neg] = np.sinh(z[neg]) / z[neg]
    out[small] = 1.0 - zsq[small] / 6.0
    return out


@dataclass(frozen=True)
class BlendWindow:
    """Kaiser-Bessel blending window of tolerance ``epsilon`` and width ``delta``.

    The shape parameter ``b`` is always ``ln(1/epsilon)``.
    """

    epsilon: float
    delta: float
    b: float = field(init=False)
    _coef: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.delta > 0.0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        b = float(np.log(1.0 / self.epsilon))
        object.__setattr__(self, "b", b)
        # phi as a function of v = 2t/delta - 1 on [-1, 1]; dphi/dv = delta/2 * phi'.
        scale = b / (2.0 * np.sinh(b))
        v = np.cos(np.pi * (np.arange(_CHEB_DEGREE + 1) + 0.5) / (_CHEB_DEGREE + 1))
        dens = scale * i0(b * np.sqrt(np.clip(1.0 - v * v, 0.0, None)))
        coef = cheb.chebint(cheb.chebfit(v, dens, _CHEB_DEGREE), lbnd=-1.0)
        object.__setattr__(self, "_coef", coef)

    @property
    def bump_scale(self):
        """Prefactor ``b / (delta sinh b)``; also the value of phi' at the window edges."""
        return self.b / (self.delta * np.sinh(self.b))


def phi(w, t):
    """Blending function: 0 for t <= 0, 1 for t >= delta, smooth in between."""
    t = np.asarray(t, dtype=float)
    v = np.clip(2.0 * t / w.delta - 1.0, -1.0, 1.0)
    out = cheb.chebval(v, w._coef)
    out = np.where(t <= 0.0, 0.0, np.where(t >= w.delta, 1.0, out))
    return out[()] if out.ndim == 0 else out


def phi_prime(w, t):
    """Normalized Kaiser-Bessel bump, zero outside [0, delta]."""
    t = np.asarray(t, dtype=float)
    v = 2.0 * t / w.delta - 1.0
    inside = np.abs(v) <= 1.0
    arg = w.b * np.sqrt(np.clip(1.0 - v * v, 0.0, None))
    out = np.where(inside, w.bump_scale * i0(arg), 0.0)
    return out[()] if out.ndim == 0 else out


def phi_dprime(w, t):
    """Second derivative of phi on the open interval (0, delta); zero elsewhere.

    The one-sided limits at the window edges are +-b^3/(delta^2 sinh b);
    those jumps are O(epsilon b^2) relative to the peak.
    """
    t = np.asarray(t, dtype=float)
    v = 2.0 * t / w.delta - 1.0
    inside = (t > 0.0) & (t < w.delta)
    s = np.sqrt(np.clip(1.0 - v * v, 0.0, None))
    bs = w.b * s
    # I1(b s)/s, with the removable singularity at s -> 0 taken by series.
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(s < 1e-4, 0.5 * w.b * (1.0 + bs * bs / 8.0), i1(bs) / s)
    out = np.where(inside, w.bump_scale * w.b * ratio * (-2.0 * v / w.delta), 0.0)
    return out[()] if out.ndim == 0 else out


def phi_prime_ft(w, omega):
    """Analytic Fourier transform ``int phi'(t) exp(-i omega t) dt``."""
    omega = np.asarray(omega, dtype=float)
    half = 0.5 * w.delta * omega
    amp = (w.b / np.sinh(w.b)) * kb_sinc(half * half - w.b * w.b)
    out = amp * np.exp(-1j * half)
    return out[()] if out.ndim == 0 else out


def tail_bound(w, theta):
    """Decay bound for |phi'^| beyond the window bandlimit.

    Returns ``(omega_min, bound)`` where, for every |omega| >= omega_min,
    ``|phi_prime_ft(w, omega)| < bound(omega) = 4 b theta eps / (delta |omega|)``.
    """
    if not theta > 1.0:
        raise ValueError(f"theta must exceed 1, got {theta}")
    omega_min = 2.0 * w.b / (w.delta * np.sqrt(1.0 - 1.0 / theta**2))
    coeff = 4.0 * w.b * theta * w.epsilon / w.delta

    def bound(omega):
        return coeff / np.abs(np.asarray(omega, dtype=float))

    return omega_min, bound
