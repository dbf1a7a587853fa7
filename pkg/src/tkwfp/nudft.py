"""Type-1/type-2 nonuniform FFTs between points in [-1, 1]^d and a centered mode cube.

Conventions, with ``k_n = n dk`` for integer ``n`` in ``[-n_max, n_max]^d``::

    points_to_modes:  c[n] = sum_j s_j exp(+i k_n . y_j)
    modes_to_points:  u_j  = sum_n c[n] exp(-i k_n . x_j)

The fast path spreads onto a 2x oversampled periodic grid with a
Kaiser-Bessel kernel, runs an FFT and divides by the kernel's analytic
Fourier transform.  The kernel width is ``ceil(log10(1/eps)) + 2`` grid
cells.  The direct path is a separable O(M N^d) sum used as reference.
"""

import math

import numpy as np
import scipy.fft
from numba import njit
from scipy.special import i0

from .window import kb_sinc

__all__ = ["TransformPlan", "points_to_modes", "modes_to_points", "direct_points_to_modes", "direct_modes_to_points"]

OVERSAMPLE = 2.0


def kernel_params(eps):
    """Kernel width (cells) and Kaiser-Bessel shape for tolerance ``eps``."""
    w = max(2, int(math.ceil(math.log10(1.0 / eps))) + 2)
    s = OVERSAMPLE
    beta = math.pi * math.sqrt((w / s) ** 2 * (s - 0.5) ** 2 - 0.8)
    return w, beta


def _kernel_ft(n, nf, w, beta):
    """Fourier transform of the spreading kernel at integer modes ``n``."""
    xi = 2.0 * math.pi * np.asarray(n, float) / nf
    return w * kb_sinc((0.5 * w * xi) ** 2 - beta * beta)


def _kernel_weights(xg, w, beta):
    """Start cell and kernel values for grid-unit coordinates ``xg`` (M,)."""
    l0 = np.ceil(xg - 0.5 * w).astype(np.int64)
    z = (l0[:, None] + np.arange(w)) - xg[:, None]
    arg = np.clip(1.0 - (2.0 * z / w) ** 2, 0.0, None)
    return l0, i0(beta * np.sqrt(arg))


@njit(cache=True)
def _spread2(l0, ker, s, grid):
    nf0, nf1 = grid.shape
    w = ker.shape[2]
    for j in range(s.size):
        for a in range(w):
            ia = (l0[j, 0] + a) % nf0
            va = ker[j, 0, a] * s[j]
            for b in range(w):
                ib = (l0[j, 1] + b) % nf1
                grid[ia, ib] += va * ker[j, 1, b]


@njit(cache=True)
def _spread3(l0, ker, s, grid):
    nf0, nf1, nf2 = grid.shape
    w = ker.shape[2]
    for j in range(s.size):
        for a in range(w):
            ia = (l0[j, 0] + a) % nf0
            va = ker[j, 0, a] * s[j]
            for b in range(w):
                ib = (l0[j, 1] + b) % nf1
                vb = va * ker[j, 1, b]
                for c in range(w):
                    ic = (l0[j, 2] + c) % nf2
                    grid[ia, ib, ic] += vb * ker[j, 2, c]


@njit(cache=True)
def _interp2(l0, ker, grid, out):
    nf0, nf1 = grid.shape
    w = ker.shape[2]
    for j in range(out.size):
        acc = 0j
        for a in range(w):
            ia = (l0[j, 0] + a) % nf0
            row = 0j
            for b in range(w):
                ib = (l0[j, 1] + b) % nf1
                row += ker[j, 1, b] * grid[ia, ib]
            acc += ker[j, 0, a] * row
        out[j] = acc


@njit(cache=True)
def _interp3(l0, ker, grid, out):
    nf0, nf1, nf2 = grid.shape
    w = ker.shape[2]
    for j in range(out.size):
        acc = 0j
        for a in range(w):
            ia = (l0[j, 0] + a) % nf0
            for b in range(w):
                ib = (l0[j, 1] + b) % nf1
                vab = ker[j, 0, a] * ker[j, 1, b]
                row = 0j
                for c in range(w):
                    ic = (l0[j, 2] + c) % nf2
                    row += ker[j, 2, c] * grid[ia, ib, ic]
                acc += vab * row
        out[j] = acc


class TransformPlan:
    """Precomputed transform between fixed points and an ``N^d`` mode cube.

    Parameters
    ----------
    points : (M, d) array
        Physical coordinates; ``|dk * y|`` must stay below pi.
    n_modes : int
        Odd number of modes per dimension.
    dk : float
        Mode spacing.
    epsilon : float
        Requested relative accuracy of the fast path.
    method : {"fast", "direct"}
    mask : bool array of shape ``(n_modes,)*d``, optional
        Modes outside the mask are returned as zero and ignored on input.
    """

    def __init__(self, points, n_modes, dk, epsilon=1e-6, method="fast", mask=None):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if n_modes % 2 != 1:
            raise ValueError("n_modes must be odd")
        if method not in ("fast", "direct"):
            raise ValueError(f"unknown transform method {method!r}")
        self.points = pts
        self.ndim = pts.shape[1]
        if self.ndim not in (2, 3):
            raise ValueError("only 2D and 3D transforms are supported")
        self.n_modes = int(n_modes)
        self.n_max = (self.n_modes - 1) // 2
        self.dk = float(dk)
        self.epsilon = float(epsilon)
        self.method = method
        x = self.dk * pts
        if pts.size and np.abs(x).max() >= math.pi:
            raise ValueError("points fall outside the periodic cell |dk*y| < pi")
        self._x = x
        self.mask = None
        if mask is not None:
            self.mask = np.asarray(mask, bool)
            if self.mask.shape != self.shape:
                raise ValueError(f"mask shape {self.mask.shape} does not match {self.shape}")
        if method == "fast":
            self._setup_fast()

    @classmethod
    def for_grid(cls, points, grid, epsilon=1e-6, method="fast"):
        """Plan on a :class:`ModeGrid`; points must lie in the unit box ``[-1, 1]^3``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.size and np.abs(pts).max() > 1.0 + 1e-12:
            raise ValueError("points outside the unit box [-1, 1]^3")
        return cls(pts, grid.N, grid.dk, epsilon, method, mask=grid.mask)

    @property
    def shape(self):
        return (self.n_modes,) * self.ndim

    @property
    def n_points(self):
        return self.points.shape[0]

    def _setup_fast(self):
        w, beta = kernel_params(self.epsilon)
        nf = scipy.fft.next_fast_len(max(int(math.ceil(OVERSAMPLE * self.n_modes)), 2 * w))
        nf += nf % 2
        self.nf, self.width, self.beta = nf, w, beta
        xg = np.mod(self._x * (nf / (2.0 * math.pi)), nf)
        l0 = np.empty((self.n_points, self.ndim), np.int64)
        ker = np.empty((self.n_points, self.ndim, w))
        for a in range(self.ndim):
            l0[:, a], ker[:, a, :] = _kernel_weights(xg[:, a], w, beta)
        self._l0, self._ker = l0, ker
        n = np.arange(-self.n_max, self.n_max + 1)
        self._fine_idx = np.mod(n, nf)
        self._deconv = 1.0 / _kernel_ft(n, nf, w, beta)

    def _deconv_cube(self):
        d = self._deconv
        return d[:, None] * d[None, :] if self.ndim == 2 else d[:, None, None] * d[None, :, None] * d[None, None, :]

    def points_to_modes(self, strengths):
        s = np.asarray(strengths)
        if s.shape != (self.n_points,):
            raise ValueError(f"expected {self.n_points} strengths, got shape {s.shape}")
        if self.method == "direct":
            out = direct_points_to_modes(self.points, s, self.n_modes, self.dk)
        else:
            out = self._fast_type1(s)
        if self.mask is not None:
            out[~self.mask] = 0.0
        return out

    def _fast_type1(self, s):
        nf = self.nf
        grid = np.zeros((nf,) * self.ndim, np.complex128)
        spread = _spread3 if self.ndim == 3 else _spread2
        spread(self._l0, self._ker, s.astype(np.complex128), grid)
        # sum_l g_l exp(+2 pi i n l / nf) is nf^d times the inverse FFT
        g = scipy.fft.ifftn(grid, overwrite_x=True, norm="forward")
        out = g[np.ix_(*([self._fine_idx] * self.ndim))]
        return out * self._deconv_cube()

    def modes_to_points(self, cube):
        c = np.asarray(cube)
        if c.shape != self.shape:
            raise ValueError(f"expected mode cube {self.shape}, got {c.shape}")
        if self.mask is not None:
            c = np.where(self.mask, c, 0.0)
        if self.method == "direct":
            return direct_modes_to_points(self.points, c, self.dk)
        nf = self.nf
        grid = np.zeros((nf,) * self.ndim, np.complex128)
        grid[np.ix_(*([self._fine_idx] * self.ndim))] = c * self._deconv_cube()
        grid = scipy.fft.fftn(grid, overwrite_x=True)
        out = np.empty(self.n_points, np.complex128)
        interp = _interp3 if self.ndim == 3 else _interp2
        interp(self._l0, self._ker, grid, out)
        return out


def points_to_modes(plan, strengths):
    """Type-1 transform: point strengths to the centered mode cube."""
    return plan.points_to_modes(strengths)


def modes_to_points(plan, cube):
    """Type-2 transform: mode cube to values at the plan's points."""
    return plan.modes_to_points(cube)


def _axis_phases(points, n_modes, dk, sign):
    n_max = (n_modes - 1) // 2
    n = np.arange(-n_max, n_max + 1)
    return [np.exp(sign * 1j * dk * np.outer(points[:, a], n)) for a in range(points.shape[1])]


def direct_points_to_modes(points, strengths, n_modes, dk, chunk=256):
    """Reference O(M N^d) type-1 sum."""
    points = np.atleast_2d(points)
    d = points.shape[1]
    out = np.zeros((n_modes,) * d, np.complex128)
    for lo in range(0, points.shape[0], chunk):
        p = points[lo:lo + chunk]
        e = _axis_phases(p, n_modes, dk, +1.0)
        s = np.asarray(strengths[lo:lo + chunk], np.complex128)
        if d == 3:
            out += np.einsum("j,ja,jb,jc->abc", s, *e, optimize=True)
        else:
            out += np.einsum("j,ja,jb->ab", s, *e, optimize=True)
    return out


def direct_modes_to_points(points, cube, dk, chunk=256):
    """Reference O(M N^d) type-2 sum."""
    points = np.atleast_2d(points)
    d = points.shape[1]
    out = np.empty(points.shape[0], np.complex128)
    for lo in range(0, points.shape[0], chunk):
        e = _axis_phases(points[lo:lo + chunk], cube.shape[0], dk, -1.0)
        if d == 3:
            out[lo:lo + chunk] = np.einsum("abc,ja,jb,jc->j", cube, *e, optimize=True)
        else:
            out[lo:lo + chunk] = np.einsum("ab,ja,jb->j", cube, *e, optimize=True)
    return out
