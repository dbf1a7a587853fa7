"""History part: per-mode recursion for the truncated-kernel Fourier coefficients.

For each wavevector ``k`` (``kappa = |k|``) the coefficient

    alpha(k, t) = int_{t-A}^{t} g(t - tau) S^(k, tau) phi(t - tau) phi(A - t + tau) dtau,
    g(u) = sin(kappa u) / kappa,

solves ``alpha'' + kappa^2 alpha = F`` with zero initial data, where ``F``
collects the kernel's second derivative near its two blended ends.  One step
of length ``dt`` is the exact rotation of ``(alpha, alpha')`` plus a Duhamel
increment ``(h, g)``.  The increment is a fixed linear combination of past
source spectra ``S^(k, t - m dt)`` (creation end) and
``S^(k, t - A + delta - m dt)`` (annihilation end) whose weights depend only
on ``kappa``, so they are computed once per radial shell.

The first derivative of the blend has jumps of size ``b/(delta sinh b)`` at
both window edges.  Those jumps put point masses into ``F``; they are
O(eps) but not negligible against a 1e-7 match with the defining integral,
so they are kept as explicit lag terms (lag ``W`` on the creation side, lags
``-1`` and ``W`` on the annihilation side).

Two storage layouts of the same recursion are provided:

* ``HistoryState`` holds ``alpha`` for every active mode plus ring buffers of
  source spectra (two transforms per step).
* ``FactoredHistory`` uses ``alpha(k) = sum_j exp(i k.y_j) beta_j(kappa)``,
  which holds because the weights depend on ``|k|`` only.  ``beta_j`` is real
  and driven by the scalar signal of source ``j``; memory scales with
  (shells x sources) instead of ``N^3``, which suits few sources on big grids.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange
from scipy.integrate import IntegrationWarning, quad

from .nudft import TransformPlan
from .window import phi, phi_dprime, phi_prime

__all__ = [
    "GL_NODES",
    "creation_kernel",
    "annihilation_kernel",
    "UpdateWeights",
    "build_update_weights",
    "HistoryState",
    "new_state",
    "step",
    "compute_shat",
    "eval_history",
    "alpha_oracle",
    "FactoredHistory",
    "eval_factored",
    "factored_alpha",
    "sinc_kernel",
]

GL_NODES = 24


def sinc_kernel(kappa, u):
    """``sin(kappa u)/kappa``, exact at kappa = 0."""
    kappa = np.asarray(kappa, float)
    u = np.asarray(u, float)
    return u * np.sinc(kappa * u / np.pi)


def creation_kernel(kappa, u, w):
    """Forcing density of the rising end: ``2 cos(kappa u) phi'(u) + g(u) phi''(u)``."""
    return 2.0 * np.cos(kappa * u) * phi_prime(w, u) + sinc_kernel(kappa, u) * phi_dprime(w, u)


def annihilation_kernel(kappa, u, w, A):
    """Forcing density of the falling end, in the local offset ``u`` in [0, delta]."""
    s = u + (A - w.delta)
    return 2.0 * np.cos(kappa * s) * phi_prime(w, u) + sinc_kernel(kappa, s) * phi_dprime(w, u)


@dataclass
class UpdateWeights:
    """Step weights per radial shell.

    ``p, q`` have rows for creation lags ``m = 0..W``; ``pA, qA`` have rows for
    annihilation lags ``m = -1..W`` (row 0 is ``m = -1``).  Columns index the
    shells listed in ``kappa``.  The increment over one step is
    ``h = dt * (sum_m p_m S(t - m dt) - sum_m pA_m S(t - A + delta - m dt))``.
    """

    kappa: np.ndarray
    dt: float
    W: int
    p: np.ndarray
    q: np.ndarray
    pA: np.ndarray
    qA: np.ndarray
    rot_cos: np.ndarray
    rot_sinc: np.ndarray
    rot_msin: np.ndarray

    @property
    def n_shells(self):
        return self.kappa.size


def build_update_weights(grid, p, w, *, edge_terms=True, chunk=2048):
    """Precompute the step weights for every shell of ``grid``.

    ``grid`` is a ``ModeGrid`` or a 1-D array of kappa values.  The outer
    integral over one step uses Gauss-Legendre nodes; the inner convolution
    with the source spectrum uses the trapezoid rule on the step grid.
    ``edge_terms`` adds the point forcing from the blend's edge jumps.
    """
    kappa = np.asarray(getattr(grid, "shell_kappa", grid), dtype=float).ravel()
    dt, W, A, delta = p.dt, p.W, p.A, p.delta
    if not math.isclose(w.delta, delta, rel_tol=1e-12):
        raise ValueError("window width does not match scheme delta")
    x, wq = np.polynomial.legendre.leggauss(GL_NODES)
    x = 0.5 * (x + 1.0)
    wq = 0.5 * wq
    # inner offsets u = dt (x_q + m), m = 0..W-1; window factors are kappa-free
    u = dt * (x[None, :] + np.arange(W)[:, None])
    d1 = phi_prime(w, u)
    d2 = phi_dprime(w, u)
    uA = u + (A - delta)
    lag = dt * (1.0 - x)

    R = kappa.size
    P = np.zeros((W + 1, R))
    Q = np.zeros((W + 1, R))
    PA = np.zeros((W + 2, R))
    QA = np.zeros((W + 2, R))
    for lo in range(0, R, chunk):
        k = kappa[lo:lo + chunk, None, None]
        fs = wq * sinc_kernel(k, lag)
        fc = wq * np.cos(k * lag)
        psi = 2.0 * np.cos(k * u) * d1 + sinc_kernel(k, u) * d2
        psiA = 2.0 * np.cos(k * uA) * d1 + sinc_kernel(k, uA) * d2
        P[:W, lo:lo + chunk] = (fs * psi).sum(-1).T * dt
        Q[:W, lo:lo + chunk] = (fc * psi).sum(-1).T * dt
        PA[1:W + 1, lo:lo + chunk] = (fs * psiA).sum(-1).T * dt
        QA[1:W + 1, lo:lo + chunk] = (fc * psiA).sum(-1).T * dt

    cs = np.cos(kappa * dt)
    sn = sinc_kernel(kappa, dt)
    if edge_terms:
        # point mass Y at lag m0, integrated with the same trapezoid rule
        jump = w.bump_scale
        for Pm, Qm, Y, row in (
            (P, Q, -jump * sinc_kernel(kappa, delta), W),
            (PA, QA, jump * sinc_kernel(kappa, A - delta), 1),
            (PA, QA, -jump * sinc_kernel(kappa, A), W + 1),
        ):
            Pm[row] += 0.5 * Y * sn
            Qm[row] += 0.5 * Y * cs
            Qm[row - 1] += 0.5 * Y
    return UpdateWeights(
        kappa=kappa, dt=dt, W=W, p=P, q=Q, pA=PA, qA=QA,
        rot_cos=cs, rot_sinc=sn, rot_msin=-kappa * np.sin(kappa * dt),
    )


# ---------------------------------------------------------------- mode state


@dataclass
class HistoryState:
    """Coefficients of all active modes plus spectrum ring buffers.

    Arrays are flat over the active modes of ``grid`` (C order of the cube).
    ``creation[(c_head - m) % (W+1)]`` holds lag ``m``; the annihilation ring
    is one sample ahead, ``annihilation[(a_head - m - 1) % (W+2)]`` holding
    lag ``m`` for ``m = -1..W``.
    """

    grid: object
    alpha: np.ndarray
    alpha_dot: np.ndarray
    creation: np.ndarray
    annihilation: np.ndarray
    c_head: int = 0
    a_head: int = 0
    step_index: int = 0

    @property
    def W(self):
        return self.creation.shape[0] - 1

    def alpha_cube(self):
        return self.grid.to_cube(self.alpha)


def new_state(grid, W):
    """Zero state at step 0."""
    n = grid.n_active
    return HistoryState(
        grid=grid,
        alpha=np.zeros(n, np.complex128),
        alpha_dot=np.zeros(n, np.complex128),
        creation=np.zeros((W + 1, n), np.complex128),
        annihilation=np.zeros((W + 2, n), np.complex128),
    )


@njit(cache=True, parallel=True)
def _advance_modes(alpha, alpha_dot, shell, cre, c_head, ann, a_head, p, q, pA, qA, cs, sn, ms, dt):
    dc = cre.shape[0]
    da = ann.shape[0]
    for i in prange(alpha.size):
        r = shell[i]
        h = 0j
        g = 0j
        for m in range(dc):
            s = cre[(c_head - m) % dc, i]
            h += p[m, r] * s
            g += q[m, r] * s
        for j in range(da):
            s = ann[(a_head - j) % da, i]
            h -= pA[j, r] * s
            g -= qA[j, r] * s
        a = alpha[i]
        ad = alpha_dot[i]
        alpha[i] = a * cs[r] + ad * sn[r] + dt * h
        alpha_dot[i] = a * ms[r] + ad * cs[r] + dt * g


def _flat(state, x):
    if x is None:
        return None
    x = np.asarray(x)
    return state.grid.from_cube(x) if x.ndim == 3 else x


def step(state, weights, new_creation, new_annihilation):
    """Advance ``state`` by one step in place and return it.

    ``new_creation`` is the spectrum at the current time ``t``;
    ``new_annihilation`` is the spectrum at ``t + dt - A + delta``.  Either
    may be ``None`` for an all-zero spectrum.  Both are cubes or flat
    active-mode vectors.
    """
    n = state.alpha.size
    if state.creation.shape[0] != weights.p.shape[0] or state.annihilation.shape[0] != weights.pA.shape[0]:
        raise ValueError("state buffers do not match the weight lag depth")
    c = _flat(state, new_creation)
    a = _flat(state, new_annihilation)
    for v in (c, a):
        if v is not None and v.shape != (n,):
            raise ValueError(f"spectrum has shape {v.shape}, expected ({n},)")
    state.c_head = (state.c_head + 1) % state.creation.shape[0]
    state.creation[state.c_head] = 0.0 if c is None else c
    state.a_head = (state.a_head + 1) % state.annihilation.shape[0]
    state.annihilation[state.a_head] = 0.0 if a is None else a
    _advance_modes(
        state.alpha, state.alpha_dot, state.grid.shell, state.creation, state.c_head,
        state.annihilation, state.a_head, weights.p, weights.q, weights.pA, weights.qA,
        weights.rot_cos, weights.rot_sinc, weights.rot_msin, weights.dt,
    )
    state.step_index += 1
    return state


def compute_shat(sources, t, plan, grid=None):
    """Source spectrum ``sum_j sigma_j(t) exp(i k.y_j)`` as a mode cube.

    Returns ``None`` when every signal vanishes (always the case for t <= 0).
    With ``grid`` the active-mode vector is returned instead of the cube.
    """
    sig = sources.sigma(t)
    if not np.any(sig):
        return None
    cube = plan.points_to_modes(sig.astype(np.complex128))
    return cube if grid is None else grid.from_cube(cube)


def eval_history(state, p, plan):
    """History field ``u_h`` at the plan's points: ``(dk/2pi)^3 sum_k alpha e^{-ik.x}``."""
    vals = plan.modes_to_points(state.alpha_cube())
    return (p.dk / (2.0 * math.pi)) ** 3 * vals.real


def alpha_oracle(k, t, sources, w, A, epsabs=1e-13):
    """Adaptive quadrature of the defining integral of ``alpha(k, t)``."""
    k = np.asarray(k, float)
    kappa = float(np.linalg.norm(k))
    lo = t - A
    if t <= 0.0:
        return 0j
    brk = [b for b in (t - w.delta, t - A + w.delta, 0.0) if lo < b < t]
    out = 0j
    for j in range(len(sources)):
        def f(tau, j=j):
            return (sinc_kernel(kappa, t - tau) * sources.sigma(tau, j)
                    * phi(w, t - tau) * phi(w, A - t + tau))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IntegrationWarning)
            val = quad(f, max(lo, 0.0), t, points=[b for b in brk if b > max(lo, 0.0)] or None,
                       limit=4000, epsabs=epsabs, epsrel=1e-13)[0]
        out += val * np.exp(1j * k @ sources.positions[j])
    return out


# ---------------------------------------------------------- factored state


@njit(cache=True, parallel=True)
def _factored_advance(beta, beta_dot, pr, qr, par, qar, sc, sa, cs, sn, ms, dt):
    R, M = beta.shape
    block = 64
    for b in prange((R + block - 1) // block):
        h = np.empty(M)
        g = np.empty(M)
        for r in range(b * block, min(R, (b + 1) * block)):
            h[:] = 0.0
            g[:] = 0.0
            for m in range(sc.shape[0]):
                pm = pr[r, m]
                qm = qr[r, m]
                for j in range(M):
                    s = sc[m, j]
                    h[j] += pm * s
                    g[j] += qm * s
            for m in range(sa.shape[0]):
                pm = par[r, m]
                qm = qar[r, m]
                for j in range(M):
                    s = sa[m, j]
                    h[j] -= pm * s
                    g[j] -= qm * s
            c = cs[r]
            sr = sn[r]
            mr = ms[r]
            for j in range(M):
                a = beta[r, j]
                ad = beta_dot[r, j]
                beta[r, j] = a * c + ad * sr + dt * h[j]
                beta_dot[r, j] = a * mr + ad * c + dt * g[j]


@dataclass
class FactoredHistory:
    """Per-source, per-shell coefficients ``beta`` with ``alpha(k) = sum_j e^{ik.y_j} beta_j(|k|)``."""

    positions: np.ndarray
    shell_r2: np.ndarray
    dk: float
    weights: UpdateWeights
    beta: np.ndarray = field(init=False)
    beta_dot: np.ndarray = field(init=False)
    creation: np.ndarray = field(init=False)
    annihilation: np.ndarray = field(init=False)
    step_index: int = 0

    def __post_init__(self):
        R = self.weights.n_shells
        M = self.positions.shape[0]
        W = self.weights.W
        self.beta = np.zeros((R, M))
        self.beta_dot = np.zeros((R, M))
        self.creation = np.zeros((W + 1, M))
        self.annihilation = np.zeros((W + 2, M))
        wts = self.weights
        # shell-major copies so each shell reads its lag weights contiguously
        self._w = tuple(np.ascontiguousarray(x.T) for x in (wts.p, wts.q, wts.pA, wts.qA))

    @property
    def nbytes(self):
        return self.beta.nbytes + self.beta_dot.nbytes

    def step(self, sig_creation, sig_annihilation):
        """Advance by one step given signal values at ``t`` and ``t + dt - A + delta``."""
        wts = self.weights
        # rows are lags: shift by one and insert the new samples
        self.creation[1:] = self.creation[:-1]
        self.creation[0] = sig_creation
        self.annihilation[1:] = self.annihilation[:-1]
        self.annihilation[0] = sig_annihilation
        _factored_advance(self.beta, self.beta_dot, *self._w, self.creation, self.annihilation,
                          wts.rot_cos, wts.rot_sinc, wts.rot_msin, wts.dt)
        self.step_index += 1


def _shell_lookup(shell_r2):
    lut = np.full(int(shell_r2[-1]) + 1, -1, np.int64)
    lut[shell_r2] = np.arange(shell_r2.size)
    return lut


def factored_alpha(state, modes):
    """``alpha`` at integer wavevector indices ``modes`` (P, 3)."""
    modes = np.atleast_2d(np.asarray(modes, np.int64))
    r2 = (modes**2).sum(1)
    lut = _shell_lookup(state.shell_r2)
    if r2.max() >= lut.size or (lut[r2] < 0).any():
        raise ValueError("mode outside the factored shell set")
    ph = np.exp(1j * state.dk * (modes @ state.positions.T))
    return np.einsum("pj,pj->p", ph, state.beta[lut[r2]])


@njit(cache=True)
def _slab_alpha(n1, n_max, r2_max, lut, beta, e1, e2, e3, out):
    N = 2 * n_max + 1
    M = beta.shape[1]
    tmp = np.empty(M, np.complex128)
    for i2 in range(N):
        n2 = i2 - n_max
        r12 = n1 * n1 + n2 * n2
        if r12 > r2_max:
            for i3 in range(N):
                out[i2, i3] = 0j
            continue
        for j in range(M):
            tmp[j] = e1[j] * e2[i2, j]
        for i3 in range(N):
            n3 = i3 - n_max
            r2 = r12 + n3 * n3
            if r2 > r2_max:
                out[i2, i3] = 0j
                continue
            sh = lut[r2]
            acc = 0j
            for j in range(M):
                acc += beta[sh, j] * (tmp[j] * e3[i3, j])
            out[i2, i3] = acc


def eval_factored(state, targets, n_max, r2_max=None, epsilon=1e-6, method="fast"):
    """History field at ``targets`` from a factored state.

    The mode sum runs slab by slab in the first index.  Since ``beta`` is real,
    ``alpha(-k) = conj(alpha(k))``, so only slabs ``n1 >= 0`` are built and
    doubled.  Each slab is summed over the other two indices with a 2-D
    transform at the targets.
    """
    targets = np.atleast_2d(np.asarray(targets, float))
    shell_r2 = state.shell_r2
    r2_max = int(shell_r2[-1]) if r2_max is None else int(r2_max)
    lut = _shell_lookup(shell_r2)
    if r2_max >= lut.size:
        lut = np.concatenate([lut, np.full(r2_max + 1 - lut.size, -1, np.int64)])
    dk = state.dk
    N = 2 * n_max + 1
    n = np.arange(-n_max, n_max + 1)
    y = state.positions
    e2 = np.exp(1j * dk * np.outer(n, y[:, 1]))
    e3 = np.exp(1j * dk * np.outer(n, y[:, 2]))
    plan = TransformPlan(targets[:, 1:], N, dk, epsilon, method)
    slab = np.empty((N, N), np.complex128)
    out = np.zeros(targets.shape[0])
    for n1 in range(0, n_max + 1):
        if n1 * n1 > r2_max:
            break
        e1 = np.exp(1j * dk * n1 * y[:, 0])
        _slab_alpha(n1, n_max, r2_max, lut, state.beta, e1, e2, e3, slab)
        s = plan.modes_to_points(slab)
        wt = 1.0 if n1 == 0 else 2.0
        out += wt * (np.exp(-1j * dk * n1 * targets[:, 0]) * s).real
    return (dk / (2.0 * math.pi)) ** 3 * out
