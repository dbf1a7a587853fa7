"""Run orchestration: precompute, time loop, slice evaluation, sweeps and diagnostics.

The solution is split as ``u = u_l + u_h``.  ``u_l`` is the direct sum over
near pairs; ``u_h`` is the Fourier sum of the history coefficients.  The
history can be stored per mode (``cube``: two source-to-mode transforms per
step) or per (shell, source) (``factored``: no transforms in the time loop,
one slab-wise evaluation per slice).  ``auto`` picks by a memory and work
estimate.
"""

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit, prange

from .history import (FactoredHistory, build_update_weights, compute_shat, eval_factored,
                      eval_history, new_state, step)
from .local import build_local_table, eval_local
from .nudft import TransformPlan
from .oracle import FieldSnapshot, error_metrics, evaluate_direct
from .spectrum import ModeGrid, build_grid, select_params
from .window import BlendWindow

__all__ = [
    "RunPlan",
    "Precomputed",
    "SimulationResult",
    "NumericalFailure",
    "precompute",
    "simulate",
    "converge",
    "decay_report",
    "choose_history",
    "oracle_indices",
]

MEMORY_BUDGET = 2.5e9


class NumericalFailure(RuntimeError):
    """Non-finite values appeared during a run."""


@dataclass
class RunPlan:
    """Everything needed for one simulation.

    ``slice_steps`` are step indices ``n`` (time ``n dt``) at which the field
    is assembled.  ``ball_factor > 1`` widens the stepped mode ball beyond K
    for decay diagnostics; slices still sum only ``|k| <= K``.
    ``oracle_sample > 0`` attaches direct-sum reference values for that many
    evenly spread targets to every snapshot (NaN elsewhere); ``decay_check``
    attaches a decay table of the final state to the result.
    """

    params: object
    sources: object
    targets: np.ndarray
    slice_steps: tuple = ()
    history: str = "auto"
    transform: str = "fast"
    ball_factor: float = 1.0
    decay_check: bool = False
    oracle_sample: int = 0
    memory_budget: float = MEMORY_BUDGET

    def __post_init__(self):
        self.targets = np.atleast_2d(np.asarray(self.targets, float))
        steps = tuple(sorted(set(int(s) for s in self.slice_steps)))
        bad = [s for s in steps if not 0 <= s <= self.params.Nt]
        if bad:
            raise ValueError(f"slice steps {bad} outside [0, {self.params.Nt}]")
        self.slice_steps = steps
        if self.history not in ("auto", "cube", "factored"):
            raise ValueError(f"unknown history layout {self.history!r}")
        if self.transform not in ("fast", "direct"):
            raise ValueError(f"unknown transform {self.transform!r}")

    @classmethod
    def from_times(cls, params, sources, targets, slice_times, **kw):
        """Build a plan from slice times, which must be multiples of dt."""
        steps = []
        for t in slice_times:
            n = round(t / params.dt)
            if abs(n * params.dt - t) > 1e-9 * max(1.0, abs(t)):
                raise ValueError(f"slice time {t} is not a multiple of dt={params.dt}")
            steps.append(n)
        return cls(params, sources, targets, tuple(steps), **kw)


@dataclass
class Precomputed:
    window: BlendWindow
    grid: ModeGrid
    weights: object
    local: object
    history: str
    eval_r2: int
    plans: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


@dataclass
class SimulationResult:
    snapshots: list
    timings: dict
    counters: dict
    pre: Precomputed
    state: object
    decay: Optional["DecayTable"] = None


def oracle_indices(n_targets, n_sample):
    """Evenly spread target indices used for oracle comparison."""
    if n_sample <= 0:
        return np.zeros(0, np.int64)
    if n_sample >= n_targets:
        return np.arange(n_targets)
    return np.unique(np.linspace(0, n_targets - 1, n_sample).round().astype(np.int64))


def _cube_estimate(grid, W, n_targets):
    n_active = 4.0 / 3.0 * math.pi * (grid.K / grid.dk) ** 3
    nf3 = (2.0 * grid.N) ** 3
    mem = n_active * 16 * (2 * W + 7) + grid.N**3 * 17 + nf3 * 16
    work = n_active * (2 * W + 5) * 8 + 2 * nf3 * 5 * math.log2(max(nf3, 2))
    return mem, work


def _factored_estimate(grid, W, m):
    shells = max(1.0, 5.0 / 6.0 * (grid.K / grid.dk) ** 2)
    mem = 2 * shells * m * 8 + 2 * shells * min(m, 512) * 8
    work = shells * m * (8 * (W + 2) + 10)
    return mem, work


def choose_history(grid, W, m, n_targets=0, budget=MEMORY_BUDGET):
    """Pick the history layout with the smaller per-step work that fits in memory."""
    cm, cw = _cube_estimate(grid, W, n_targets)
    fm, fw = _factored_estimate(grid, W, m)
    fits = [(cw, "cube")] if cm <= budget else []
    if fm <= budget:
        fits.append((fw, "factored"))
    if not fits:
        raise MemoryError(f"run needs ~{min(cm, fm) / 1e9:.1f} GB, budget {budget / 1e9:.1f} GB")
    return min(fits)[1]


def precompute(plan):
    """Window, mode grid, step weights, near-pair table and transform plans."""
    p = plan.params
    timings = {}
    t0 = time.perf_counter()
    w = BlendWindow(p.epsilon, p.delta)
    eval_r2 = int(math.floor((p.K / p.dk) ** 2 * (1 + 1e-12)))
    if plan.ball_factor > 1.0:
        K_ball = plan.ball_factor * p.K
        n = math.ceil(2 * K_ball / p.dk - 1e-9)
        grid = ModeGrid(dk=p.dk, N=n if n % 2 else n + 1, K=K_ball)
    else:
        grid = build_grid(p)
    kind = plan.history
    if kind == "auto":
        kind = choose_history(grid, p.W, len(plan.sources), plan.targets.shape[0], plan.memory_budget)
    timings["window_grid"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    weights = build_update_weights(grid, p, w)
    timings["weights"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    local = build_local_table(plan.targets, plan.sources, p.delta, w)
    timings["local_table"] = time.perf_counter() - t0

    plans = {}
    t0 = time.perf_counter()
    if kind == "cube":
        _ = grid.shell  # active-mode bookkeeping
        plans["sources"] = TransformPlan.for_grid(plan.sources.positions, grid, p.epsilon, plan.transform)
        plans["targets"] = TransformPlan.for_grid(plan.targets, grid, p.epsilon, plan.transform)
    timings["transform_plans"] = time.perf_counter() - t0
    timings["precompute_total"] = sum(timings.values())
    return Precomputed(w, grid, weights, local, kind, eval_r2, plans, timings)


def _check(arr, stage, n):
    if arr is not None and not np.all(np.isfinite(arr)):
        raise NumericalFailure(f"non-finite values in {stage} at step {n}")


def _slice_history(plan, pre, state):
    p = plan.params
    grid = pre.grid
    if pre.history == "factored":
        n_max = int(math.isqrt(pre.eval_r2))
        return eval_factored(state, plan.targets, n_max, pre.eval_r2, p.epsilon, plan.transform)
    if grid.r2_max > pre.eval_r2:
        keep = grid.radius_sq <= pre.eval_r2
        saved = state.alpha
        state.alpha = np.where(keep, saved, 0.0)
        try:
            return eval_history(state, p, pre.plans["targets"])
        finally:
            state.alpha = saved
    return eval_history(state, p, pre.plans["targets"])


def simulate(plan, pre=None, progress=None):
    """Run the time loop and assemble ``u = u_l + u_h`` at every slice step."""
    p = plan.params
    pre = precompute(plan) if pre is None else pre
    grid, wts, src = pre.grid, pre.weights, plan.sources
    lag = p.A - p.delta
    timings = {"alpha_update": 0.0, "transforms": 0.0, "u_l": 0.0, "u_h": 0.0}
    counters = {"steps": 0, "creation_transforms": 0, "annihilation_transforms": 0,
                "skipped_transforms": 0, "eval_transforms": 0, "slices": 0}
    if pre.history == "cube":
        state = new_state(grid, p.W)
    else:
        state = FactoredHistory(src.positions, grid.shell_r2, grid.dk, wts)
    snaps = []
    slices = set(plan.slice_steps)
    sample = oracle_indices(plan.targets.shape[0], plan.oracle_sample)

    def emit(n):
        t = n * p.dt
        t0 = time.perf_counter()
        ul = eval_local(pre.local, src, t)
        t1 = time.perf_counter()
        uh = _slice_history(plan, pre, state)
        t2 = time.perf_counter()
        _check(uh, "history evaluation", n)
        timings["u_l"] += t1 - t0
        timings["u_h"] += t2 - t1
        counters["slices"] += 1
        if pre.history == "cube":
            counters["eval_transforms"] += 1
        snap = FieldSnapshot(t=t, targets=plan.targets, values=ul + uh)
        if sample.size:
            ref = np.full(plan.targets.shape[0], np.nan)
            ref[sample] = evaluate_direct(src, plan.targets[sample], t).values
            snap.reference = ref
        snaps.append(snap)

    t_start = time.perf_counter()
    if 0 in slices:
        emit(0)
    for n in range(p.Nt):
        t = n * p.dt
        ta = t + p.dt - lag
        if pre.history == "cube":
            t0 = time.perf_counter()
            c_new = compute_shat(src, t, pre.plans["sources"], grid)
            a_new = compute_shat(src, ta, pre.plans["sources"], grid)
            timings["transforms"] += time.perf_counter() - t0
            for v, key in ((c_new, "creation_transforms"), (a_new, "annihilation_transforms")):
                counters[key if v is not None else "skipped_transforms"] += 1
            _check(c_new, "creation spectrum", n)
            _check(a_new, "annihilation spectrum", n)
            t0 = time.perf_counter()
            step(state, wts, c_new, a_new)
            timings["alpha_update"] += time.perf_counter() - t0
            _check(state.alpha, "alpha update", n)
        else:
            t0 = time.perf_counter()
            sc, sa = src.sigma(t), src.sigma(ta)
            _check(sc, "creation signals", n)
            _check(sa, "annihilation signals", n)
            state.step(sc, sa)
            timings["alpha_update"] += time.perf_counter() - t0
            _check(state.beta, "alpha update", n)
        counters["steps"] += 1
        if n + 1 in slices:
            emit(n + 1)
        if progress is not None:
            progress(n + 1, p.Nt)
    timings["loop_total"] = time.perf_counter() - t_start
    timings["per_step_alpha"] = timings["alpha_update"] / max(1, p.Nt)
    timings["per_step_transforms"] = timings["transforms"] / max(1, p.Nt)
    timings["per_slice_u_l"] = timings["u_l"] / max(1, counters["slices"])
    timings["per_slice_u_h"] = timings["u_h"] / max(1, counters["slices"])
    timings.update({f"pre_{k}": v for k, v in pre.timings.items()})
    decay = decay_report(state, grid, p, n_sources=len(src)) if plan.decay_check else None
    return SimulationResult(snaps, timings, counters, pre, state, decay)


@dataclass
class ConvergenceRow:
    dt: float
    abs_err: float
    rel_err: Optional[float]
    wall_seconds: float
    t: float


def converge(sources, targets, dt_list, *, epsilon, gamma, T, K0=0.0, fixed_delta=None,
             history="auto", transform="fast", reference=None):
    """Error at the final slice for each ``dt``, with the cutoff set to ``pi/dt``.

    ``reference(t)`` returns exact values at ``targets``; defaults to the
    direct retarded sum.
    """
    rows = []
    for dt in dt_list:
        t0 = time.perf_counter()
        p = select_params(epsilon, gamma, dt, K0, T, K=math.pi / dt, fixed_delta=fixed_delta)
        plan = RunPlan(p, sources, targets, (p.Nt,), history=history, transform=transform)
        res = simulate(plan)
        wall = time.perf_counter() - t0
        snap = res.snapshots[-1]
        exact = reference(snap.t) if reference is not None else evaluate_direct(sources, targets, snap.t).values
        a, r = error_metrics(snap.values, exact)
        rows.append(ConvergenceRow(dt=dt, abs_err=a, rel_err=r, wall_seconds=wall, t=snap.t))
    return rows


@dataclass
class DecayTable:
    """Radial-bin maxima of ``|alpha|``; bin ``j`` covers ``j dk <= |k| < (j+1) dk``.

    ``bound`` is ``1e2 M eps / kappa^3`` at the outer edge of each bin, the
    smallest value the bound takes on any mode of the bin.  Bins below
    ``kappa_min`` of the report are not scanned and hold NaN.
    """

    kappa: np.ndarray
    shell_max: np.ndarray
    bound: np.ndarray
    K: float
    dk: float
    n_sources: int
    epsilon: float

    def beyond(self):
        """Bins lying entirely at ``|k| >= K``."""
        return (self.kappa - 0.5 * self.dk >= self.K * (1 - 1e-12)) & np.isfinite(self.shell_max)

    def monotone_beyond(self, tol=0.05):
        m = self.shell_max[self.beyond()]
        return bool(np.all(m[1:] <= (1.0 + tol) * m[:-1]))

    def worst_rise(self):
        """Largest ratio of consecutive bin maxima beyond K."""
        m = self.shell_max[self.beyond()]
        return float(np.max(m[1:] / m[:-1])) if m.size > 1 else 0.0

    def bound_ok(self, n_outer=3):
        sel = np.flatnonzero(self.beyond())[-n_outer:]
        return bool(np.all(self.shell_max[sel] <= self.bound[sel]))

    def fitted_constant(self):
        """Smallest C with ``|alpha| <= C M eps / kappa^3`` beyond K."""
        b = self.beyond()
        if not b.any():
            return 0.0
        k_hi = self.kappa[b] + 0.5 * self.dk
        return float(np.max(self.shell_max[b] * k_hi**3 / (self.n_sources * self.epsilon)))


@njit(cache=True, parallel=True)
def _scan_shell_max(beta, lut, pos, dk, n_max, r2_lo, r2_max, nb):
    """Max of ``|sum_j e^{ik.y_j} beta_j|`` per radial bin over every mode with n1 >= 0."""
    M = pos.shape[0]
    N = 2 * n_max + 1
    e2 = np.empty((N, M), np.complex128)
    e3 = np.empty((N, M), np.complex128)
    for i in range(N):
        for j in range(M):
            e2[i, j] = np.exp(1j * dk * (i - n_max) * pos[j, 1])
            e3[i, j] = np.exp(1j * dk * (i - n_max) * pos[j, 2])
    res = np.zeros((n_max + 1, nb))
    for n1 in prange(n_max + 1):
        tmp = np.empty(M, np.complex128)
        e1 = np.empty(M, np.complex128)
        for j in range(M):
            e1[j] = np.exp(1j * dk * n1 * pos[j, 0])
        for i2 in range(N):
            n2 = i2 - n_max
            r12 = n1 * n1 + n2 * n2
            if r12 > r2_max:
                continue
            for j in range(M):
                tmp[j] = e1[j] * e2[i2, j]
            for i3 in range(N):
                n3 = i3 - n_max
                r2 = r12 + n3 * n3
                if r2 > r2_max or r2 < r2_lo:
                    continue
                sh = lut[r2]
                acc = 0j
                for j in range(M):
                    acc += beta[sh, j] * (tmp[j] * e3[i3, j])
                b = int(math.sqrt(r2))
                if b * b > r2:
                    b -= 1
                elif (b + 1) * (b + 1) <= r2:
                    b += 1
                v = abs(acc)
                if v > res[n1, b]:
                    res[n1, b] = v
    out = np.zeros(nb)
    for n1 in range(n_max + 1):
        for b in range(nb):
            if res[n1, b] > out[b]:
                out[b] = res[n1, b]
    return out


def decay_report(state, grid, p, n_sources=None, kappa_min=0.0):
    """Per radial bin max of ``|alpha|`` over every mode of the bin.

    Works on both history layouts.  Factored states are scanned mode by mode
    (half the ball suffices since ``|alpha(-k)| = |alpha(k)|``);
    ``kappa_min`` skips the inner bins to save time.
    """
    nb = int(math.isqrt(int(grid.r2_max))) + 1
    j_lo = int(math.floor(kappa_min / grid.dk))
    if hasattr(state, "alpha"):
        smax = np.zeros(nb)
        b = np.floor(np.sqrt(grid.radius_sq)).astype(np.int64)
        np.maximum.at(smax, b, np.abs(state.alpha))
        n_src = n_sources or 1
    else:
        n_src = n_sources or state.positions.shape[0]
        lut = np.full(int(grid.r2_max) + 1, -1, np.int64)
        lut[state.shell_r2] = np.arange(state.shell_r2.size)
        smax = _scan_shell_max(state.beta, lut, state.positions, float(state.dk), nb - 1,
                               j_lo * j_lo, int(grid.r2_max), nb)
    smax[:j_lo] = np.nan
    kappa = (np.arange(nb) + 0.5) * grid.dk
    bound = 1e2 * n_src * p.epsilon / (kappa + 0.5 * grid.dk) ** 3
    return DecayTable(kappa=kappa, shell_max=smax, bound=bound, K=p.K, dk=grid.dk,
                      n_sources=n_src, epsilon=p.epsilon)
