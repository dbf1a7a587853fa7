"""Local part: direct retarded sum over source-target pairs closer than delta.

Each pair contributes ``sigma_j(t - r_ij) Q_ij`` with
``Q_ij = (1 - phi(r_ij)) / (4 pi r_ij)``; beyond ``r = delta`` the weight
vanishes and the history part takes over.  Pairs are found with a cell list
of cubic boxes of side delta covering ``[-1-delta, 1+delta]^3``.
"""

from dataclasses import dataclass

import numpy as np

from .window import phi

__all__ = ["LocalTable", "build_local_table", "eval_local", "brute_force_pairs"]

_MAX_BOXES = 100_000


@dataclass(frozen=True)
class LocalTable:
    """Near-pair list sorted by target; ``indptr`` gives each target's slice."""

    n_targets: int
    delta: float
    indptr: np.ndarray
    target: np.ndarray
    source: np.ndarray
    r: np.ndarray
    Q: np.ndarray

    @property
    def n_pairs(self):
        return self.source.size

    def counts(self):
        return np.diff(self.indptr)

    def pairs_of(self, i):
        sl = slice(self.indptr[i], self.indptr[i + 1])
        return self.source[sl], self.r[sl], self.Q[sl]


def _box_index(points, origin, delta, nbox):
    b = np.floor((points - origin) / delta).astype(np.int64)
    inside = np.all((b >= 0) & (b < nbox), axis=1)
    return b, inside


def _candidate_pairs(tb, t_ok, nbox, s_sorted, offsets):
    """Yield (target idx, position in sorted source list) for the 27 neighbor boxes."""
    tidx = np.flatnonzero(t_ok)
    tb = tb[tidx]
    for off in offsets:
        nb = tb + off
        ok = np.all((nb >= 0) & (nb < nbox), axis=1)
        if not ok.any():
            continue
        lin = np.ravel_multi_index(nb[ok].T, (nbox,) * 3)
        lo = np.searchsorted(s_sorted, lin, side="left")
        cnt = np.searchsorted(s_sorted, lin, side="right") - lo
        keep = cnt > 0
        if not keep.any():
            continue
        lo, cnt = lo[keep], cnt[keep]
        ti = np.repeat(tidx[ok][keep], cnt)
        # positions lo..lo+cnt-1 for every target, flattened
        first = np.repeat(lo - np.cumsum(cnt) + cnt, cnt)
        pos = first + np.arange(cnt.sum())
        yield ti, pos


def build_local_table(targets, sources, delta, w, chunk=200_000):
    """All pairs with ``0 < |x_i - y_j| < delta``.

    ``sources`` is a ``SourceSet`` or an (M, 3) array of positions.  Sources
    must lie in the unit box; targets outside the box grid get no pairs.
    """
    x = np.atleast_2d(np.asarray(targets, float))
    y = np.atleast_2d(np.asarray(getattr(sources, "positions", sources), float))
    if not delta > 0:
        raise ValueError("delta must be positive")
    origin = -1.0 - delta
    # boxes of side delta; wider boxes only when delta is tiny, to bound the index range
    side = max(delta, (2.0 + 2.0 * delta) / _MAX_BOXES)
    nbox = int(np.ceil((2.0 + 2.0 * delta) / side)) + 1
    sb, s_ok = _box_index(y, origin, side, nbox)
    if not s_ok.all():
        raise ValueError("sources outside the box grid")
    s_lin = np.ravel_multi_index(sb.T, (nbox,) * 3)
    order = np.argsort(s_lin, kind="stable")
    s_sorted = s_lin[order]
    offsets = np.stack(np.meshgrid(*([np.arange(-1, 2)] * 3), indexing="ij"), -1).reshape(-1, 3)

    tb, t_ok = _box_index(x, origin, side, nbox)
    ti_all, sj_all, r_all = [], [], []
    for lo in range(0, x.shape[0], chunk):
        sub = np.zeros_like(t_ok)
        sub[lo:lo + chunk] = t_ok[lo:lo + chunk]
        for ti, pos in _candidate_pairs(tb, sub, nbox, s_sorted, offsets):
            sj = order[pos]
            r = np.sqrt(((x[ti] - y[sj]) ** 2).sum(1))
            keep = (r > 0.0) & (r < delta)
            ti_all.append(ti[keep])
            sj_all.append(sj[keep])
            r_all.append(r[keep])
    if ti_all:
        ti = np.concatenate(ti_all)
        sj = np.concatenate(sj_all)
        r = np.concatenate(r_all)
    else:
        ti = sj = np.zeros(0, np.int64)
        r = np.zeros(0)
    srt = np.lexsort((sj, ti))
    ti, sj, r = ti[srt], sj[srt], r[srt]
    indptr = np.zeros(x.shape[0] + 1, np.int64)
    np.cumsum(np.bincount(ti, minlength=x.shape[0]), out=indptr[1:])
    Q = (1.0 - phi(w, r)) / (4.0 * np.pi * r) if r.size else np.zeros(0)
    return LocalTable(x.shape[0], float(delta), indptr, ti, sj, r, np.asarray(Q, float))


def eval_local(table, sources, t, chunk=4_000_000):
    """``u_l(x_i, t) = sum_j sigma_j(t - r_ij) Q_ij`` over the stored pairs."""
    out = np.zeros(table.n_targets)
    for lo in range(0, table.n_pairs, chunk):
        sl = slice(lo, lo + chunk)
        vals = sources.sigma(t - table.r[sl], table.source[sl]) * table.Q[sl]
        out += np.bincount(table.target[sl], weights=vals, minlength=table.n_targets)
    return out


def brute_force_pairs(targets, sources, delta):
    """Reference O(M N_x) enumeration of ``(i, j)`` with ``0 < r < delta``."""
    x = np.atleast_2d(np.asarray(targets, float))
    y = np.atleast_2d(np.asarray(getattr(sources, "positions", sources), float))
    d = np.sqrt(((x[:, None, :] - y[None, :, :]) ** 2).sum(-1))
    i, j = np.nonzero((d > 0) & (d < delta))
    return i, j
