"""Reference solution by direct retarded-potential summation, and error norms."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = ["FieldSnapshot", "evaluate_direct", "error_metrics"]


@dataclass
class FieldSnapshot:
    """Field values at ``targets`` and time ``t``."""

    t: float
    targets: np.ndarray
    values: np.ndarray
    reference: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if self.values.shape[0] != np.atleast_2d(self.targets).shape[0]:
            raise ValueError("one value per target required")


def evaluate_direct(sources, targets, t, chunk_pairs=2_000_000):
    """``u(x_i, t) = sum_j sigma_j(t - r_ij) / (4 pi r_ij)``, coincident pairs skipped."""
    if t < 0:
        raise ValueError("direct evaluation needs t >= 0")
    x = np.atleast_2d(np.asarray(targets, float))
    y = sources.positions
    m = y.shape[0]
    idx = np.arange(m)
    rows = max(1, chunk_pairs // max(m, 1))
    out = np.empty(x.shape[0])
    for lo in range(0, x.shape[0], rows):
        xi = x[lo:lo + rows]
        r = np.sqrt(((xi[:, None, :] - y[None, :, :]) ** 2).sum(-1))
        near = r > 0.0
        rs = np.where(near, r, 1.0)
        vals = sources.sigma(t - rs, idx[None, :]) / (4.0 * np.pi * rs)
        out[lo:lo + rows] = np.where(near, vals, 0.0).sum(1)
    return FieldSnapshot(t=float(t), targets=x, values=out)


def error_metrics(approx, exact):
    """Max-norm absolute error and max-norm relative error (None if ``exact`` is zero)."""
    a = approx.values if isinstance(approx, FieldSnapshot) else np.asarray(approx, float)
    e = exact.values if isinstance(exact, FieldSnapshot) else np.asarray(exact, float)
    if isinstance(approx, FieldSnapshot) and isinstance(exact, FieldSnapshot):
        if not np.isclose(approx.t, exact.t) or a.shape != e.shape:
            raise ValueError("snapshots differ in time or targets")
    abs_max = float(np.max(np.abs(a - e))) if a.size else 0.0
    scale = float(np.max(np.abs(e))) if e.size else 0.0
    return abs_max, (abs_max / scale if scale > 0 else None)
