"""Fast evaluation of retarded potentials of point sources in 3-D free space.

The field ``u = sum_j sigma_j(t - |x - y_j|) / (4 pi |x - y_j|)`` is split
into a local part (near pairs, direct sum) and a history part (a truncated,
smoothly windowed kernel in Fourier space, advanced in time per mode).
"""

from .engine import RunPlan, converge, decay_report, precompute, simulate
from .history import alpha_oracle, build_update_weights
from .local import build_local_table, eval_local
from .nudft import TransformPlan
from .oracle import FieldSnapshot, error_metrics, evaluate_direct
from .scenarios import (CustomSignal, ErfSine, GaussianPulse, SourceSet, corner_sources, cruller_sources,
                        cruller_surface, pulse_source, random_sources)
from .spectrum import ModeGrid, SchemeParams, build_grid, estimate_bandlimit, select_params
from .window import BlendWindow, phi, phi_dprime, phi_prime, phi_prime_ft, tail_bound

__version__ = "0.1.0"
