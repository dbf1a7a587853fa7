"""Command-line interface: JSON configuration, subcommands and output writers.

Configuration is a flat JSON object.  Any top-level key can be overridden by
an environment variable ``TKWFP_<KEY>`` (upper case); its value is parsed as
JSON when possible and taken as a string otherwise, e.g. ``TKWFP_DT=0.01``
or ``TKWFP_TRANSFORM=direct``.
"""

import argparse
import json
import math
import os
import struct
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import scenarios
from .engine import RunPlan, converge, decay_report, precompute, simulate
from .oracle import error_metrics, evaluate_direct
from .spectrum import select_params
from .window import BlendWindow, phi, phi_prime, phi_prime_ft, tail_bound

__all__ = ["Config", "ConfigError", "parse_config", "main", "write_field_bin", "read_field_bin",
           "write_field_csv", "ENV_PREFIX"]

ENV_PREFIX = "TKWFP_"
MAGIC = b"TKWF"
BIN_VERSION = 1
SCENARIOS = ("corner", "cruller", "random", "file")
RNG_ALGORITHM = "PCG64"


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class Config:
    scenario: str
    dt: Optional[float] = None
    T: float = 6.0
    dt_list: Optional[list] = None
    epsilon: float = 1e-6
    gamma: float = 0.5
    K0: Optional[float] = None
    fixed_delta: Optional[float] = None
    scenario_params: dict = field(default_factory=dict)
    slices: Optional[list] = None
    targets: object = "sources"
    output: str = "out"
    format: str = "csv"
    seed: int = 0
    rng: str = RNG_ALGORITHM
    transform: str = "fast"
    history: str = "auto"
    diagnostics: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


_TYPES = {
    "scenario": str, "dt": float, "T": float, "dt_list": list, "epsilon": float, "gamma": float,
    "K0": float, "fixed_delta": float, "scenario_params": dict, "slices": list, "targets": object,
    "output": str, "format": str, "seed": int, "rng": str, "transform": str, "history": str,
    "diagnostics": dict,
}
_DIAGNOSTICS = {"oracle_sample", "max_rel_err", "ball_factor", "decay_bound", "scan_from"}


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _env_overrides(env):
    out = {}
    names = {f.name.upper(): f.name for f in fields(Config)}
    for k, v in env.items():
        if k.startswith(ENV_PREFIX) and k[len(ENV_PREFIX):] in names:
            try:
                out[names[k[len(ENV_PREFIX):]]] = json.loads(v)
            except json.JSONDecodeError:
                out[names[k[len(ENV_PREFIX):]]] = v
    return out


def parse_config(text, env=None):
    """Parse and validate a JSON config; raises ``ConfigError`` listing all problems."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"not valid JSON: {exc}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be an object"])
    if env:
        raw.update(_env_overrides(env))
    errs = []
    for k in sorted(set(raw) - set(_TYPES)):
        errs.append(f"unknown key '{k}'")
    if "scenario" not in raw:
        errs.append("missing required key 'scenario'")
    elif raw["scenario"] not in SCENARIOS:
        errs.append(f"scenario: unknown scenario {raw['scenario']!r} (expected one of {', '.join(SCENARIOS)})")
    if raw.get("dt") is None and not raw.get("dt_list"):
        errs.append("missing required key 'dt' (or 'dt_list')")
    for k in ("dt", "T", "fixed_delta", "K0"):
        v = raw.get(k)
        if v is not None and (not _is_num(v) or v <= 0):
            errs.append(f"{k}: must be a positive number, got {v!r}")
    for k in ("epsilon", "gamma"):
        if k in raw and (not _is_num(raw[k]) or not 0 < raw[k] < 1):
            errs.append(f"{k}: must lie in (0, 1), got {raw[k]!r}")
    for k in ("dt_list", "slices"):
        v = raw.get(k)
        if v is not None and (not isinstance(v, list) or not all(_is_num(x) and x >= 0 for x in v)):
            errs.append(f"{k}: must be a list of non-negative numbers")
    if raw.get("dt_list") is not None and any(x == 0 for x in raw["dt_list"]):
        errs.append("dt_list: entries must be positive")
    if "seed" in raw and (not isinstance(raw["seed"], int) or isinstance(raw["seed"], bool) or raw["seed"] < 0):
        errs.append("seed: must be a non-negative integer")
    for k, allowed in (("format", ("csv", "bin")), ("transform", ("fast", "direct")),
                       ("history", ("auto", "cube", "factored")), ("rng", (RNG_ALGORITHM,))):
        if k in raw and raw[k] not in allowed:
            errs.append(f"{k}: must be one of {', '.join(allowed)}, got {raw[k]!r}")
    for k in ("scenario_params", "diagnostics"):
        if k in raw and not isinstance(raw[k], dict):
            errs.append(f"{k}: must be an object")
    if isinstance(raw.get("diagnostics"), dict):
        for k in sorted(set(raw["diagnostics"]) - _DIAGNOSTICS):
            errs.append(f"diagnostics: unknown key '{k}'")
    tg = raw.get("targets", "sources")
    if not (tg == "sources" or (isinstance(tg, dict) and len(tg) == 1 and (
            (isinstance(tg.get("grid"), int) and tg["grid"] > 0) or isinstance(tg.get("file"), str)))):
        errs.append("targets: must be \"sources\", {\"grid\": n} or {\"file\": path}")
    if "output" in raw and not isinstance(raw["output"], str):
        errs.append("output: must be a string path")
    sp = raw.get("scenario_params", {})
    if isinstance(sp, dict):
        sc = raw.get("scenario")
        if sc == "random" and not (isinstance(sp.get("M"), int) and sp["M"] >= 1):
            errs.append("scenario_params.M: random scenario needs an integer M >= 1")
        if sc == "file" and not isinstance(sp.get("path"), str):
            errs.append("scenario_params.path: file scenario needs a path")
        if sc == "cruller":
            for k in ("n_u", "n_v"):
                if k in sp and not (isinstance(sp[k], int) and sp[k] >= 4):
                    errs.append(f"scenario_params.{k}: must be an integer >= 4")
    if errs:
        raise ConfigError(errs)
    return Config(**raw)


# ------------------------------------------------------------------ builders


def build_sources(cfg):
    sp = cfg.scenario_params
    if cfg.scenario == "corner":
        return scenarios.corner_sources()
    if cfg.scenario == "cruller":
        return scenarios.cruller_sources(sp.get("n_u", 40), sp.get("n_v", 40))
    if cfg.scenario == "random":
        return scenarios.random_sources(sp["M"], seed=cfg.seed)
    return load_source_file(sp["path"])


def load_source_file(path):
    """JSON file with ``positions`` and a ``signal`` object (``family`` plus per-source lists)."""
    doc = json.loads(Path(path).read_text())
    pos = np.asarray(doc["positions"], float)
    sig = dict(doc["signal"])
    fam = sig.pop("family")
    m = pos.shape[0]
    if fam == "erf_sine":
        s = scenarios.ErfSine.make(m, **sig)
    elif fam == "gaussian":
        s = scenarios.GaussianPulse.make(m, **sig)
    else:
        raise ValueError(f"unknown signal family {fam!r}")
    return scenarios.SourceSet(pos, s)


def build_targets(cfg, sources):
    tg = cfg.targets
    if tg == "sources":
        return sources.positions
    if "grid" in tg:
        n = tg["grid"]
        ax = -1.0 + (2.0 * np.arange(n) + 1.0) / n
        return np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1).reshape(-1, 3)
    return np.loadtxt(tg["file"], delimiter=",", ndmin=2)[:, :3]


def _params(cfg, sources, dt, K=None):
    K0 = cfg.K0 if cfg.K0 is not None else sources.signal.bandlimit(cfg.epsilon)
    return select_params(cfg.epsilon, cfg.gamma, dt, K0, cfg.T, K=K, fixed_delta=cfg.fixed_delta)


def _plan(cfg, sources, targets, p, **kw):
    times = cfg.slices if cfg.slices else [p.Nt * p.dt]
    steps = []
    for t in times:
        n = int(round(t / p.dt))
        steps.append(min(n, p.Nt))
    return RunPlan(p, sources, targets, tuple(steps), history=cfg.history, transform=cfg.transform, **kw)


# ------------------------------------------------------------------- writers


def write_field_bin(path, t, values):
    """``TKWF`` magic, u32 version, f64 time, u64 count, f64 values; little-endian."""
    v = np.ascontiguousarray(values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IdQ", BIN_VERSION, float(t), v.size))
        fh.write(v.tobytes())


def read_field_bin(path):
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError("not a field file")
    version, t, n = struct.unpack_from("<IdQ", data, 4)
    if version != BIN_VERSION:
        raise ValueError(f"unsupported field format version {version}")
    vals = np.frombuffer(data, dtype="<f8", count=n, offset=4 + struct.calcsize("<IdQ"))
    return t, vals.copy()


def _g12(x):
    return "" if x is None else f"{x:.12g}"


def write_field_csv(path, targets, values):
    with open(path, "w") as fh:
        fh.write("x,y,z,u\n")
        for (x, y, z), u in zip(targets, values):
            fh.write(f"{x:.12g},{y:.12g},{z:.12g},{u:.12g}\n")


def write_table(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_g12(v) for v in r) + "\n")


def _write_snapshot(out, fmt, snap):
    name = f"field_t{snap.t:.6f}"
    if fmt == "bin":
        write_field_bin(out / f"{name}.bin", snap.t, snap.values)
    else:
        write_field_csv(out / f"{name}.csv", snap.targets, snap.values)


# ---------------------------------------------------------------- commands


def cmd_run(cfg, out):
    src = build_sources(cfg)
    tg = build_targets(cfg, src)
    p = _params(cfg, src, cfg.dt)
    res = simulate(_plan(cfg, src, tg, p))
    for s in res.snapshots:
        _write_snapshot(out, cfg.format, s)
    (out / "timings.json").write_text(json.dumps(res.timings, indent=2, sort_keys=True))
    return {"history": res.pre.history, "counters": res.counters, "N": p.N, "K": p.K, "W": p.W}, []


def cmd_validate(cfg, out):
    src = build_sources(cfg)
    tg = build_targets(cfg, src)
    n = cfg.diagnostics.get("oracle_sample", min(1000, tg.shape[0]))
    rng = scenarios.make_rng(cfg.seed)
    if n < tg.shape[0]:
        tg = tg[np.sort(rng.choice(tg.shape[0], n, replace=False))]
    p = _params(cfg, src, cfg.dt)
    t0 = time.perf_counter()
    res = simulate(_plan(cfg, src, tg, p))
    wall = time.perf_counter() - t0
    snap = res.snapshots[-1]
    a, r = error_metrics(snap, evaluate_direct(src, tg, snap.t))
    write_table(out / "validation.csv", ["dt", "abs_err", "rel_err", "wall_seconds"], [(p.dt, a, r, wall)])
    tol = cfg.diagnostics.get("max_rel_err", 1e-4)
    errors = [] if (r is not None and r <= tol) or (r is None and a == 0) else [
        f"relative error {r} exceeds {tol}"]
    return {"abs_err": a, "rel_err": r, "t": snap.t}, errors


def cmd_converge(cfg, out):
    src = build_sources(cfg)
    tg = build_targets(cfg, src)
    K0 = cfg.K0 if cfg.K0 is not None else src.signal.bandlimit(cfg.epsilon)
    dts = cfg.dt_list or [cfg.dt]
    rows = converge(src, tg, dts, epsilon=cfg.epsilon, gamma=cfg.gamma, T=cfg.T, K0=K0,
                    fixed_delta=cfg.fixed_delta, history=cfg.history, transform=cfg.transform)
    write_table(out / "convergence.csv", ["dt", "abs_err", "rel_err", "wall_seconds"],
                [(r.dt, r.abs_err, r.rel_err, r.wall_seconds) for r in rows])
    return {"rows": len(rows), "min_abs_err": min(r.abs_err for r in rows)}, []


def cmd_decay(cfg, out):
    src = build_sources(cfg)
    p = _params(cfg, src, cfg.dt)
    bf = cfg.diagnostics.get("ball_factor", 1.3)
    plan = RunPlan(p, src, src.positions[:1], (), history="factored" if cfg.history == "auto" else cfg.history,
                   transform=cfg.transform, ball_factor=bf)
    res = simulate(plan)
    tab = decay_report(res.state, res.pre.grid, p, n_sources=len(src),
                       kappa_min=cfg.diagnostics.get("scan_from", 0.9) * p.K)
    scanned = np.isfinite(tab.shell_max)
    write_table(out / "decay.csv", ["kappa", "shell_max", "bound"],
                zip(tab.kappa[scanned], tab.shell_max[scanned], tab.bound[scanned]))
    errors = [] if tab.monotone_beyond() else ["shell maxima do not decay beyond K"]
    if cfg.diagnostics.get("decay_bound") and not tab.bound_ok():
        errors.append("outer shells exceed 1e2 M eps / kappa^3")
    return {"monotone": tab.monotone_beyond(), "worst_rise": tab.worst_rise(), "bound_ok": tab.bound_ok(),
            "fitted_constant": tab.fitted_constant()}, errors


def cmd_window_dump(cfg, out):
    p = select_params(cfg.epsilon, cfg.gamma, cfg.dt or cfg.dt_list[0], 0.0, cfg.T, fixed_delta=cfg.fixed_delta)
    w = BlendWindow(p.epsilon, p.delta)
    t = np.linspace(-0.1 * w.delta, 1.1 * w.delta, 241)
    write_table(out / "window.csv", ["t", "phi", "phi_prime"], zip(t, phi(w, t), phi_prime(w, t)))
    om = np.linspace(0.0, 8.0 * w.b / w.delta, 401)
    ft = phi_prime_ft(w, om)
    write_table(out / "window_ft.csv", ["omega", "re", "im", "abs"], zip(om, ft.real, ft.imag, np.abs(ft)))
    rows, errors = [], []
    for theta in (1.1, 1.5, 4.0):
        om0, bound = tail_bound(w, theta)
        omg = om0 * np.geomspace(1.0, 100.0, 1000)
        bad = int(np.sum(np.abs(phi_prime_ft(w, omg)) >= bound(omg)))
        rows.append((theta, om0, omg.size, bad))
        if bad:
            errors.append(f"tail bound violated {bad} times at theta={theta}")
    write_table(out / "tail_bound.csv", ["theta", "omega_min", "n_checked", "violations"], rows)
    return {"delta": w.delta, "b": w.b}, errors


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "converge": cmd_converge, "decay": cmd_decay,
            "window-dump": cmd_window_dump}


def _set_threads(n):
    import numba
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


def build_parser():
    ap = argparse.ArgumentParser(prog="tkwfp", description="Fast free-space wave solver for point sources.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON configuration file")
    ap.add_argument("--out", help="output directory (overrides config 'output')")
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")
    ap.add_argument("--transform", choices=["fast", "direct"], help="override transform mode")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(Path(args.config).read_text(), env=os.environ)
    except (OSError, ConfigError) as exc:
        errs = exc.errors if isinstance(exc, ConfigError) else [str(exc)]
        print(json.dumps({"status": "error", "command": args.command, "errors": errs}))
        return 2
    if args.transform:
        cfg.transform = args.transform
    out = Path(args.out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    _set_threads(args.threads)
    try:
        info, errors = COMMANDS[args.command](cfg, out)
    except Exception as exc:  # report, never traceback-only
        info, errors = {}, [f"{type(exc).__name__}: {exc}"]
    summary = {"status": "fail" if errors else "ok", "command": args.command, "errors": errors, **info}
    text = json.dumps(summary, indent=2, sort_keys=True, default=lambda o: o.item() if hasattr(o, "item") else str(o))
    (out / "summary.json").write_text(text + "\n")
    print(text)
    return 1 if errors else 0


if __name__ == "__main__":
    sys.exit(main())
