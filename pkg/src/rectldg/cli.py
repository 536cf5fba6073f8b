"""Command-line driver.

Every command writes its artifacts plus a ``manifest.json`` into ``--out``.
Options may also come from a flat ``key = value`` file given by ``--config``;
flags on the command line override file values.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from .analytic import ToleranceUnreachable, limit_strong_grid, limit_weak_grid, theta_harmonic_grid
from .boundary import DIRICHLET, NONTRIVIAL_SEED, ROBIN, TABLE_STATES, BoundarySpec
from .classify import classify, detect_defects, effective_vertex_degrees, vertex_degrees
from .continuation import (
    MissingTransition,
    SeedNotConverged,
    continue_branch,
    limit_seed,
    make_point,
    theta_seed,
    transition_parameters,
    transitions_json,
)
from .energy import BoundaryMismatch, EnergyParams, energy
from .grid import Grid, QField, RectDomain, make_grid, read_field_csv, write_field_csv
from .solvers import NonConvergence, SingularLinearization, StepUnstable, gradient_flow, newton_solve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
VERSION = "0.1.0"
SEED_CHOICES = tuple(TABLE_STATES) + ("limit", "nontrivial")


class ConfigError(ValueError):
    pass


NUMERIC_ERRORS = (
    NonConvergence,
    SingularLinearization,
    StepUnstable,
    SeedNotConverged,
    ToleranceUnreachable,
    MissingTransition,
    FloatingPointError,
)


# ----------------------------------------------------------------------------
# configuration


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--out", help="output directory")
    p.add_argument("--a", type=float, help="domain width")
    p.add_argument("--b", type=float, help="domain height")
    p.add_argument("--h", type=float, help="grid spacing")
    p.add_argument("--bc", choices=(DIRICHLET, ROBIN), help="anchoring mode")
    p.add_argument("--d", type=float, help="boundary ramp width")
    p.add_argument("--tau", type=float, help="Robin anchoring strength")
    p.add_argument("--rng-seed", type=int, help="seed of the perturbation generator")


DEFAULTS = {
    "out": "out", "a": 1.0, "b": 1.0, "h": 1 / 64, "bc": DIRICHLET, "d": 0.03, "tau": None, "rng_seed": 0,
    "mode": None, "state": "D1", "eps": None, "seed": None, "field": None, "dt": None, "stop_tol": 1e-8,
    "snap_every": 1000, "max_steps": 2_000_000, "polish_tol": None, "eps_range": "0.02:1", "eps_seed": None,
    "direction": "up", "cont_mode": "pathway", "step": 0.01, "param": "a", "values": None, "command": "continue",
    "workers": 1, "tol": 1e-10, "perturb": 0.0,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rectldg", description="Reduced LdG equilibria on rectangles")
    ap.add_argument("--version", action="version", version=f"rectldg {VERSION}")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("analytic", help="sample a limiting profile")
    _common(p)
    p.add_argument("--mode", choices=("strong", "weak", "theta"))
    p.add_argument("--state", choices=tuple(TABLE_STATES) + ("nontrivial",))

    p = sub.add_parser("solve", help="Newton solve from a seed")
    _common(p)
    p.add_argument("--seed", help=f"one of {', '.join(SEED_CHOICES)}")
    p.add_argument("--field", help="initial field CSV (overrides --seed)")
    p.add_argument("--eps", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--perturb", type=float, help="uniform random perturbation amplitude of the seed")

    p = sub.add_parser("relax", help="steepest-descent relaxation")
    _common(p)
    p.add_argument("--seed")
    p.add_argument("--field")
    p.add_argument("--eps", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--stop-tol", type=float)
    p.add_argument("--snap-every", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--polish-tol", type=float)

    p = sub.add_parser("continue", help="continue a branch in epsilon")
    _common(p)
    p.add_argument("--seed")
    p.add_argument("--eps-range", help="lo:hi")
    p.add_argument("--eps-seed", type=float, help="epsilon of the seed (default: range end it starts from)")
    p.add_argument("--direction", choices=("up", "down"))
    p.add_argument("--cont-mode", choices=("pathway", "arclength"))
    p.add_argument("--step", type=float)

    p = sub.add_parser("classify", help="label a field CSV")
    _common(p)
    p.add_argument("--field")

    p = sub.add_parser("sweep", help="run one command over several values of a parameter")
    _common(p)
    p.add_argument("--command", choices=("solve", "relax", "continue"))
    p.add_argument("--param", choices=("a", "b", "eps", "h", "d", "tau"))
    p.add_argument("--values", help="comma-separated values")
    p.add_argument("--workers", type=int)
    p.add_argument("--seed")
    p.add_argument("--eps", type=float)
    p.add_argument("--eps-range")
    p.add_argument("--eps-seed", type=float)
    p.add_argument("--direction", choices=("up", "down"))
    p.add_argument("--cont-mode", choices=("pathway", "arclength"))
    return ap


def _coerce(key: str, raw: str, where: str):
    ref = DEFAULTS.get(key)
    try:
        if key in ("a", "b", "h", "d", "tau", "eps", "dt", "stop_tol", "polish_tol", "eps_seed", "step", "tol",
                   "perturb"):
            return float(raw)
        if key in ("rng_seed", "snap_every", "max_steps", "workers"):
            return int(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} for {key}") from None
    return raw if ref is None or isinstance(ref, str) else type(ref)(raw)


def read_config(path: str) -> dict:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    for n, line in enumerate(lines, 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        k, v = (t.strip() for t in s.split("=", 1))
        k = k.replace("-", "_")
        if k not in DEFAULTS:
            raise ConfigError(f"{path}:{n}: unknown key {k!r}")
        out[k] = _coerce(k, v, f"{path}:{n}")
    return out


def resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(read_config(args.config))
    for k, v in vars(args).items():
        if k in ("cmd", "config") or v is None:
            continue
        cfg[k] = v
    cfg["cmd"] = args.cmd
    return cfg


@dataclass
class Setup:
    grid: Grid
    params: EnergyParams


def setup(cfg: dict, need_eps: bool = True) -> Setup:
    try:
        dom = RectDomain(float(cfg["a"]), float(cfg["b"]))
        grid = make_grid(dom, float(cfg["h"]))
        bc = BoundarySpec(cfg["bc"], float(cfg["d"]), cfg["tau"])
        bc.validate_for(dom.a, dom.b)
        eps = cfg.get("eps")
        if need_eps and eps is None:
            raise ConfigError("--eps is required")
        params = EnergyParams(float(eps) if eps is not None else 1.0, bc)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    return Setup(grid, params)


def parse_range(s: str) -> tuple[float, float]:
    try:
        lo, hi = (float(t) for t in s.split(":"))
    except ValueError:
        raise ConfigError(f"epsilon range {s!r} must look like lo:hi") from None
    if not 0 < lo < hi:
        raise ConfigError(f"epsilon range {s!r} must satisfy 0 < lo < hi")
    return lo, hi


def seed_field(cfg: dict, st: Setup) -> QField:
    if cfg.get("field"):
        try:
            f = read_field_csv(cfg["field"])
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read field {cfg['field']}: {exc}") from None
        if f.grid.shape != st.grid.shape:
            raise ConfigError(f"field grid {f.grid.shape} does not match configured grid {st.grid.shape}")
        return QField(st.grid, f.q11, f.q12)
    name = cfg.get("seed")
    if name is None:
        raise ConfigError("--seed or --field is required")
    if name in TABLE_STATES:
        return theta_seed(st.grid, st.params, TABLE_STATES[name])
    if name == "nontrivial":
        return theta_seed(st.grid, st.params, NONTRIVIAL_SEED)
    if name == "limit":
        return limit_seed(st.grid, st.params)
    raise ConfigError(f"unknown seed {name!r}; choose from {', '.join(SEED_CHOICES)}")


# ----------------------------------------------------------------------------
# output


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def write_manifest(out: Path, cfg: dict, results: dict, started: float, files: list[str]) -> None:
    write_json(out / "manifest.json", {
        "config": {k: v for k, v in sorted(cfg.items())},
        "versions": {
            "rectldg": VERSION, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "wall_time_s": round(time.time() - started, 3),
        "outputs": files,
        "results": results,
    })


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----------------------------------------------------------------------------
# commands


def cmd_analytic(cfg: dict) -> dict:
    st = setup(cfg, need_eps=False)
    mode = cfg.get("mode") or "strong"
    g = st.grid
    if mode == "strong":
        q11, q12 = limit_strong_grid(g, st.params.bc.d)
        f = QField(g, q11, q12)
    elif mode == "weak":
        if cfg.get("tau") is None:
            raise ConfigError("--tau is required for weak anchoring")
        q11, q12 = limit_weak_grid(g, float(cfg["tau"]))
        f = QField(g, q11, q12)
    else:
        state = cfg.get("state") or "D1"
        dvals = NONTRIVIAL_SEED if state == "nontrivial" else TABLE_STATES[state]
        th = theta_harmonic_grid(g, dvals)
        f = QField(g, np.cos(2 * th), np.sin(2 * th))
    out = _outdir(cfg)
    write_field_csv(f, out / "field.csv")
    label = classify(f, d=st.params.bc.d)
    summary = {"mode": mode, "class": label.label, "center_q11": g.center_value(f.q11),
               "max_abs_q12": float(np.max(np.abs(f.q12)))}
    write_json(out / "summary.json", summary)
    return {"files": ["field.csv", "summary.json"], "results": summary}


def cmd_solve(cfg: dict) -> dict:
    st = setup(cfg)
    init = seed_field(cfg, st)
    amp = float(cfg.get("perturb") or 0.0)
    if amp > 0:
        from .energy import discretization

        rng = np.random.default_rng(int(cfg["rng_seed"]))
        D = discretization(st.grid, st.params.bc)
        pert = QField(st.grid, rng.uniform(-amp, amp, st.grid.shape), rng.uniform(-amp, amp, st.grid.shape))
        init = D.impose(init + pert)
    f, rep = newton_solve(init, st.params, float(cfg["tol"]), raise_on_failure=True)
    pt = make_point(f, st.params, float(cfg["tol"]))
    out = _outdir(cfg)
    write_field_csv(f, out / "field.csv")
    res = {"converged": rep.converged, "iterations": rep.iterations, "residual": rep.final_residual_norm,
           "energy": pt.energy, "lambda_min": pt.lambda_min, "class": pt.tag}
    write_json(out / "summary.json", res)
    return {"files": ["field.csv", "summary.json"], "results": res}


def cmd_relax(cfg: dict) -> dict:
    st = setup(cfg)
    init = seed_field(cfg, st)
    tr = gradient_flow(
        init, st.params, cfg.get("dt"), float(cfg["stop_tol"]), int(cfg["snap_every"]), int(cfg["max_steps"]),
        cfg.get("polish_tol"),
    )
    out = _outdir(cfg)
    files, snaps = [], []
    for k, s in enumerate(tr.snapshots):
        name = f"snap_{k:05d}.csv"
        write_field_csv(s.field, out / name)
        dset = detect_defects(s.field)
        vd = effective_vertex_degrees(s.field)
        snaps.append({
            "file": name, "time": s.time, "energy": s.energy,
            "defects": [{"x": x, "y": y, "winding": w} for x, y, w in dset.points],
            "lines": [ln["edge_or_diagonal"] for ln in dset.lines],
            "vertex_degrees": list(vd.values),
        })
        files.append(name)
    traj = {"terminal_class": tr.terminal_class, "steps": tr.steps, "dt": tr.dt, "converged": tr.converged,
            "final_residual_norm": tr.final_residual_norm, "snapshots": snaps}
    write_json(out / "trajectory.json", traj)
    files.append("trajectory.json")
    res = {"terminal_class": tr.terminal_class, "steps": tr.steps, "converged": tr.converged,
           "final_energy": tr.snapshots[-1].energy}
    return {"files": files, "results": res}


def cmd_continue(cfg: dict) -> dict:
    st = setup(cfg, need_eps=False)
    lo, hi = parse_range(cfg["eps_range"])
    direction = 1 if cfg.get("direction", "up") == "up" else -1
    eps0 = cfg.get("eps_seed")
    if eps0 is None:
        eps0 = lo if direction > 0 else hi
    if not lo <= eps0 <= hi:
        raise ConfigError("seed epsilon outside the continuation range")
    p0 = st.params.with_epsilon(eps0)
    init = seed_field(cfg, Setup(st.grid, p0))
    f, rep = newton_solve(init, p0, raise_on_failure=True)
    seed = make_point(f, p0)
    br = continue_branch(seed, st.params, (lo, hi), step=float(cfg["step"]), direction=direction,
                         mode=cfg.get("cont_mode", "pathway"), seed_name=str(cfg.get("seed") or "field"))
    out = _outdir(cfg)
    (out / "branch.csv").write_text(br.to_csv())
    try:
        trans = transition_parameters([br])
    except MissingTransition:
        trans = {}
    (out / "transitions.json").write_text(transitions_json(trans, st.grid) + "\n")
    res = {
        "terminated": br.terminated, "points": len(br.points),
        "transitions": [{"epsilon": t.epsilon, "from": t.from_tag, "to": t.to_tag, "kind": t.kind}
                        for t in br.transitions],
        "folds": [f.epsilon for f in br.folds], "refined": trans,
    }
    return {"files": ["branch.csv", "transitions.json"], "results": res}


def cmd_classify(cfg: dict) -> dict:
    if not cfg.get("field"):
        raise ConfigError("--field is required")
    try:
        f = read_field_csv(cfg["field"])
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read field {cfg['field']}: {exc}") from None
    d = float(cfg["d"])
    label = classify(f, d=d)
    dset = detect_defects(f)
    out = _outdir(cfg)
    (out / "defects.json").write_text(dset.to_json(effective_vertex_degrees(f)) + "\n")
    res = {"class": label.label, "confidence": label.confidence}
    write_json(out / "class.json", res)
    return {"files": ["class.json", "defects.json"], "results": res}


COMMANDS = {
    "analytic": cmd_analytic, "solve": cmd_solve, "relax": cmd_relax, "continue": cmd_continue,
    "classify": cmd_classify,
}


def _sweep_one(cfg: dict) -> dict:
    return run_command(cfg)


def cmd_sweep(cfg: dict) -> dict:
    if not cfg.get("values"):
        raise ConfigError("--values is required")
    try:
        values = [float(v) for v in str(cfg["values"]).split(",")]
    except ValueError:
        raise ConfigError(f"cannot parse sweep values {cfg['values']!r}") from None
    sub = cfg.get("command") or "continue"
    key = cfg.get("param") or "a"
    base = Path(cfg["out"])
    jobs = []
    for k, v in enumerate(values):
        c = dict(cfg)
        c["cmd"] = sub
        c[key] = v
        c["out"] = str(base / f"run_{k:03d}_{key}_{v:g}")
        jobs.append(c)
    workers = max(1, int(cfg.get("workers") or 1))
    if workers == 1:
        results = [_sweep_one(c) for c in jobs]
    else:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_sweep_one, jobs))
    _outdir(cfg)
    summary = [{"value": v, "out": c["out"], "exit": r["exit"], "results": r.get("results")}
               for v, c, r in zip(values, jobs, results)]
    write_json(base / "sweep.json", summary)
    if any(r["exit"] != EXIT_OK for r in results):
        raise FloatingPointError("one or more sweep runs failed")
    return {"files": ["sweep.json"], "results": {"runs": len(jobs)}}


def run_command(cfg: dict) -> dict:
    """Run one command from a resolved config; never raises, returns the exit code."""
    started = time.time()
    out = Path(cfg.get("out") or "out")
    try:
        fn = cmd_sweep if cfg["cmd"] == "sweep" else COMMANDS[cfg["cmd"]]
        rec = fn(cfg)
        write_manifest(out, cfg, rec["results"], started, rec["files"])
        return {"exit": EXIT_OK, "results": rec["results"]}
    except (ConfigError, BoundaryMismatch) as exc:
        return _fail(out, cfg, EXIT_CONFIG, "config", exc)
    except NUMERIC_ERRORS as exc:
        return _fail(out, cfg, EXIT_NUMERIC, "numerical", exc)


def _fail(out: Path, cfg: dict, code: int, kind: str, exc: Exception) -> dict:
    doc = {"error": kind, "type": type(exc).__name__, "message": str(exc), "exit": code}
    print(json.dumps(doc), file=sys.stderr)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "error.json", doc)
    except OSError:
        pass
    return {"exit": code, "error": doc}


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = resolve(args)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc), "exit": EXIT_CONFIG}), file=sys.stderr)
        return EXIT_CONFIG
    res = run_command(cfg)
    if res["exit"] == EXIT_OK:
        print(json.dumps(res["results"], default=_json_default, sort_keys=True))
    return res["exit"]


if __name__ == "__main__":
    sys.exit(main())
