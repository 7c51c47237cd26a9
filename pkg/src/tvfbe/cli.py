"""
Command-line interface: ``tvfbe run``, ``tvfbe sweep`` and ``tvfbe bounds``.

Exit codes: 0 success, 1 runtime failure, 2 invalid input.
"""

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .analysis import BoundsError, theorem2_bounds
from .benchmark import (NOISE_MODELS, ExperimentConfig, run_experiment, summarize,
                        trajectory_csv)
from .prediction import PCConfig

logger = logging.getLogger("tvfbe")

SOLVERS = {
    "qn-ls": ("qn", "qn-ls"),
    "qn": ("qn", "qn"),
    "grad": ("grad", "grad"),
}

REQUIRED = ("rows", "cols", "alpha", "noise_var", "active", "omega", "Ts", "C", "gamma_factor")
OPTIONAL = {
    "P": 10,
    "steps": 1200,
    "seed": 0,
    "solver": "qn-ls",
    "noise": "fixed",
    "amplitude": [0.5, 1.5],
    "tol": 0.0,
    "oracle_tol": 1e-10,
}
INT_FIELDS = ("rows", "cols", "active", "C", "P", "steps", "seed")


class ConfigError(ValueError):
    """Invalid configuration; `problems` lists every offending field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _validate(raw):
    problems = []
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a JSON object"])
    missing = [k for k in REQUIRED if k not in raw]
    problems += [f"missing required field '{k}'" for k in missing]
    unknown = sorted(set(raw) - set(REQUIRED) - set(OPTIONAL))
    problems += [f"unknown field '{k}'" for k in unknown]
    d = dict(OPTIONAL)
    d.update(raw)

    def num(key, cond, text, integer=False):
        if key not in d:
            return
        v = d[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or (
                integer and not float(v).is_integer()):
            problems.append(f"field '{key}' must be {'an integer' if integer else 'a number'}")
            return
        if not cond(v):
            problems.append(f"field '{key}' = {v!r} violates {text}")

    num("rows", lambda v: v > 0, "rows > 0", True)
    num("cols", lambda v: v > 0, "cols > 0", True)
    if not missing or ("rows" in d and "cols" in d):
        try:
            if d["rows"] >= d["cols"]:
                problems.append(f"fields 'rows' and 'cols' violate rows < cols "
                                f"({d['rows']} >= {d['cols']})")
        except (KeyError, TypeError):
            pass
    num("alpha", lambda v: 0 <= v <= 1, "0 <= alpha <= 1")
    num("noise_var", lambda v: v >= 0, "noise_var >= 0")
    num("active", lambda v: v > 0 and ("cols" not in d or not isinstance(d["cols"], (int, float))
                                       or v <= d["cols"]), "0 < active <= cols", True)
    num("omega", lambda v: math.isfinite(v), "omega finite")
    num("Ts", lambda v: v > 0, "Ts > 0")
    num("C", lambda v: v >= 1, "C >= 1", True)
    num("P", lambda v: v >= 0, "P >= 0", True)
    num("gamma_factor", lambda v: 0 < v < 1,
        "gamma must lie in (0, 1/L): gamma_factor in (0, 1)")
    num("steps", lambda v: v >= 0, "steps >= 0", True)
    num("seed", lambda v: v >= 0, "seed >= 0", True)
    num("tol", lambda v: v >= 0, "tol >= 0")
    num("oracle_tol", lambda v: v > 0, "oracle_tol > 0")
    if d.get("solver") not in SOLVERS:
        problems.append(f"field 'solver' must be one of {sorted(SOLVERS)}")
    if d.get("noise") not in NOISE_MODELS:
        problems.append(f"field 'noise' must be one of {list(NOISE_MODELS)}")
    amp = d.get("amplitude")
    if not (isinstance(amp, (list, tuple)) and len(amp) == 2
            and all(isinstance(a, (int, float)) for a in amp) and 0 <= amp[0] <= amp[1]):
        problems.append("field 'amplitude' must be [low, high] with 0 <= low <= high")
    if problems:
        raise ConfigError(problems)
    for k in INT_FIELDS:
        d[k] = int(d[k])
    return d


def config_from_dict(raw):
    """Validate a flat config mapping and build an `ExperimentConfig`."""
    d = _validate(raw)
    predict_method, correct_method = SOLVERS[d["solver"]]
    pc = PCConfig(Ts=float(d["Ts"]), P=d["P"], C=d["C"], gamma_factor=float(d["gamma_factor"]),
                  predict_method=predict_method, correct_method=correct_method,
                  steps=d["steps"], tol=float(d["tol"]), oracle_tol=float(d["oracle_tol"]))
    return ExperimentConfig(rows=d["rows"], n=d["cols"], alpha=float(d["alpha"]),
                            noise_var=float(d["noise_var"]), omega=float(d["omega"]),
                            active=d["active"], amplitude=tuple(float(a) for a in d["amplitude"]),
                            noise=d["noise"], pc=pc, seed=d["seed"])


def config_to_dict(cfg):
    solver = next(k for k, v in SOLVERS.items()
                  if v == (cfg.pc.predict_method, cfg.pc.correct_method))
    return {
        "rows": cfg.rows, "cols": cfg.n, "alpha": cfg.alpha, "noise_var": cfg.noise_var,
        "active": cfg.active, "omega": cfg.omega, "Ts": cfg.pc.Ts, "P": cfg.pc.P,
        "C": cfg.pc.C, "gamma_factor": cfg.pc.gamma_factor, "steps": cfg.pc.steps,
        "seed": cfg.seed, "solver": solver, "noise": cfg.noise,
        "amplitude": list(cfg.amplitude), "tol": cfg.pc.tol, "oracle_tol": cfg.pc.oracle_tol,
    }


def parse_config(path, overrides=None):
    """
    Read a JSON config file and apply `overrides` (keys of the flat schema,
    None values ignored).

    Raises
    ------
    ConfigError
        Listing every missing or invalid field.
    """
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"cannot read config file: {exc}"]) from exc
    if not text.strip():
        raw = {}
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config is not valid JSON: {exc}"]) from exc
    if overrides:
        if not isinstance(raw, dict):
            raise ConfigError(["config must be a JSON object"])
        raw = dict(raw)
        raw.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(raw)


#%% COMMANDS

def _summary_text(summary):
    width = max(len(k) for k in summary)
    return "".join(f"{k.ljust(width)} : {v!r}\n" for k, v in summary.items())


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def cmd_run(cfg, out_dir):
    """Run one experiment and write trajectory.csv, summary.txt and config.json."""
    os.makedirs(out_dir, exist_ok=True)
    _write(os.path.join(out_dir, "config.json"),
           json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")
    try:
        report = run_experiment(cfg)
    except Exception as exc:
        records = getattr(exc, "records", [])
        if records:
            _write(os.path.join(out_dir, "trajectory.csv"), trajectory_csv(records))
        logger.error("run failed: %s", exc)
        return 1
    _write(os.path.join(out_dir, "trajectory.csv"), trajectory_csv(report.records))
    _write(os.path.join(out_dir, "summary.txt"), _summary_text(report.summary))
    print(_summary_text(report.summary), end="")
    return 0


SWEEP_AXES = {"P": int, "C": int, "Ts": float, "seed": int, "solver": str,
              "alpha": float, "gamma_factor": float}
SWEEP_COLUMNS = ("cell", "axis", "value", "seed", "steady_mean_E_r", "steady_max_E_r",
                 "matvec_total", "matvec_corr_per_step", "status")


def parse_axis(text):
    """``"P=0,1,3"`` -> ``("P", [0, 1, 3])``."""
    name, sep, values = text.partition("=")
    name = name.strip()
    if not sep or name not in SWEEP_AXES:
        raise ConfigError([f"axis must look like NAME=v1,v2,... with NAME in {sorted(SWEEP_AXES)}"])
    items = [v.strip() for v in values.split(",") if v.strip()]
    if not items:
        raise ConfigError([f"empty value list for axis '{name}'"])
    try:
        return name, [SWEEP_AXES[name](v) for v in items]
    except ValueError as exc:
        raise ConfigError([f"bad value on axis '{name}': {exc}"]) from exc


def _cell(args):
    base, name, value, keep_horizon = args
    d = config_to_dict(base)
    d[name] = value
    if name == "Ts" and keep_horizon:
        d["steps"] = int(round(base.pc.steps * base.pc.Ts / value))
    cfg = config_from_dict(d)
    try:
        report = run_experiment(cfg)
    except Exception as exc:
        records = getattr(exc, "records", [])
        return cfg, (trajectory_csv(records) if records else None), None, f"error: {exc}"
    return cfg, trajectory_csv(report.records), report.summary, "ok"


def cmd_sweep(cfg, axis, out_dir, jobs=1, keep_horizon=False):
    """
    Run one cell per value on `axis` (a ``(name, values)`` pair) and write a
    trajectory file per cell plus ``sweep_summary.csv``. Failed cells are
    recorded and the sweep continues; the exit code is 1 if any cell failed.
    """
    name, values = axis
    if not values:
        raise ConfigError(["empty sweep list"])
    for v in values:
        d = config_to_dict(cfg)
        d[name] = v
        config_from_dict(d)
    os.makedirs(out_dir, exist_ok=True)
    tasks = [(cfg, name, v, keep_horizon) for v in values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell, tasks))
    else:
        results = [_cell(t) for t in tasks]

    rows = []
    for value, (cell_cfg, text, summary, status) in zip(values, results):
        cell = f"{name}-{value}"
        if text is not None:
            _write(os.path.join(out_dir, f"trajectory_{cell}.csv"), text)
        summary = summary or {}
        rows.append([cell, name, value, cell_cfg.seed,
                     repr(summary.get("steady_mean_E_r", float("nan"))),
                     repr(summary.get("steady_max_E_r", float("nan"))),
                     summary.get("matvec_total", ""),
                     repr(summary.get("matvec_corr_per_step", float("nan"))), status])
        print(f"{cell}: {status} steady_mean_E_r={summary.get('steady_mean_E_r', float('nan')):.4e}")
    with open(os.path.join(out_dir, "sweep_summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        w.writerows(rows)
    return 0 if all(r[-1] == "ok" for r in rows) else 1


def cmd_bounds(m, L, gamma, C0, C1, C2, C3, P, C, tau, Ts, out_dir="."):
    """Print the convergence constants and write ``bounds.json``."""
    report = theorem2_bounds(m, L, gamma, C0, C1, C2, C3, P, C, tau, Ts)
    d = report.to_dict()
    width = max(len(k) for k in d)
    for k, v in d.items():
        if isinstance(v, float):
            v = f"{v:.10g}"
        print(f"{k.ljust(width)} = {v}")
    os.makedirs(out_dir, exist_ok=True)
    _write(os.path.join(out_dir, "bounds.json"), json.dumps(d, indent=2) + "\n")
    return 0


#%% ENTRY POINT

def _overrides(args):
    return {"P": args.P, "C": args.C, "Ts": args.Ts, "alpha": args.alpha,
            "seed": args.seed, "solver": args.solver, "steps": args.steps}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tvfbe", description="Prediction-correction tracking with the forward-backward envelope.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment_args(p):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--P", type=int)
        p.add_argument("--C", type=int)
        p.add_argument("--Ts", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--solver", choices=sorted(SOLVERS))

    experiment_args(sub.add_parser("run", help="run one tracking experiment"))
    sw = sub.add_parser("sweep", help="run a one-parameter sweep")
    experiment_args(sw)
    sw.add_argument("--axis", required=True, help="e.g. P=0,1,3,5,10 or solver=qn-ls,qn,grad")
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--keep-horizon", action="store_true",
                    help="on a Ts axis, scale steps so the simulated time stays fixed")

    b = sub.add_parser("bounds", help="print convergence constants")
    for name in ("m", "L", "gamma", "tau", "Ts"):
        b.add_argument(f"--{name}", type=float, required=True)
    for name in ("C0", "C1", "C2", "C3"):
        b.add_argument(f"--{name}", type=float, default=0.0)
    b.add_argument("--P", type=int, required=True)
    b.add_argument("--C", type=int, required=True)
    b.add_argument("--out", default=".")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "bounds":
            return cmd_bounds(args.m, args.L, args.gamma, args.C0, args.C1, args.C2, args.C3,
                              args.P, args.C, args.tau, args.Ts, args.out)
        cfg = parse_config(args.config, _overrides(args))
        if args.command == "run":
            return cmd_run(cfg, args.out)
        return cmd_sweep(cfg, parse_axis(args.axis), args.out, jobs=args.jobs,
                         keep_horizon=args.keep_horizon)
    except (ConfigError, BoundsError) as exc:
        print(f"tvfbe: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
