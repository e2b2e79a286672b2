"""Command-line front end (``mvjump``).

Exit codes: 0 success, 2 configuration or input error, 3 divergence or
coefficient evaluation failure, 4 a declared probe bound failed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .config import build_plan, build_probe, build_scenario, build_solver, scenario_config
from .errors import ConfigError, DivergenceError, EvaluationError, MVJumpError
from .lab import run_experiment
from .model import AveragedPair
from .probe import run_probes
from .solver import simulate, simulate_coupled

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_CONFIG", "EXIT_DIVERGENCE", "EXIT_BOUND"]

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_BOUND = 0, 2, 3, 4

EXPERIMENTS = {"average": "averaging", "chaos": "chaos", "refine": "refinement",
               "moments": "moments", "holder": "holder"}


def _fmt(v):
    return format(float(v), ".17g")


def trajectory_csv(traj) -> str:
    """``time, particle_id, x1..xd`` rows, time-major."""
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\r\n")
    d = traj.states.shape[2]
    out.writerow(["time", "particle_id"] + [f"x{c + 1}" for c in range(d)])
    for t, states in zip(traj.times, traj.states):
        ts = _fmt(t)
        for i, row in enumerate(states):
            out.writerow([ts, i] + [_fmt(v) for v in row])
    return buf.getvalue()


def trajectory_json(traj) -> str:
    return json.dumps({"times": traj.times.tolist(), "states": traj.states.tolist(),
                       "provenance": traj.provenance}, indent=1, sort_keys=True)


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Outputs:
    """Writes output files and then a manifest listing them with their hashes."""

    def __init__(self, out_dir, args):
        self.dir = out_dir
        self.args = args
        self.files = []
        self.started = datetime.now(timezone.utc).isoformat()
        os.makedirs(out_dir, exist_ok=True)

    def write(self, name, text):
        path = os.path.join(self.dir, name)
        _atomic_write(path, text)
        data = text.encode("utf-8")
        self.files.append({"path": name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})
        return path

    def manifest(self, resolved):
        doc = {
            "tool": "mvjump",
            "version": __version__,
            "command": self.args.command,
            "argv": sys.argv[1:] if self.args.argv is None else self.args.argv,
            "seed": self.args.seed,
            "resolved_config": resolved,
            "started_at": self.started,
            "finished_at": datetime.now(timezone.utc).isoformat(),
            "outputs": self.files,
        }
        _atomic_write(os.path.join(self.dir, "manifest.json"),
                      json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _describe(target):
    if isinstance(target, AveragedPair):
        return {"fast": target.fast.describe(), "averaged": target.averaged.describe()}
    return target.describe()


def cmd_simulate(args) -> int:
    cfg = scenario_config(args.scenario)
    target = build_scenario(cfg, eps=args.eps)
    solver = build_solver(cfg, args.particles, args.steps, args.threads)
    out = _Outputs(args.out_dir, args)
    render, ext = (trajectory_csv, "csv") if args.format == "csv" else (trajectory_json, "json")
    if isinstance(target, AveragedPair):
        if args.system == "coupled":
            fast, avg = simulate_coupled(target, solver, args.seed)
            out.write(f"trajectory.{ext}", render(fast))
            out.write(f"trajectory_averaged.{ext}", render(avg))
        else:
            sc = target.fast if args.system == "fast" else target.averaged
            out.write(f"trajectory.{ext}", render(simulate(sc, solver, args.seed)))
    else:
        out.write(f"trajectory.{ext}", render(simulate(target, solver, args.seed)))
    out.manifest({"scenario": _describe(target), "solver": vars(solver) | {"workers": args.threads},
                  "system": args.system, "seed": args.seed})
    return EXIT_OK


def _grid(text):
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--grid must be a comma-separated list of numbers, got {text!r}") from None


def cmd_experiment(args) -> int:
    kind = EXPERIMENTS[args.command]
    cfg = scenario_config(args.scenario)
    target = build_scenario(cfg, eps=args.eps)
    plan = build_plan(cfg, target, kind, seed=args.seed, particles=args.particles, steps=args.steps,
                      grid=_grid(args.grid), replications=args.replications, horizon=args.horizon,
                      workers=args.threads)
    report = run_experiment(plan)
    out = _Outputs(args.out_dir, args)
    out.write("report.json", report.to_json() + "\n")
    if args.format == "csv":
        out.write("report.csv", report.to_csv())
    out.manifest({"plan": plan.describe(), "workers": args.threads})
    print(json.dumps({"rows": [vars(r) for r in report.rows], "verdicts": report.verdicts,
                      "slope": None if report.fit is None else report.fit.slope}, default=str))
    return EXIT_OK


def _declared(items):
    bounds = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--declare expects NAME=VALUE, got {item!r}")
        try:
            bounds[name.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"--declare value for {name!r} must be a number, got {value!r}") from None
    return bounds


def cmd_verify(args) -> int:
    cfg = scenario_config(args.scenario)
    target = build_scenario(cfg, eps=args.eps)
    probe_cfg = build_probe(cfg, seed=args.seed, radius=args.radius, samples=args.samples,
                            bounds=_declared(args.declare))
    report = run_probes(target, probe_cfg)
    out = _Outputs(args.out_dir, args)
    out.write("probe_report.json", report.to_json() + "\n")
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["assumption", "estimate", "bound", "passed"])
        for name, e in sorted(report.entries.items()):
            w.writerow([name, _fmt(e.estimate), "" if e.bound is None else _fmt(e.bound),
                        "" if e.passed is None else str(e.passed).lower()])
        out.write("probe_report.csv", buf.getvalue())
    out.manifest({"scenario": _describe(target), "probe": probe_cfg.to_dict()})
    for name in report.failed:
        e = report.entries[name]
        print(f"bound check failed: {name} estimate {e.estimate:.6g} > bound {e.bound:.6g}", file=sys.stderr)
    return EXIT_BOUND if report.failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvjump", description="Mean-field jump diffusion simulator and diagnostics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="built-in name or path to a JSON/TOML config")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--eps", type=float, default=None, help="override the time-scale parameter")
        p.add_argument("--out-dir", default=".")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("simulate", help="simulate a particle system and write its trajectory")
    common(p)
    p.add_argument("--particles", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--system", choices=("fast", "averaged", "coupled"), default="fast",
                   help="which system of a fast/averaged pair to simulate")
    p.set_defaults(run=cmd_simulate)

    for name, kind in EXPERIMENTS.items():
        p = sub.add_parser(name, help=f"run a {kind} experiment")
        common(p)
        p.add_argument("--particles", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--grid", help="comma-separated grid (eps, N, n or lags)")
        p.add_argument("--replications", type=int)
        p.add_argument("--horizon", type=float, help="override the time horizon T")
        p.set_defaults(run=cmd_experiment)

    p = sub.add_parser("verify", help="probe the structural assumptions of the coefficients")
    common(p)
    p.add_argument("--radius", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--declare", action="append", metavar="NAME=VALUE",
                   help="declared bound for a probe entry (repeatable)")
    p.set_defaults(run=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = None if argv is None else list(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        with np.errstate(all="ignore"):
            return args.run(args)
    except (DivergenceError, EvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (MVJumpError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
