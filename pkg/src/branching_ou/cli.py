"""Command-line experiment runner.

Subcommands: ``simulate`` (write a trajectory CSV), ``verify`` (run a
named preset, write a JSON report plus diagnostic figures), ``theory``
(print a closed-form value as JSON), ``sweep`` (replicated occupation
statistics over a (b, gamma) grid, CSV plus a heat map).

Exit codes are a stable contract: 0 success/pass, 1 verification failure,
2 usage or configuration error, 3 domain error, 4 resource or IO error.
The default output directory comes from $BRANCHING_OU_OUTDIR, falling
back to the working directory.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from typing import Optional

from . import analysis, figures, presets, theory
from . import io as bio
from .errors import (
    ArgumentError,
    BranchingOUError,
    ConfigurationError,
    DomainError,
    ResourceError,
    SnapshotParseError,
    StateError,
)
from .model import ModelParams
from .simulate import RngStream, SnapshotPolicy, StepperConfig, run

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_RESOURCE = 4


def _out_dir(arg: Optional[str]) -> str:
    path = arg or os.environ.get("BRANCHING_OU_OUTDIR") or "."
    os.makedirs(path, exist_ok=True)
    return path


def _parse_start(text: Optional[str]) -> Optional[tuple[float, ...]]:
    if text is None:
        return None
    return tuple(float(v) for v in text.split(","))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="branching-ou",
        description="Branching O-U particle system: simulation and verification")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one trajectory and write CSV snapshots")
    sim.add_argument("--config", help="JSON config file; flags override its entries")
    sim.add_argument("--b", type=float, default=None)
    sim.add_argument("--gamma", type=float, default=None)
    sim.add_argument("--dim", type=int, default=None)
    sim.add_argument("--generations", type=int, default=None,
                     help="number of branching events")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--mode", choices=["euler", "exact"], default=None)
    sim.add_argument("--step", type=float, default=None,
                     help="Euler step size, must be 2^-k")
    sim.add_argument("--start", default=None,
                     help="comma-separated initial position")
    sim.add_argument("--substeps", action="store_true",
                     help="record intra-interval Euler states")
    sim.add_argument("--out", default=None, help="output CSV path")
    sim.add_argument("--run-id", default=None)

    ver = sub.add_parser("verify", help="run a verification preset")
    ver.add_argument("preset", help=f"one of: {', '.join(sorted(presets.PRESETS))}")
    ver.add_argument("--reps", type=int, default=None)
    ver.add_argument("--jobs", type=int, default=1)
    ver.add_argument("--quick", action="store_true",
                     help="1/10 replicates, widened thresholds (smoke test)")
    ver.add_argument("--b", type=float, default=None)
    ver.add_argument("--gamma", type=float, default=None)
    ver.add_argument("--dim", type=int, default=None)
    ver.add_argument("--generations", type=int, default=None)
    ver.add_argument("--seed", type=int, default=None)
    ver.add_argument("--out", default=None, help="output directory")
    ver.add_argument("--no-figures", action="store_true")

    th = sub.add_parser("theory", help="print a closed-form value as JSON")
    th.add_argument("quantity", choices=[
        "terminal-variance", "com-time-change", "relative-variance",
        "relative-variance-closed", "noise-covariance", "pair-covariance",
        "covariance-bound", "limit-density", "watanabe-scale",
        "indicator-cov", "delta-transform"])
    th.add_argument("--b", type=float, default=None)
    th.add_argument("--gamma", type=float, default=None)
    th.add_argument("--gamma-plus-b", type=float, default=None)
    th.add_argument("--t", type=float, default=None)
    th.add_argument("--m", type=int, default=None)
    th.add_argument("--a", type=int, default=None)
    th.add_argument("--n", type=int, default=None)
    th.add_argument("--d", type=int, default=1)
    th.add_argument("--c", type=float, default=10.0)
    th.add_argument("--rho", type=float, default=None)
    th.add_argument("--sigma-sq", type=float, default=1.0)
    th.add_argument("--lo", type=float, default=-1.0)
    th.add_argument("--hi", type=float, default=1.0)
    th.add_argument("--y", default="0")
    th.add_argument("--delta", type=float, default=None)

    sw = sub.add_parser("sweep", help="occupation statistics over a (b, gamma) grid")
    sw.add_argument("--b-grid", required=True,
                    help="comma-separated b values")
    sw.add_argument("--gamma-grid", required=True,
                    help="comma-separated gamma values")
    sw.add_argument("--reps", type=int, default=100)
    sw.add_argument("--generations", type=int, default=12)
    sw.add_argument("--dim", type=int, default=1)
    sw.add_argument("--seed", type=int, default=2040)
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--out", default=None, help="output directory")
    sw.add_argument("--no-figures", action="store_true")
    return parser


# ---------------------------------------------------------------------------
# Subcommand bodies
# ---------------------------------------------------------------------------

def _cmd_simulate(args) -> int:
    if args.config:
        params, cfg = bio.load_config(args.config)
    else:
        params, cfg = ModelParams(), StepperConfig()
    updates = {}
    for field, attr in [("b", "b"), ("gamma", "gamma"), ("d", "dim"),
                        ("horizon_m", "generations"), ("seed", "seed")]:
        val = getattr(args, attr)
        if val is not None:
            updates[field] = val
    if args.start is not None:
        updates["start"] = _parse_start(args.start)
    if updates:
        params = dataclasses.replace(params, **updates)
    if args.mode is not None or args.step is not None:
        cfg = StepperConfig(mode=args.mode or cfg.mode,
                            h=args.step if args.step is not None else cfg.h)
    trajectory = run(params, cfg, RngStream(params.seed),
                     SnapshotPolicy(substeps=args.substeps))
    out = args.out or os.path.join(_out_dir(None), "trajectory.csv")
    run_id = args.run_id or f"run-{params.seed}"
    bio.write_snapshot(trajectory, out, run_id=run_id)
    final = trajectory[-1]
    print(f"wrote {out}: {len(trajectory)} snapshots, final generation "
          f"{final.m} with {final.n} particles at t={final.t}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    overrides = {}
    for field, attr in [("b", "b"), ("gamma", "gamma"), ("d", "dim"),
                        ("horizon_m", "generations"), ("seed", "seed")]:
        val = getattr(args, attr)
        if val is not None:
            overrides[field] = val
    report = presets.run_preset(args.preset, replicates=args.reps,
                                jobs=args.jobs, quick=args.quick,
                                overrides=overrides or None)
    out_dir = _out_dir(args.out)
    stem = args.preset
    report_path = os.path.join(out_dir, f"{stem}_report.json")
    bio.write_report(report, report_path)
    written = [report_path]
    if not args.no_figures:
        written += figures.figures_for_report(report, out_dir, stem)
    for s in report.statistics:
        status = "pass" if s.passed else "FAIL"
        theo = "" if s.theoretical is None else f" vs {s.theoretical:.6g}"
        print(f"[{status}] {s.name}: {s.observed:.6g}{theo}")
    print(f"report: {', '.join(written)}")
    print(f"{args.preset}: {'PASS' if report.passed else 'FAIL'} "
          f"({report.runtime_seconds:.1f}s, {report.replicates} replicates)")
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


def _require(args, names: list[str]) -> None:
    missing = [n for n in names if getattr(args, n.replace("-", "_")) is None]
    if missing:
        raise ArgumentError(f"missing required option(s): "
                            + ", ".join("--" + n for n in missing))


def _cmd_theory(args) -> int:
    q = args.quantity
    if q == "terminal-variance":
        _require(args, ["b"])
        value = theory.terminal_variance(args.b)
    elif q == "com-time-change":
        _require(args, ["t", "b"])
        value = theory.com_time_change(args.t, args.b)
    elif q == "relative-variance":
        _require(args, ["gamma", "m"])
        value = theory.relative_variance(args.m, args.gamma)
    elif q == "relative-variance-closed":
        _require(args, ["gamma", "m"])
        value = theory.relative_variance_closed(args.m, args.gamma).value
    elif q == "noise-covariance":
        _require(args, ["gamma", "n"])
        value = theory.noise_covariance(args.n, args.gamma)
    elif q == "pair-covariance":
        _require(args, ["gamma", "m", "a"])
        value = theory.pair_covariance(args.m, args.a, args.gamma)
    elif q == "covariance-bound":
        _require(args, ["gamma", "m", "a"])
        value = theory.covariance_bound(args.m, args.a, args.gamma, args.c)
    elif q == "limit-density":
        _require(args, ["gamma_plus_b"])
        y = [float(v) for v in str(args.y).split(",")]
        value = theory.limit_density(y, args.gamma_plus_b, args.d)
    elif q == "watanabe-scale":
        _require(args, ["n"])
        value = theory.watanabe_scale(args.n, args.d)
    elif q == "indicator-cov":
        _require(args, ["rho"])
        value = theory.indicator_cov_gaussian(args.rho, args.sigma_sq,
                                              (args.lo, args.hi))
    else:  # delta-transform
        _require(args, ["b", "gamma", "delta"])
        p = theory.delta_transform(ModelParams(b=args.b, gamma=args.gamma),
                                   args.delta)
        print(json.dumps({"quantity": q, "b": p.b, "gamma": p.gamma,
                          "gamma_plus_b": p.gamma_eff}))
        return EXIT_OK
    print(json.dumps({"quantity": q, "value": value}))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    b_values = [float(v) for v in args.b_grid.split(",")]
    g_values = [float(v) for v in args.gamma_grid.split(",")]
    out_dir = _out_dir(args.out)
    rows = []
    for b in b_values:
        for gamma in g_values:
            params = ModelParams(d=args.dim, b=b, gamma=gamma,
                                 horizon_m=args.generations, seed=args.seed)
            rows.append(analysis.occupation_stats(params, args.reps,
                                                  args.generations, jobs=args.jobs))
            r = rows[-1]
            print(f"b={b:+.3f} gamma={gamma:+.3f}: slope={r['log_occupation_slope']:+.4f} "
                  f"(conjectured {r['conjectured_slope']:+.4f}), "
                  f"occupied={r['box_occupied_fraction_final']:.3f}")
    csv_path = os.path.join(out_dir, "sweep.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    written = [csv_path]
    if not args.no_figures:
        fig_path = os.path.join(out_dir, "sweep.png")
        figures.sweep_figure(rows, fig_path)
        written.append(fig_path)
    print(f"wrote {', '.join(written)}")
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "theory":
            return _cmd_theory(args)
        return _cmd_sweep(args)
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ResourceError, SnapshotParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ConfigurationError, ArgumentError, StateError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BranchingOUError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
