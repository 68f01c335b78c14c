"""Command-line front end.

Every subcommand loads a metric (``--metric round|zermelo:EPS|file``),
runs the matching check suite, prints one line per check and writes the
JSON report to ``--out`` when given.  ``finsler flow`` additionally dumps a
trajectory CSV with columns t, chart, x1, x2, s, I, J, K.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from .charts import Chart, ChartPoint, SigmaPoint
from .coframe import CoframeEngine
from .errors import FinslerError
from .flow import flow_many
from .metrics import resolve_metric
from .reporting import emit_plot_data, write_csv, write_json
from .suite import DEFAULT_TOLERANCES, SUITE_ORDER, ExperimentConfig, run_suite

_SINGLE_CHECKS = ["validate", "invariants", "antipodal", "fixed-points",
                  "polar", "reversibility", "conserve", "lambda"]


def _add_common(parser):
    parser.add_argument("--metric", required=True,
                        help="round, zermelo:EPS, or a config file path")
    parser.add_argument("--out", help="write the JSON report here")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--grid", type=int, default=16,
                        help="base grid density for sweeps")
    parser.add_argument("--n-fiber", type=int, default=32)
    parser.add_argument("--csv-dir", help="emit plot-ready CSV series here")
    parser.add_argument("--no-timing", action="store_true",
                        help="zero runtimes for byte-identical reports")
    for name in DEFAULT_TOLERANCES:
        parser.add_argument(f"--tol-{name}", type=float, default=None,
                            help=f"override tolerance (default "
                                 f"{DEFAULT_TOLERANCES[name]:g})")


def _config_from(args, checks) -> ExperimentConfig:
    tolerances = {}
    for name in DEFAULT_TOLERANCES:
        v = getattr(args, f"tol_{name.replace('-', '_')}")
        if v is not None:
            tolerances[name] = v
    return ExperimentConfig(
        metric_spec=args.metric, checks=checks, seed=args.seed,
        grid=args.grid, n_fiber=args.n_fiber, tolerances=tolerances,
        out=args.out, csv_dir=args.csv_dir, timing=not args.no_timing)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="finsler",
        description="Structure-equation diagnostics for Finsler metrics "
                    "on the 2-sphere")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SINGLE_CHECKS:
        p = sub.add_parser(name, help=f"run the {name} checks")
        _add_common(p)

    p = sub.add_parser("suite", help="run a selection of checks")
    _add_common(p)
    p.add_argument("--checks", default=",".join(SUITE_ORDER),
                   help="comma-separated check names")

    p = sub.add_parser("flow", help="integrate one geodesic and dump samples")
    _add_common(p)
    p.add_argument("--chart", choices=["north", "south"], default="north")
    p.add_argument("--x1", type=float, default=0.0)
    p.add_argument("--x2", type=float, default=0.0)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--t", type=float, default=2.0 * math.pi)
    p.add_argument("--samples", type=int, default=257)
    p.add_argument("--csv", help="trajectory CSV path")
    return parser


def _print_report(report):
    for rec in report["checks"]:
        marks = {"pass": "PASS", "fail": "FAIL", "skip": "SKIP"}
        extra = ""
        if rec["residuals"]:
            key, val = max(rec["residuals"].items(),
                           key=lambda kv: abs(kv[1]) if isinstance(kv[1], float) else 0)
            if isinstance(val, float):
                extra = f"  worst {key}={val:.3e}"
        if rec["status"] == "skip" and rec["values"].get("reason"):
            extra = f"  ({rec['values']['reason'][:60]})"
        print(f"[{marks[rec['status']]}] {rec['name']}{extra}")
    s = report["summary"]
    print(f"summary: {s['pass']} pass, {s['fail']} fail, {s['skip']} skip")


def _run_flow(args) -> int:
    metric = resolve_metric(args.metric, validate=True)
    u = SigmaPoint(ChartPoint(Chart(args.chart), args.x1, args.x2), args.s)
    batch = flow_many(metric, [u], args.t)
    times = np.linspace(0.0, args.t, args.samples)
    ys, cs = batch.sample(times)
    engine = CoframeEngine(metric)
    I = np.empty(args.samples)
    J = np.empty(args.samples)
    K = np.empty(args.samples)
    for ci, chart in enumerate((Chart.NORTH, Chart.SOUTH)):
        mask = cs[:, 0] == ci
        if not np.any(mask):
            continue
        d = engine.invariants_fields(chart, ys[mask, 0, 0], ys[mask, 0, 1],
                                     ys[mask, 0, 2])
        I[mask], J[mask], K[mask] = d["I"], d["J"], d["K"]
    rows = []
    chart_names = ["north", "south"]
    for k, t in enumerate(times):
        rows.append((float(t), chart_names[cs[k, 0]], ys[k, 0, 0], ys[k, 0, 1],
                     ys[k, 0, 2] % (2 * math.pi), I[k], J[k], K[k]))
    if args.csv:
        write_csv(args.csv, ["t", "chart", "x1", "x2", "s", "I", "J", "K"], rows)
        print(f"wrote {args.samples} samples to {args.csv}")
    report = {
        "metric": metric.describe(),
        "start": {"chart": args.chart, "x1": args.x1, "x2": args.x2, "s": args.s},
        "t": args.t,
        "end": rows[-1][:5],
        "K_dev_max": float(np.max(np.abs(K - 1.0))),
        "IJ_drift": float(np.max(np.abs(I * I + J * J - (I[0] ** 2 + J[0] ** 2)))),
        "integrator": batch.stats,
    }
    if args.out:
        write_json(args.out, report)
    print(f"flow: t={args.t:g}  end={rows[-1][1]} "
          f"({rows[-1][2]:.6f}, {rows[-1][3]:.6f}, s={rows[-1][4]:.6f})  "
          f"K_dev={report['K_dev_max']:.2e}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "flow":
            return _run_flow(args)
        if args.command == "suite":
            checks = [c.strip() for c in args.checks.split(",") if c.strip()]
        else:
            checks = [args.command]
        config = _config_from(args, checks)
        report = run_suite(config)
        _print_report(report)
        if args.out:
            write_json(args.out, report)
        if args.csv_dir:
            for what in ("conserve", "polar", "grid"):
                try:
                    path = emit_plot_data(report, what, args.csv_dir)
                    print(f"wrote {path}")
                except FinslerError:
                    pass
        return report["exit_code"]
    except FinslerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
