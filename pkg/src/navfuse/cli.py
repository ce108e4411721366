"""Command-line interface.

Subcommands:
    run       execute an experiment and write report + traces
    simulate  emit a synthetic dataset (gt/imu/dvl CSVs)
    metrics   recompute VRMSE/MRMSE from a traces CSV
    compare   improvement table between a baseline and a candidate report

Exit codes: 0 success, 1 usage or data error, 2 filter divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .dataset import DataFormatError, write_dvl_csv, write_gt_csv, write_imu_csv
from .experiment import (
    corruption_from_config,
    load_config,
    run_experiment,
    trajectory_preset,
)
from .metrics import improvement
from .sim import corrupt, simulate_trajectory


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="navfuse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment")
    run_p.add_argument("--config", help="flat key=value config file")
    run_p.add_argument("--seed", type=int, help="override the config seed")
    run_p.add_argument("--mode", choices=("nespm", "linearized"), help="propagation mode")
    run_p.add_argument("--out-dir", required=True, help="report/trace output directory")

    sim_p = sub.add_parser("simulate", help="emit a synthetic dataset")
    sim_p.add_argument("--config", help="flat key=value config file")
    sim_p.add_argument("--seed", type=int, help="override the config seed")
    sim_p.add_argument("--out-dir", required=True, help="dataset output directory")

    met_p = sub.add_parser("metrics", help="recompute metrics from a traces CSV")
    met_p.add_argument("--traces", required=True, help="traces CSV written by 'run'")

    cmp_p = sub.add_parser("compare", help="improvement table between two reports")
    cmp_p.add_argument("baseline", help="baseline report.json")
    cmp_p.add_argument("candidate", help="candidate report.json")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config, seed=args.seed, mode=args.mode)
    report = run_experiment(config, out_dir=args.out_dir)
    print(report.to_json(), end="")
    return 2 if report.diverged else 0


def _cmd_simulate(args) -> int:
    config = load_config(args.config, seed=args.seed)
    spec = trajectory_preset(config.trajectory, config.duration_s)
    gt, imu, dvl = simulate_trajectory(spec)
    run = corrupt(gt, imu, dvl, corruption_from_config(config))
    out = Path(args.out_dir)
    write_gt_csv(out / "gt.csv", gt)
    write_imu_csv(out / "imu.csv", run.imu)
    write_dvl_csv(out / "dvl.csv", run.dvl)
    print(f"wrote {out / 'gt.csv'}, {out / 'imu.csv'}, {out / 'dvl.csv'}")
    return 0


def _cmd_metrics(args) -> int:
    data = np.genfromtxt(args.traces, delimiter=",", skip_header=1)
    if data.size == 0:
        raise DataFormatError(f"{args.traces}: no trace rows")
    data = np.atleast_2d(data)
    dv = data[:, 1:4]
    mis = data[:, 4:7]
    valid = np.all(np.isfinite(mis), axis=1)
    out = {
        "vrmse": float(np.sqrt(np.mean(np.sum(dv**2, axis=1)))),
        "mrmse": float(np.sqrt(np.mean(np.sum(mis[valid] ** 2, axis=1)))),
        "mrmse_excluded": int(np.sum(~valid)),
        "epochs": int(data.shape[0]),
    }
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def _cmd_compare(args) -> int:
    baseline = json.loads(Path(args.baseline).read_text())
    candidate = json.loads(Path(args.candidate).read_text())
    rows = []
    for key, label in (("vrmse_avg", "VRMSE [m/s]"), ("mrmse_avg", "MRMSE [rad]")):
        gain = improvement(baseline[key], candidate[key])
        rows.append((label, baseline[key], candidate[key], gain))
    print(f"{'metric':<14}{'baseline':>12}{'ours':>12}{'improvement':>14}")
    for label, base, ours, gain in rows:
        print(f"{label:<14}{base:>12g}{ours:>12g}{gain:>13.1f}%")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "metrics":
            return _cmd_metrics(args)
        return _cmd_compare(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
