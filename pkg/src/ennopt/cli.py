"""Command-line pipeline: sample data, train ensembles, optimize, audit, and
aggregate run reports.

Every command takes --seed and is reproducible under it. Verbosity comes from
the ENNOPT_LOG environment variable (off, info, trace); the default shows
warnings only.
"""

import argparse
import csv
import glob as globmod
import json
import logging
import os
import sys

import numpy as np

from .bench import (TrainConfig, get_benchmark, read_dataset_csv, sample_lhs,
                    sample_mvn, train_ensemble, write_dataset_csv)
from .driver import (RunConfig, optimize_baseline, optimize_two_phase,
                     write_report_csv, write_report_json)
from .model import load_model, save_model, unscale_input, unscale_objective
from .oracle import enumerate_patterns_exact
from .phase2 import Phase2Params
from .tighten import TightenParams

log = logging.getLogger(__name__)


def _setup_logging():
    level = {"off": logging.CRITICAL + 10, "info": logging.INFO,
             "trace": logging.DEBUG}.get(os.environ.get("ENNOPT_LOG", ""),
                                         logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _cmd_sample(args):
    f = get_benchmark(args.fn)
    if args.n <= 0:
        raise ValueError("--n must be positive")
    sampler = {"lhs": sample_lhs, "mvn": sample_mvn}[args.method]
    data = sampler(f, args.n, seed=args.seed)
    write_dataset_csv(data, args.out)
    log.info("wrote %d %s rows for %s to %s", args.n, args.method, args.fn, args.out)
    return 0


def _parse_layers(text):
    try:
        widths = [int(w) for w in text.split(",") if w.strip()]
    except ValueError:
        raise ValueError("--layers expects comma-separated integers, got %r" % text)
    if not widths or any(w <= 0 for w in widths):
        raise ValueError("--layers widths must be positive, got %r" % text)
    return widths


def _cmd_train(args):
    data = read_dataset_csv(args.data)
    cfg = TrainConfig(e=args.e, layers=_parse_layers(args.layers),
                      learning_rate=args.lr, batch_size=args.batch_size,
                      max_epochs=args.max_epochs, patience=args.patience,
                      seed=args.seed)
    if cfg.e <= 0:
        raise ValueError("--e must be positive")
    model = train_ensemble(data, cfg, sense=args.sense)
    save_model(model, args.out)
    log.info("trained e=%d on %d rows, wrote %s", cfg.e, data.X.shape[0], args.out)
    return 0


def _cmd_optimize(args):
    model = load_model(args.model)
    cfg = RunConfig(
        mode=args.mode,
        phase1_limit=args.phase1_limit,
        total_limit=args.time_limit,
        tighten=TightenParams(survey_nodes=args.K,
                              criticality_threshold=args.tau,
                              milp_time_limit=args.tighten_milp_limit,
                              workers=args.threads),
        phase2=Phase2Params(small_box_width=args.delta,
                            heuristic_radius=args.epsilon,
                            step_size0=args.mu0,
                            init_iterations=args.Q),
        seed=args.seed,
    )
    run = optimize_two_phase if cfg.mode == "two_phase" else optimize_baseline
    report = run(model, cfg)
    report.label = args.label or os.path.basename(args.model)
    write_report_json(report, args.out)
    if args.csv:
        write_report_csv(report, args.csv)
    log.info("%s: objective %.9g gap %.4g%% in %.1fs", report.label,
             report.objective_unscaled, 100.0 * report.gap,
             report.seconds["total"])
    return 0


def _cmd_oracle(args):
    model = load_model(args.model)
    x, value = enumerate_patterns_exact(model)
    out = {
        "objective_scaled": value,
        "objective_unscaled": unscale_objective(model, value),
        "x_scaled": [float(v) for v in x],
        "x_unscaled": [float(v) for v in unscale_input(model, x)],
        "sense": model.sense,
    }
    with open(args.out, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


REPORT_COLUMNS = ["instance", "e", "L", "time", "solved", "gap", "time_gap"]


def _cmd_report(args):
    paths = sorted(globmod.glob(args.glob))
    if not paths:
        raise FileNotFoundError("no report files match %r" % args.glob)
    rows = []
    for path in paths:
        with open(path) as fh:
            d = json.load(fh)
        gap = d.get("gap_percent")
        tg = d.get("time_gap")
        rows.append([
            d.get("label") or os.path.basename(path),
            d["instance"]["e"],
            len(d["instance"]["hidden_widths"]),
            "%.3f" % d["seconds"]["total"],
            int(d["solved"]),
            "%.6g" % gap if gap is not None else "inf",
            "%.3f" % tg if tg is not None else "inf",
        ])
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        w.writerows(rows)
    log.info("aggregated %d reports into %s", len(rows), args.out)
    return 0


def _build_parser():
    p = argparse.ArgumentParser(
        prog="ennopt",
        description="Optimize the mean output of a ReLU network ensemble "
                    "over a box domain.")
    sub = p.add_subparsers(dest="command", required=True)

    def add_seed(sp):
        sp.add_argument("--seed", type=int, default=0,
                        help="random seed (default 0)")

    sp = sub.add_parser("sample", help="draw a benchmark dataset to CSV")
    sp.add_argument("--fn", required=True,
                    choices=["peaks", "beale", "perm3", "spring5"])
    sp.add_argument("--method", default="lhs", choices=["lhs", "mvn"])
    sp.add_argument("--n", type=int, required=True, help="number of rows")
    sp.add_argument("--out", required=True)
    add_seed(sp)
    sp.set_defaults(func=_cmd_sample)

    sp = sub.add_parser("train", help="fit a bagged MLP ensemble on a CSV")
    sp.add_argument("--data", required=True)
    sp.add_argument("--e", type=int, default=1, help="ensemble size")
    sp.add_argument("--layers", default="20",
                    help="comma-separated hidden widths, e.g. 20,20")
    sp.add_argument("--sense", default="max", choices=["max", "min"],
                    help="optimization sense stored in the model")
    sp.add_argument("--lr", type=float, default=0.01)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--max-epochs", type=int, default=500)
    sp.add_argument("--patience", type=int, default=30)
    sp.add_argument("--out", required=True)
    add_seed(sp)
    sp.set_defaults(func=_cmd_train)

    sp = sub.add_parser("optimize", help="optimize a saved ensemble model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--mode", default="two_phase",
                    choices=["baseline", "two_phase"])
    sp.add_argument("--time-limit", type=float, default=3600.0)
    sp.add_argument("--phase1-limit", type=float, default=180.0)
    sp.add_argument("--K", type=int, default=1000,
                    help="discrepancy survey node budget")
    sp.add_argument("--tau", type=float, default=0.01,
                    help="criticality threshold")
    sp.add_argument("--delta", type=float, default=0.02,
                    help="small-box fallback width")
    sp.add_argument("--epsilon", type=float, default=0.02,
                    help="primal heuristic box half-width")
    sp.add_argument("--mu0", type=float, default=0.05,
                    help="initial multiplier step size")
    sp.add_argument("--Q", type=int, default=20,
                    help="multiplier warm-up iterations")
    sp.add_argument("--tighten-milp-limit", type=float, default=5.0,
                    help="seconds per targeted bound MILP")
    sp.add_argument("--threads", type=int, default=1,
                    help="bound-tightening LP threads (default 1)")
    sp.add_argument("--label", default="")
    sp.add_argument("--csv", default="", help="also write a one-row CSV here")
    sp.add_argument("--out", required=True)
    add_seed(sp)
    sp.set_defaults(func=_cmd_optimize)

    sp = sub.add_parser("oracle", help="exact optimum by pattern enumeration")
    sp.add_argument("--model", required=True)
    sp.add_argument("--out", required=True)
    add_seed(sp)
    sp.set_defaults(func=_cmd_oracle)

    sp = sub.add_parser("report", help="aggregate run reports into a table")
    sp.add_argument("--glob", required=True,
                    help="glob matching optimize JSON outputs")
    sp.add_argument("--out", required=True)
    add_seed(sp)
    sp.set_defaults(func=_cmd_report)

    return p


def main(argv=None):
    _setup_logging()
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print("ennopt: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
