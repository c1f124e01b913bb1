"""Command line: ``wcsched run|sweep|compare <scenario file>``."""

from __future__ import annotations

import argparse
import os
import sys

from . import metrics
from .config import ConfigError, load_config
from .runner import (
    SWEEP_PERIODS_MS, SWEEP_RATES, compare, compare_csv, replication_seeds, run_scenario,
    sweep, sweep_csv,
)
from .scheduler import MODES

EXIT_CONFIG = 2


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _periods(text):
    """``8,10,12`` or ``start:stop:step`` (inclusive), in milliseconds."""
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        out, h = [], start
        while h <= stop + 1e-9:
            out.append(round(h, 6))
            h += step
        return out
    return _floats(text)


def _modes(text):
    modes = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in modes if m not in MODES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown mode(s) {bad}; choose from {MODES}")
    return modes


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="base seed (overrides the file)")
    common.add_argument("--out", help="output directory (overrides the file)")
    common.add_argument("--trace", action="store_true",
                        help="dump every dispatched event to trace.csv")
    common.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p = argparse.ArgumentParser(prog="wcsched", description=__doc__, parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run one scenario")
    r.add_argument("config")

    s = sub.add_parser("sweep", parents=[common], help="DMR over (rate, fixed period)")
    s.add_argument("config")
    s.add_argument("--rates", type=_floats, default=list(SWEEP_RATES))
    s.add_argument("--periods", type=_periods, default=list(SWEEP_PERIODS_MS),
                   help="ms, comma list or start:stop:step")
    s.add_argument("--reps", type=int, default=10)
    s.add_argument("--duration", type=float, default=3.0, help="seconds per run")

    c = sub.add_parser("compare", parents=[common], help="Non-FS vs TT vs ET on one scenario")
    c.add_argument("config")
    c.add_argument("--modes", type=_modes, default=list(MODES))
    c.add_argument("--reps", type=int)
    return p


def _load(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output"] = args.out
    return load_config(args.config, **overrides)


def cmd_run(args, cfg):
    seeds = replication_seeds(cfg)
    reports = []
    for i, seed in enumerate(seeds):
        sub = cfg.output if len(seeds) == 1 else os.path.join(cfg.output, f"seed_{seed}")
        os.makedirs(sub, exist_ok=True)
        trace = open(os.path.join(sub, "trace.csv"), "w") if args.trace else None
        try:
            if trace is not None:
                trace.write("time_us,seq,kind,node\n")
            res = run_scenario(cfg, seed=seed, trace=trace)
        finally:
            if trace is not None:
                trace.close()
        res.write(sub)
        reports.append(res.report)
        print(f"== seed {seed} ==")
        print(res.report.summary())
    if len(seeds) > 1:
        text = metrics.summarize_replications(reports, seeds)
        with open(os.path.join(cfg.output, "replications.csv"), "w") as fh:
            fh.write(text)
        print(text, end="")


def cmd_sweep(args, cfg):
    pts = sweep(cfg, rates=args.rates, periods_ms=args.periods, replications=args.reps,
                duration_us=int(round(args.duration * 1e6)), jobs=args.jobs)
    text = sweep_csv(pts)
    os.makedirs(cfg.output, exist_ok=True)
    with open(os.path.join(cfg.output, "sweep.csv"), "w") as fh:
        fh.write(text)
    print(text, end="")


def cmd_compare(args, cfg):
    summaries = compare(cfg, modes=args.modes, replications=args.reps, jobs=args.jobs)
    text = compare_csv(summaries)
    os.makedirs(cfg.output, exist_ok=True)
    with open(os.path.join(cfg.output, "compare.csv"), "w") as fh:
        fh.write(text)
    print(text, end="")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    {"run": cmd_run, "sweep": cmd_sweep, "compare": cmd_compare}[args.command](args, cfg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
