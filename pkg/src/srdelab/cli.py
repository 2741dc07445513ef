"""Command-line entry point: ``srdelab <subcommand> [options]``.

Exit status is 0 on success, 1 for configuration errors and 2 for failures
during computation.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time

from . import experiments as ex
from .config import ConfigError, ExperimentConfig
from .io import FORMATS, default_threads, emit_outputs, ensure_writable, manifest

log = logging.getLogger("srdelab")

COMMANDS = ("simulate", "sweep", "sde-exit", "check-condition", "verify-lemma",
            "factorization-check", "ladder-probe")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or YAML experiment config")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: $SRDELAB_THREADS or 1)")
    common.add_argument("--out-dir", help="output directory (default from config)")
    common.add_argument("--format", choices=FORMATS, help="table format (default csv)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="srdelab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="one trajectory with its full e(t) trace")
    sweep = sub.add_parser("sweep", parents=[common], help="blow-up frequencies over a grid")
    sweep.add_argument("--traces", action="store_true", help="also write per-trajectory e(t)")
    sub.add_parser("sde-exit", parents=[common], help="scalar SDE exit probabilities")
    sub.add_parser("check-condition", parents=[common], help="condition margins on a grid")
    sub.add_parser("verify-lemma", parents=[common], help="growth-envelope checks")
    sub.add_parser("factorization-check", parents=[common],
                   help="direct vs factorized stochastic convolution")
    probe = sub.add_parser("ladder-probe", parents=[common], help="ladder drop frequencies")
    probe.add_argument("--level", type=int)
    probe.add_argument("--eps", type=float, nargs="+")
    return parser


def load_config(args):
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.updated(seed=args.seed)
    return cfg


def run(args, cfg, threads):
    """Dispatch one subcommand; returns ``{table_name: (rows, columns)}`` and extras."""
    extra = {}
    if args.command == "simulate":
        summary, scols, trace, tcols = ex.simulate_one(cfg)
        return {"simulate": (summary, scols), "trace": (trace, tcols)}, extra
    if args.command == "sweep":
        rows, cols, traces, runtimes = ex.run_sweep(
            cfg, threads, traces=args.traces or cfg["output"].get("traces", False))
        extra["cell_runtime_s"] = runtimes
        tables = {"sweep": (rows, cols)}
        if traces:
            tables["traces"] = (traces, ex.TRACE_COLUMNS)
        return tables, extra
    if args.command == "sde-exit":
        return {"sde_exit": ex.sde_exit(cfg)}, extra
    if args.command == "check-condition":
        return {"condition": ex.condition_table(cfg)}, extra
    if args.command == "verify-lemma":
        return {"lemma": ex.verify_lemma(cfg)}, extra
    if args.command == "factorization-check":
        return {"factorization": ex.factorization_check(cfg)}, extra
    if args.command == "ladder-probe":
        return {"ladder": ex.ladder_decay_probe(cfg, args.level, args.eps, threads)}, extra
    raise ValueError(f"unknown command {args.command}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    threads = args.threads if args.threads is not None else default_threads()
    if threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return 1
    out_dir = args.out_dir or cfg["output"].get("dir", "results")
    fmt = args.format or cfg["output"].get("format", "csv")
    if fmt not in FORMATS:
        print(f"config error: unknown format {fmt!r}", file=sys.stderr)
        return 1
    try:
        ensure_writable(out_dir)
    except OSError as exc:
        print(f"error: output directory {out_dir} is not writable: {exc}", file=sys.stderr)
        return 2

    start = time.perf_counter()
    try:
        tables, extra = run(args, cfg, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    wall = time.perf_counter() - start
    doc = manifest(cfg, cfg["seed"], args.command, wall,
                   dict(extra, threads=threads, format=fmt))
    written = emit_outputs(tables, out_dir, fmt, doc)
    for name, path in written.items():
        log.info("wrote %s -> %s", name, path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
