"""Command-line entry point: ``shiftbench {generate,run,sweep,analyze,trace}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ExperimentConfig, load
from .dynamics import Dependency, Protocol
from .errors import AnalysisError, ConfigError
from .harness import (
    PAGE_TRACE_FIELDS,
    analyze_trace,
    collect_trace,
    describe,
    emit_results,
    get_database,
    initial_regions,
    read_trace,
    run_experiment,
    sweep_h,
    write_trace,
)
from .objectbase import dump_graph
from .policies import PolicyKind

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--h: cannot parse {text!r}") from None


def _policies(text: str) -> list[PolicyKind]:
    try:
        return [PolicyKind(v.strip().lower()) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--policy: unknown policy in {text!r}") from None


def _enum(kind, flag: str, text: str):
    try:
        return kind(text.lower())
    except ValueError:
        choices = ", ".join(k.value for k in kind)
        raise ConfigError(f"{flag}: {text!r} is not one of {choices}") from None


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file (or defaults) with command-line overrides applied."""
    config = load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed, seeds=(args.seed,))
    if args.protocol:
        config = replace(config, regional=replace(config.regional, protocol=_enum(Protocol, "--protocol", args.protocol)))
    if args.dependency:
        dep = _enum(Dependency, "--dependency", args.dependency)
        config = replace(config, dependency=replace(config.dependency, protocol=dep))
    if args.integrated:
        config = replace(config, integrated=True)
    if args.transactions is not None:
        config = replace(config, num_transactions=args.transactions)
    if args.h:
        hs = _floats(args.h)
        if not hs:
            raise ConfigError("--h: empty list")
        config = replace(config.with_h(hs[0]), h_sweep=tuple(hs))
    if args.policy:
        kinds = _policies(args.policy)
        if not kinds:
            raise ConfigError("--policy: empty list")
        config = replace(config.with_policy(kinds[0]), policies=tuple(kinds))
    config.validate()
    return config


def cmd_generate(config: ExperimentConfig, args) -> None:
    graph = get_database(config.db)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        dump_graph(graph, out / "database.txt")
        print(f"wrote {out / 'database.txt'} ({graph.num_objects} objects)")
    else:
        dump_graph(graph, sys.stdout)


def cmd_run(config: ExperimentConfig, args) -> None:
    out = Path(args.out) if args.out else None
    fh = None
    on_page = None
    if args.trace_pages:
        if out is None:
            raise ConfigError("--trace-pages requires --out")
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / "pages.csv", "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PAGE_TRACE_FIELDS)
        on_page = lambda txn, page, event: writer.writerow((txn, page, event))  # noqa: E731
    try:
        m = run_experiment(config, on_page=on_page)
    finally:
        if fh:
            fh.close()
    print(describe(m))
    if out is not None:
        emit_results([m], out)


def cmd_sweep(config: ExperimentConfig, args) -> None:
    rows = sweep_h(config, jobs=args.jobs)
    for m in rows:
        print(describe(m))
    paths = emit_results(rows, args.out or "results")
    print("wrote " + ", ".join(str(p) for p in paths))


def cmd_trace(config: ExperimentConfig, args) -> None:
    rows = collect_trace(config)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "trace.csv", "w", newline="") as fh:
            write_trace(rows, fh)
        print(f"wrote {out / 'trace.csv'} ({len(rows)} rows)")
    else:
        write_trace(rows, sys.stdout)


def cmd_analyze(config: ExperimentConfig, args) -> None:
    try:
        with open(args.trace, newline="") as fh:
            rows = read_trace(fh)
    except OSError as exc:
        raise AnalysisError(f"cannot read trace {args.trace}: {exc.strerror}") from None
    st = analyze_trace(rows, initial_regions(config), hr_size=config.regional.hr_size)
    print(f"roots={sum(st.counts)} regions={len(st.counts)} hot_regions={list(st.hot_regions)}")
    print(f"hot_size={st.hot_size:.5f} (target {config.regional.hr_size})")
    print(f"hot_share={st.hot_share:.4f} (expected {st.expected_share:.4f})")
    print("PASS" if st.passed else "FAIL")


COMMANDS = {
    "generate": cmd_generate,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "trace": cmd_trace,
    "analyze": cmd_analyze,
}


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI config file (defaults reproduce the published setup)")
    common.add_argument("--seed", type=int, help="experiment seed")
    common.add_argument("--policy", metavar="NAME[,NAME]", help="none, prp, gp, aggressive")
    common.add_argument("--protocol", metavar="NAME", help="moving, gradual, cycles")
    common.add_argument("--dependency", metavar="NAME", help="random, byref, traversed, sameclass")
    common.add_argument("--integrated", action="store_true", help="restrict dependency candidates by region weight")
    common.add_argument("--h", metavar="LIST", help="comma-separated h values")
    common.add_argument("--transactions", type=int, metavar="N", help="override num_transactions")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="shiftbench", description="Workload dynamics benchmark for object clustering.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="dump the object database")
    run = sub.add_parser("run", parents=[common], help="run one experiment")
    run.add_argument("--trace-pages", action="store_true", help="write pages.csv with every page event")
    sweep = sub.add_parser("sweep", parents=[common], help="sweep h for each policy and seed")
    sweep.add_argument("--jobs", type=int, default=1, help="worker processes")
    sub.add_parser("trace", parents=[common], help="emit the root trace as CSV")
    analyze = sub.add_parser("analyze", parents=[common], help="hot-region statistics of a trace")
    analyze.add_argument("trace", help="trace CSV written by the trace command")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        config = build_config(args)
        COMMANDS[args.command](config, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
