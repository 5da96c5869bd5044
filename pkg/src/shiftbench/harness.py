"""Experiment orchestration: single runs, H sweeps, trace analysis and result files."""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import ExperimentConfig
from .dynamics import HRegionState, Phase, RootStream
from .errors import AnalysisError, ConfigError
from .objectbase import DbParams, ObjectGraph, generate_database, simple_traversal
from .policies import AccessEvent, HeatStats, PolicyKind, maybe_recluster
from .storage import BufferPool, apply_recluster, place_sequential

log = logging.getLogger(__name__)

SERIES_INTERVAL = 100

RESULT_FIELDS = (
    "protocol",
    "dependency",
    "policy",
    "h",
    "seed",
    "txns",
    "transaction_io",
    "clustering_io",
    "total_io",
    "hit_rate",
)
TRACE_FIELDS = ("txn_id", "root_id", "phase", "region_of_root")
PAGE_TRACE_FIELDS = ("txn_id", "page_id", "event")


@dataclass(frozen=True)
class TraceRow:
    txn_id: int
    root_id: int
    phase: str
    region_of_root: int | None


@dataclass(frozen=True)
class RunMetrics:
    protocol: str
    dependency: str
    policy: str
    h: float
    seed: int
    txns: int
    transaction_io: int
    clustering_io: int
    total_io: int
    hit_rate: float
    # (transaction_io, clustering_io) incurred in each interval of SERIES_INTERVAL txns
    series: tuple[tuple[int, int], ...] = ()
    pattern_changes: int = 0
    fallbacks: int = 0
    config_digest: str = ""
    wall_time: float = field(default=0.0, compare=False)

    def second_half_io(self) -> int:
        half = len(self.series) // 2
        return sum(t + c for t, c in self.series[half:])

    def row(self) -> dict:
        return {
            "protocol": self.protocol,
            "dependency": self.dependency,
            "policy": self.policy,
            "h": repr(float(self.h)),
            "seed": self.seed,
            "txns": self.txns,
            "transaction_io": self.transaction_io,
            "clustering_io": self.clustering_io,
            "total_io": self.total_io,
            "hit_rate": f"{self.hit_rate:.6f}",
        }


@lru_cache(maxsize=4)
def get_database(params: DbParams) -> ObjectGraph:
    return generate_database(params)


def workload_rng(seed: int) -> np.random.Generator:
    # Stream 0 drives root selection only, so every policy sees the same roots.
    return np.random.default_rng([seed, 0])


def run_experiment(
    config: ExperimentConfig,
    graph: ObjectGraph | None = None,
    on_root: Callable[[TraceRow], None] | None = None,
    on_page: Callable[[int, int, str], None] | None = None,
) -> RunMetrics:
    """Run ``config.num_transactions`` transactions and return the run's I/O accounting.

    ``on_root`` receives one TraceRow per transaction; ``on_page`` receives
    ``(txn_id, page_id, event)`` for every buffer and clustering page event.
    """
    config.validate()
    graph = graph if graph is not None else get_database(config.db)
    config.storage.validate(int(graph.sizes.max()))
    started = time.perf_counter()

    stream = RootStream(graph, config.regional, config.dependency, workload_rng(config.seed), config.integrated)
    pagemap = place_sequential(graph, config.storage)
    txn_box = [0]
    page_cb = (lambda page, kind: on_page(txn_box[0], page, kind)) if on_page else None
    pool = BufferPool(config.storage.frames, page_cb)
    policy = config.policy
    clustering = policy.kind is not PolicyKind.NONE
    stats = HeatStats(graph.num_objects, policy.decay, policy.co_access_window) if clustering else None

    depth = config.traversal_depth
    tally = pool.tally
    series = []
    last = (0, 0)
    access = pool.access_page
    for txn in range(config.num_transactions):
        txn_box[0] = txn
        root, phase, region = stream.next_root()
        if on_root:
            on_root(TraceRow(txn, root, phase.value, region))
        seq = simple_traversal(graph, root, depth)
        page_of = pagemap.page_of
        if stats is None:
            for oid in seq:
                access(page_of[oid])
        else:
            for pos, oid in enumerate(seq):
                page = page_of[oid]
                stats.observe(AccessEvent(txn, oid, page, access(page), pos))
        stream.finish(seq)
        done = txn + 1
        if stats is not None and done % policy.trigger_period == 0:
            plan = maybe_recluster(policy, stats, pagemap, pool)
            if plan:
                apply_recluster(pool, pagemap, plan)
        if done % SERIES_INTERVAL == 0 or done == config.num_transactions:
            series.append((tally.transaction_io - last[0], tally.clustering_io - last[1]))
            last = (tally.transaction_io, tally.clustering_io)

    accesses = tally.hits + tally.transaction_io
    metrics = RunMetrics(
        protocol=config.regional.protocol.value,
        dependency=config.dependency.protocol.value + ("+integrated" if config.integrated else ""),
        policy=policy.kind.value,
        h=config.regional.h,
        seed=config.seed,
        txns=config.num_transactions,
        transaction_io=tally.transaction_io,
        clustering_io=tally.clustering_io,
        total_io=tally.total,
        hit_rate=tally.hits / accesses if accesses else 0.0,
        series=tuple(series),
        pattern_changes=stream.state.changes,
        fallbacks=stream.state.fallbacks,
        config_digest=config.digest(),
        wall_time=time.perf_counter() - started,
    )
    log.info(
        "run %s/%s policy=%s h=%g seed=%d total_io=%d (%.1fs)",
        metrics.protocol,
        metrics.dependency,
        metrics.policy,
        metrics.h,
        metrics.seed,
        metrics.total_io,
        metrics.wall_time,
    )
    return metrics


def _run_cell(config: ExperimentConfig) -> RunMetrics:
    return run_experiment(config)


def sweep_h(
    config: ExperimentConfig,
    h_values: Sequence[float] | None = None,
    policies: Sequence[PolicyKind | str] | None = None,
    seeds: Sequence[int] | None = None,
    jobs: int = 1,
) -> list[RunMetrics]:
    """Run every (h, policy, seed) cell; rows come back sorted by (h, policy, seed)."""
    h_values = list(config.h_sweep if h_values is None else h_values)
    policies = [PolicyKind(p) for p in (config.policies if policies is None else policies)]
    seeds = list(config.seeds if seeds is None else seeds)
    if not h_values:
        raise ConfigError("sweep.h_sweep must not be empty")
    if not policies:
        raise ConfigError("sweep.policies must not be empty")
    for h in h_values:
        if not 0 <= h <= 1:
            raise ConfigError(f"sweep.h_sweep value {h} outside [0, 1]")
    cells = [config.with_h(h).with_policy(p).with_seed(s) for h in h_values for p in policies for s in seeds]
    for c in cells:
        c.validate()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        graph = get_database(config.db)
        rows = [run_experiment(c, graph) for c in cells]
    order = {p.value: i for i, p in enumerate(policies)}
    return sorted(rows, key=lambda m: (m.h, order[m.policy], m.seed))


@dataclass(frozen=True)
class HotRegionStats:
    counts: tuple[int, ...]
    shares: tuple[float, ...]
    hot_regions: tuple[int, ...]
    hot_share: float
    hot_size: float
    expected_share: float
    passed: bool


def analyze_trace(
    trace: Iterable[TraceRow],
    regions: Sequence[HRegionState],
    hr_size: float | None = None,
    share_tol: float = 0.02,
    size_rtol: float = 0.1,
) -> HotRegionStats:
    """Hot-region statistics of a root trace against the regions that produced it.

    The hot regions are those holding the maximum weight. The check passes
    when their share of roots is within ``share_tol`` of their normalised
    weight and, if ``hr_size`` is given, their size fraction is within
    ``size_rtol`` of it.
    """
    counts = np.zeros(len(regions), dtype=np.int64)
    n = 0
    for row in trace:
        if row.region_of_root is None:
            raise AnalysisError(f"trace row {row.txn_id} has no region annotation")
        if not 0 <= row.region_of_root < len(regions):
            raise AnalysisError(f"trace row {row.txn_id} names unknown region {row.region_of_root}")
        counts[row.region_of_root] += 1
        n += 1
    if n == 0:
        raise AnalysisError("empty trace")
    weights = np.array([r.weight if len(r) else 0.0 for r in regions])
    sizes = np.array([len(r) for r in regions])
    hot = np.flatnonzero(weights == weights.max())
    hot_share = counts[hot].sum() / n
    hot_size = sizes[hot].sum() / sizes.sum()
    expected = weights[hot].sum() / weights.sum()
    ok = abs(hot_share - expected) <= share_tol
    if hr_size is not None:
        ok = ok and abs(hot_size - hr_size) <= size_rtol * hr_size
    return HotRegionStats(
        counts=tuple(counts.tolist()),
        shares=tuple((counts / n).tolist()),
        hot_regions=tuple(hot.tolist()),
        hot_share=float(hot_share),
        hot_size=float(hot_size),
        expected_share=float(expected),
        passed=bool(ok),
    )


def initial_regions(config: ExperimentConfig, graph: ObjectGraph | None = None) -> list[HRegionState]:
    """The regions a run with ``config`` starts from (same seed, same partition)."""
    graph = graph if graph is not None else get_database(config.db)
    return RootStream(graph, config.regional, config.dependency, workload_rng(config.seed), config.integrated).state.regions


def collect_trace(config: ExperimentConfig, graph: ObjectGraph | None = None) -> list[TraceRow]:
    """Root trace of a run, without the storage simulation."""
    config.validate()
    graph = graph if graph is not None else get_database(config.db)
    stream = RootStream(graph, config.regional, config.dependency, workload_rng(config.seed), config.integrated)
    rows = []
    for txn in range(config.num_transactions):
        root, phase, region = stream.next_root()
        rows.append(TraceRow(txn, root, phase.value, region))
        stream.finish(simple_traversal(graph, root, config.traversal_depth))
    return rows


def write_trace(rows: Iterable[TraceRow], out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for r in rows:
        w.writerow((r.txn_id, r.root_id, r.phase, "" if r.region_of_root is None else r.region_of_root))


def read_trace(src) -> list[TraceRow]:
    rows = []
    reader = csv.DictReader(src)
    if reader.fieldnames is None or tuple(reader.fieldnames) != TRACE_FIELDS:
        raise AnalysisError(f"trace header must be {','.join(TRACE_FIELDS)}")
    for rec in reader:
        region = rec["region_of_root"]
        rows.append(TraceRow(int(rec["txn_id"]), int(rec["root_id"]), rec["phase"], int(region) if region else None))
    return rows


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else f"{x:.3f}"


def plot_tables(table: Sequence[RunMetrics]) -> dict[str, str]:
    """One CSV per (protocol, dependency): rows are h values, columns mean total I/O per policy."""
    groups: dict[tuple[str, str], list[RunMetrics]] = {}
    for m in table:
        groups.setdefault((m.protocol, m.dependency), []).append(m)
    out = {}
    for (protocol, dependency), rows in sorted(groups.items()):
        policies = list(dict.fromkeys(m.policy for m in rows))
        hs = sorted({m.h for m in rows})
        cells: dict[tuple[float, str], list[int]] = {}
        for m in rows:
            cells.setdefault((m.h, m.policy), []).append(m.total_io)
        lines = []
        for h in hs:
            line = [repr(float(h))]
            for p in policies:
                vals = cells.get((h, p))
                line.append(_num(sum(vals) / len(vals)) if vals else "")
            lines.append(line)
        name = f"plot_{protocol}" + ("" if dependency == "random" else f"_{dependency.replace('+', '_')}") + ".csv"
        out[name] = _csv_text(["h", *policies], lines)
    return out


def emit_results(table: Sequence[RunMetrics], out_dir: str | Path) -> list[Path]:
    """Write ``results.csv`` and the plot-data files; returns the written paths."""
    if not table:
        raise ValueError("no results to write")
    out_dir = Path(out_dir)
    files = {"results.csv": _csv_text(RESULT_FIELDS, ([m.row()[k] for k in RESULT_FIELDS] for m in table))}
    files.update(plot_tables(table))
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in files.items():
        path = out_dir / name
        path.write_text(text)
        written.append(path)
    return written


def describe(m: RunMetrics) -> str:
    return (
        f"{m.protocol}/{m.dependency} policy={m.policy} h={m.h:g} seed={m.seed}: "
        f"txn_io={m.transaction_io} clustering_io={m.clustering_io} total_io={m.total_io} "
        f"hit_rate={m.hit_rate:.4f}"
    )


__all__ = [
    "HotRegionStats",
    "Phase",
    "RunMetrics",
    "TraceRow",
    "analyze_trace",
    "collect_trace",
    "emit_results",
    "get_database",
    "initial_regions",
    "run_experiment",
    "sweep_h",
]
