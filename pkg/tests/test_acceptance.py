"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import time
from dataclasses import replace

import numpy as np
from scipy import stats as sps

from conftest import ACCEPTANCE_LINES
from oracles import gradual_reference, lru_reference
from shiftbench.cli import EXIT_OK, main
from shiftbench.config import ExperimentConfig
from shiftbench.dynamics import (
    Dependency,
    DynamicsState,
    Protocol,
    advance_pattern,
    build_hregions,
    sample_regions,
)
from shiftbench.harness import analyze_trace, collect_trace, get_database, initial_regions, run_experiment, sweep_h
from shiftbench.objectbase import DbParams, generate_database
from shiftbench.storage import BufferPool

DEFAULTS = ExperimentConfig()


def verdict(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_1_database_statistics():
    t0 = time.perf_counter()
    g = generate_database(DbParams())
    elapsed = time.perf_counter() - t0
    sizes = g.sizes
    checks = {
        "objects": g.num_objects == 100_000,
        "size range": sizes.min() >= 50 and sizes.max() <= 1600,
        "mean": abs(sizes.mean() - 233) <= 0.10 * 233,
        "total": abs(g.total_bytes - 23.3e6) <= 0.05 * 23.3e6,
        "runtime": elapsed < 5,
    }
    verdict(
        1,
        all(checks.values()),
        f"n={g.num_objects} sizes=[{sizes.min()},{sizes.max()}] mean={sizes.mean():.1f} "
        f"total={g.total_bytes} t={elapsed:.2f}s failed={[k for k, v in checks.items() if not v]}",
    )


def test_criterion_2_hot_region_law():
    t0 = time.perf_counter()
    graph = get_database(DEFAULTS.db)
    trace = collect_trace(DEFAULTS, graph)
    st = analyze_trace(trace, initial_regions(DEFAULTS, graph), hr_size=DEFAULTS.regional.hr_size)
    hot_ok = abs(st.hot_size - 0.003) <= 0.1 * 0.003 and abs(st.hot_share - 0.80) <= 0.02

    uniform = replace(DEFAULTS.regional, lowest_prob_w=0.8)
    regions = build_hregions(uniform, np.arange(graph.num_objects), np.random.default_rng(0))
    draws = sample_regions(regions, np.random.default_rng(1), 100_000)
    counts = np.bincount(draws, minlength=len(regions))
    expected = 100_000 * np.array([len(r) for r in regions]) / graph.num_objects
    p = sps.chisquare(counts, expected).pvalue
    elapsed = time.perf_counter() - t0
    verdict(
        2,
        hot_ok and p > 0.01 and elapsed < 10,
        f"roots={len(trace)} hot_size={st.hot_size:.4f} hot_share={st.hot_share:.4f} "
        f"uniform chi2 p={p:.3f} over {len(regions)} regions t={elapsed:.2f}s",
    )


def test_criterion_3_change_cadence():
    graph = get_database(DEFAULTS.db)
    results = {}
    for h in (1.0, 0.01, 0.0006):
        m = run_experiment(DEFAULTS.with_h(h), graph)
        period = int(np.ceil(1 / h))
        results[h] = (m.pattern_changes, 10_000 // period)
    verdict(3, all(a == b for a, b in results.values()), f"(observed, expected) per h: {results}")


def test_criterion_4_lru_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        capacity = int(rng.integers(1, 9))
        pages = int(rng.integers(1, 27))
        seq = rng.integers(0, pages, size=int(rng.integers(0, 300))).tolist()
        pool = BufferPool(capacity)
        if [pool.access_page(p) for p in seq] != lru_reference(seq, capacity):
            mismatches += 1
    elapsed = time.perf_counter() - t0
    verdict(4, mismatches == 0 and elapsed < 5, f"1000 strings, mismatches={mismatches} t={elapsed:.2f}s")


def test_criterion_5_static_pattern_benefit():
    graph = get_database(DEFAULTS.db)
    t0 = time.perf_counter()
    wins = {"prp": 0, "gp": 0}
    detail = []
    for seed in range(5):
        base = DEFAULTS.with_seed(seed)
        none = run_experiment(base.with_policy("none"), graph).second_half_io()
        row = [none]
        for p in wins:
            io = run_experiment(base.with_policy(p), graph).second_half_io()
            wins[p] += io <= none
            row.append(io)
        detail.append(tuple(row))
    elapsed = time.perf_counter() - t0
    verdict(
        5,
        wins["prp"] >= 4 and wins["gp"] >= 4 and elapsed < 120,
        f"wins={wins} (none, prp, gp) second-half I/O={detail} t={elapsed:.0f}s",
    )


def test_criterion_6_robustness_trend():
    t0 = time.perf_counter()
    rows = sweep_h(DEFAULTS, h_values=[0.0, 1e-4, 6e-4, 1e-2, 1.0], policies=["none", "gp", "aggressive"], seeds=[0])
    elapsed = time.perf_counter() - t0
    io = {(m.h, m.policy): m.total_io for m in rows}

    def gap(policy, h):
        return io[h, policy] - io[h, "none"]

    table = {h: (io[h, "none"], io[h, "gp"], io[h, "aggressive"]) for h in sorted({m.h for m in rows})}
    ok = gap("aggressive", 1.0) > gap("aggressive", 0.0) and gap("aggressive", 1.0) > gap("gp", 1.0)
    verdict(
        6,
        ok and elapsed < 600,
        f"aggressive gap h=0 {gap('aggressive', 0.0)}, h=1 {gap('aggressive', 1.0)}; gp gap h=1 "
        f"{gap('gp', 1.0)}; (none, gp, aggressive) per h={table} t={elapsed:.0f}s",
    )


def test_criterion_7_gradual_staircase():
    cfg = replace(DEFAULTS.regional, protocol=Protocol.GRADUAL, h=1.0)
    n = len(build_hregions(cfg, np.arange(100_000), np.random.default_rng(0)))
    state = DynamicsState(regions=build_hregions(cfg, np.arange(100_000), np.random.default_rng(0)))
    ref = gradual_reference(n, 0.80, 0.0006, 0.80, 0.02, 3000)
    mismatches = 0
    bad_steps = 0
    prev = [r.weight for r in state.regions]
    for snapshot in ref:
        advance_pattern(state, cfg)
        now = [r.weight for r in state.regions]
        mismatches += now != snapshot
        for a, b in zip(prev, now):
            if a != b and not (abs(abs(b - a) - 0.02) < 1e-12 or b in (0.0006, 0.80)):
                bad_steps += 1
            if not 0.0006 <= b <= 0.80:
                bad_steps += 1
        prev = now
    verdict(
        7,
        mismatches == 0 and bad_steps == 0,
        f"{len(ref)} triggers over {n} regions: snapshot mismatches={mismatches} off-staircase steps={bad_steps}",
    )


def _violations(protocol):
    graph = get_database(DEFAULTS.db)
    cfg = replace(DEFAULTS, dependency=replace(DEFAULTS.dependency, protocol=protocol))
    trace = collect_trace(cfg, graph)
    adjacency = graph.adjacency
    bad = dep = fallbacks = 0
    for prev, row in zip(trace, trace[1:]):
        if row.phase == "dependency":
            dep += 1
            if protocol is Dependency.BY_REFERENCE:
                bad += row.root_id not in adjacency[prev.root_id]
            else:
                bad += graph.class_of(row.root_id) != graph.class_of(prev.root_id)
        elif row.phase == "fallback":
            fallbacks += 1
            bad += protocol is not Dependency.BY_REFERENCE or bool(adjacency[prev.root_id])
    return len(trace), dep, fallbacks, bad


def test_criterion_8_dependency_soundness():
    byref = _violations(Dependency.BY_REFERENCE)
    same = _violations(Dependency.SAME_CLASS)
    verdict(
        8,
        byref[3] == 0 and same[3] == 0 and byref[1] > 0 and same[1] > 0,
        f"(roots, dependency roots, fallbacks, violations) byref={byref} sameclass={same}",
    )


def test_criterion_9_sweep_determinism(tmp_path):
    args = ["sweep", "--policy", "none,gp", "--h", "0,0.01,1", "--seed", "7", "--transactions", "1000"]
    codes = [main(args + ["--out", str(tmp_path / d)]) for d in ("a", "b")]
    a = (tmp_path / "a" / "results.csv").read_bytes()
    b = (tmp_path / "b" / "results.csv").read_bytes()
    verdict(
        9,
        codes == [EXIT_OK, EXIT_OK] and a == b and len(a.splitlines()) == 7,
        f"exit codes={codes} identical={a == b} rows={len(a.splitlines()) - 1}",
    )
