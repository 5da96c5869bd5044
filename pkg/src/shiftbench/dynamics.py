"""Access-pattern dynamics: H-regions, regional protocols and dependency protocols.

An H-region is a set of objects sharing one probability weight. A root is
drawn in two levels: a region with probability proportional to its weight,
then a member of that region uniformly. Regional protocols change the
weights over time at a rate ``h`` (one change step every ``ceil(1/h)`` root
selections); dependency protocols derive the next root's candidates from the
previous root or traversal.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ConfigError, EmptyCandidates
from .objectbase import ObjectGraph

# Salt for the pure same-class subset function; fixed so subsets never depend
# on the run seed.
SAME_CLASS_SALT = 0x5A3C1A55

# Weights this close to a bound are snapped onto it, so that an increment of
# exactly (highest - lowest) saturates despite rounding.
_SNAP = 1e-12


class Protocol(str, Enum):
    MOVING_WINDOW = "moving"
    GRADUAL = "gradual"
    CYCLES = "cycles"


class Dependency(str, Enum):
    RANDOM = "random"
    BY_REFERENCE = "byref"
    TRAVERSED = "traversed"
    SAME_CLASS = "sameclass"


class Assign(str, Enum):
    RANDOM = "random"
    BY_CLASS = "byclass"


class Direction(str, Enum):
    UP = "up"
    DOWN = "down"


class Phase(str, Enum):
    RANDOMISATION = "random"
    DEPENDENCY = "dependency"
    FALLBACK = "fallback"


@dataclass(frozen=True)
class HRegionSpec:
    hr_size: float
    init_prob_w: float
    lowest_prob_w: float
    highest_prob_w: float
    prob_w_incr_size: float
    object_assign_method: Assign = Assign.RANDOM
    init_dir: Direction = Direction.DOWN

    def validate(self) -> None:
        if not 0 < self.hr_size <= 1:
            raise ConfigError("regional.hr_size must be in (0, 1]")
        if not 0 <= self.lowest_prob_w <= self.init_prob_w <= self.highest_prob_w:
            raise ConfigError("regional weights must satisfy 0 <= lowest <= init <= highest")
        if self.prob_w_incr_size < 0:
            raise ConfigError("regional.prob_w_incr_size must be >= 0")


@dataclass
class HRegionState:
    spec: HRegionSpec
    members: np.ndarray
    weight: float
    dir: Direction

    def __len__(self) -> int:
        return len(self.members)

    def step(self) -> None:
        """Move the weight one increment in the current direction, clamped to bounds."""
        s = self.spec
        if self.dir is Direction.UP:
            w = self.weight + s.prob_w_incr_size
            self.weight = s.highest_prob_w if w >= s.highest_prob_w - _SNAP else w
        else:
            w = self.weight - s.prob_w_incr_size
            self.weight = s.lowest_prob_w if w <= s.lowest_prob_w + _SNAP else w

    @property
    def at_bound(self) -> bool:
        s = self.spec
        return self.weight >= s.highest_prob_w if self.dir is Direction.UP else self.weight <= s.lowest_prob_w


@dataclass(frozen=True)
class RegionalConfig:
    protocol: Protocol = Protocol.MOVING_WINDOW
    h: float = 0.0
    hr_size: float = 0.003
    highest_prob_w: float = 0.80
    lowest_prob_w: float = 0.0006
    prob_w_incr_size: float = 0.02
    object_assign_method: Assign = Assign.RANDOM
    # weight of the initially hot region; None means highest_prob_w
    init_prob_w: float | None = None
    # fixed weight of the unchanged third region under cycles; None means
    # lowest_prob_w scaled by its size relative to a cycling region
    cycles_rest_weight: float | None = None

    @property
    def period(self) -> int | None:
        """Root selections between change steps, or None when the pattern is frozen."""
        if self.h == 0:
            return None
        # round() absorbs representation error such as 1/0.01 = 100.00000000000001
        return math.ceil(round(1.0 / self.h, 9))

    @property
    def hot_weight(self) -> float:
        return self.highest_prob_w if self.init_prob_w is None else self.init_prob_w

    def spec(self) -> HRegionSpec:
        return HRegionSpec(
            hr_size=self.hr_size,
            init_prob_w=self.hot_weight,
            lowest_prob_w=self.lowest_prob_w,
            highest_prob_w=self.highest_prob_w,
            prob_w_incr_size=self.prob_w_incr_size,
            object_assign_method=self.object_assign_method,
        )

    def validate(self) -> None:
        if not 0 <= self.h <= 1:
            raise ConfigError("regional.h must be in [0, 1]")
        self.spec().validate()
        if self.protocol is Protocol.CYCLES and 2 * self.hr_size > 1:
            raise ConfigError("regional.hr_size must be <= 0.5 for the cycles protocol")
        if self.cycles_rest_weight is not None and self.cycles_rest_weight < 0:
            raise ConfigError("regional.cycles_rest_weight must be >= 0")


@dataclass(frozen=True)
class DependencyConfig:
    protocol: Dependency = Dependency.RANDOM
    hybrid_r: int = 5
    same_class_subset_fraction: float = 0.1
    # static hot/cold skew used by the randomisation phase
    hot_fraction: float = 0.03
    hot_prob: float = 0.80

    def validate(self) -> None:
        if self.hybrid_r < 0:
            raise ConfigError("dependency.hybrid_r must be >= 0")
        if not 0 < self.same_class_subset_fraction <= 1:
            raise ConfigError("dependency.same_class_subset_fraction must be in (0, 1]")
        if not 0 < self.hot_fraction <= 1:
            raise ConfigError("dependency.hot_fraction must be in (0, 1]")
        if not 0 < self.hot_prob <= 1:
            raise ConfigError("dependency.hot_prob must be in (0, 1]")


@dataclass
class DynamicsState:
    regions: list[HRegionState]
    first_phase: list[HRegionState] = field(default_factory=list)
    window_pos: int = 0
    # region the gradual window is cooling down, None before the first move
    prev_window: int | None = None
    roots_since_change: int = 0
    changes: int = 0
    phase: Phase = Phase.RANDOMISATION
    phase_step: int = 0
    prev_root: int | None = None
    prev_traversal: Sequence[int] | None = None
    partition_seed: int = 0
    fallbacks: int = 0


def _region_count(hr_size: float) -> int:
    return max(1, math.floor(round(1.0 / hr_size, 9)))


def _assignment_order(universe: np.ndarray, method: Assign, rng: np.random.Generator, graph: ObjectGraph | None):
    if method is Assign.BY_CLASS:
        if graph is None:
            raise ConfigError("by-class object assignment needs the object graph")
        classes = graph.object_class[universe]
        return universe[np.lexsort((universe, classes))]
    return universe[rng.permutation(len(universe))]


def _equal_slices(n: int, k: int) -> list[tuple[int, int]]:
    base, extra = divmod(n, k)
    bounds, lo = [], 0
    for i in range(k):
        hi = lo + base + (1 if i < extra else 0)
        bounds.append((lo, hi))
        lo = hi
    return bounds


def build_hregions(
    config: RegionalConfig,
    universe: Sequence[int] | np.ndarray,
    rng: np.random.Generator,
    graph: ObjectGraph | None = None,
    max_regions: int | None = None,
) -> list[HRegionState]:
    """Partition ``universe`` into H-regions and set their initial weights.

    Window protocols get ``floor(1/hr_size)`` equal regions (capped by
    ``max_regions``), the first one hot. Cycles gets two cycling regions of
    ``hr_size`` each plus a fixed-weight remainder.
    """
    universe = np.asarray(universe, dtype=np.int64)
    if len(universe) == 0:
        raise ConfigError("cannot build H-regions over an empty object set")
    spec = config.spec()
    ordered = _assignment_order(universe, config.object_assign_method, rng, graph)
    n = len(ordered)

    if config.protocol is Protocol.CYCLES:
        k = max(1, math.floor(config.hr_size * n))
        if 2 * k > n:
            raise ConfigError("regional.hr_size too large for the cycles protocol on this object set")
        rest = ordered[2 * k :]
        rest_w = config.cycles_rest_weight
        if rest_w is None:
            rest_w = config.lowest_prob_w * len(rest) / k
        rest_spec = HRegionSpec(
            hr_size=len(rest) / n,
            init_prob_w=rest_w,
            lowest_prob_w=rest_w,
            highest_prob_w=rest_w,
            prob_w_incr_size=0.0,
            object_assign_method=config.object_assign_method,
        )
        return [
            HRegionState(spec, ordered[:k], config.highest_prob_w, Direction.DOWN),
            HRegionState(spec, ordered[k : 2 * k], config.lowest_prob_w, Direction.UP),
            HRegionState(rest_spec, rest, rest_w, Direction.DOWN),
        ]

    count = _region_count(config.hr_size)
    if max_regions is not None:
        count = min(count, max_regions)
    elif count > n:
        raise ConfigError(f"regional.hr_size={config.hr_size} yields {count} regions for only {n} objects")
    regions = []
    for i, (lo, hi) in enumerate(_equal_slices(n, count)):
        w = config.hot_weight if i == 0 else config.lowest_prob_w
        regions.append(HRegionState(spec, ordered[lo:hi], w, Direction.DOWN))
    return regions


def region_probabilities(regions: Sequence[HRegionState]) -> np.ndarray:
    """Selection probability of each region; empty regions get zero and drop out of the sum."""
    w = np.array([r.weight if len(r) else 0.0 for r in regions], dtype=float)
    total = w.sum()
    if total <= 0:
        raise ConfigError("all H-region weights are zero")
    return w / total


def _cumulative(regions: Sequence[HRegionState]) -> np.ndarray:
    w = np.array([r.weight if len(r) else 0.0 for r in regions], dtype=float)
    c = np.cumsum(w)
    if c[-1] <= 0:
        raise ConfigError("all H-region weights are zero")
    return c


def draw_root(regions: Sequence[HRegionState], rng: np.random.Generator) -> tuple[int, int]:
    """Two-level draw; returns ``(region_index, object_id)``."""
    c = _cumulative(regions)
    i = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    # u*total can round up to exactly total
    i = min(i, len(c) - 1)
    while len(regions[i]) == 0 or c[i] == (c[i - 1] if i else 0.0):
        i -= 1
    members = regions[i].members
    return i, int(members[rng.integers(len(members))])


def select_root(regions: Sequence[HRegionState], rng: np.random.Generator) -> int:
    return draw_root(regions, rng)[1]


def sample_regions(regions: Sequence[HRegionState], rng: np.random.Generator, size: int) -> np.ndarray:
    """Region indices of ``size`` independent first-level draws (bulk Monte Carlo)."""
    return rng.choice(len(regions), size=size, p=region_probabilities(regions))


def advance_pattern(state: DynamicsState, config: RegionalConfig) -> DynamicsState:
    """Count one root selection and apply a change step when the period elapses."""
    period = config.period
    if period is None:
        return state
    state.roots_since_change += 1
    if state.roots_since_change >= period:
        state.roots_since_change = 0
        change_step(state, config)
    return state


def change_step(state: DynamicsState, config: RegionalConfig) -> None:
    regions = state.regions
    n = len(regions)
    state.changes += 1
    if config.protocol is Protocol.MOVING_WINDOW:
        if n < 2:
            return
        out, inc = state.window_pos, (state.window_pos + 1) % n
        regions[out].weight = config.lowest_prob_w
        regions[out].dir = Direction.DOWN
        regions[inc].weight = config.highest_prob_w
        regions[inc].dir = Direction.UP
        state.window_pos = inc
    elif config.protocol is Protocol.GRADUAL:
        if n < 2:
            return
        prev = state.prev_window
        cur = state.window_pos
        # The window moves on once the previous transition has saturated.
        if prev is None or (regions[prev].at_bound and regions[cur].at_bound):
            prev, cur = cur, (cur + 1) % n
            regions[prev].dir = Direction.DOWN
            regions[cur].dir = Direction.UP
            state.prev_window, state.window_pos = prev, cur
        regions[prev].step()
        regions[cur].step()
    else:
        for r in regions[:2]:
            r.step()
            if r.at_bound:
                r.dir = Direction.DOWN if r.dir is Direction.UP else Direction.UP


def same_class_subset(graph: ObjectGraph, prev_root: int, fraction: float) -> np.ndarray:
    """Pure function of (prev_root, its class, fraction): a fixed subset of the class."""
    cls = graph.class_of(prev_root)
    members = graph.by_class[cls]
    k = math.ceil(fraction * len(members))
    if k >= len(members):
        return members
    pick = np.random.default_rng([SAME_CLASS_SALT, cls, prev_root]).choice(len(members), size=k, replace=False)
    return np.sort(members[pick])


def dependency_candidates(
    config: DependencyConfig,
    graph: ObjectGraph,
    prev_root: int | None,
    prev_traversal: Sequence[int] | None,
) -> np.ndarray:
    """Candidate next roots, sorted and distinct. Raises EmptyCandidates when there are none."""
    p = config.protocol
    if p is Dependency.RANDOM:
        return np.arange(graph.num_objects)
    if p is Dependency.TRAVERSED:
        if prev_traversal is None:
            raise EmptyCandidates("no previous traversal")
        out = np.unique(np.asarray(prev_traversal, dtype=np.int64))
    else:
        if prev_root is None:
            raise EmptyCandidates("no previous root")
        if p is Dependency.BY_REFERENCE:
            out = np.unique(np.asarray(graph.adjacency[prev_root], dtype=np.int64))
        else:
            out = same_class_subset(graph, prev_root, config.same_class_subset_fraction)
    if len(out) == 0:
        raise EmptyCandidates(f"{p.value}: no candidates after root {prev_root}")
    return out


def first_phase_regions(deps: DependencyConfig, num_objects: int, rng: np.random.Generator) -> list[HRegionState]:
    """Static hot/cold split driving the randomisation phase."""
    perm = rng.permutation(num_objects)
    k = min(num_objects, max(1, round(deps.hot_fraction * num_objects)))
    hot_spec = HRegionSpec(deps.hot_fraction, deps.hot_prob, deps.hot_prob, deps.hot_prob, 0.0)
    cold_w = 1.0 - deps.hot_prob
    cold_spec = HRegionSpec(1 - deps.hot_fraction, cold_w, cold_w, cold_w, 0.0)
    return [
        HRegionState(hot_spec, perm[:k], deps.hot_prob, Direction.DOWN),
        HRegionState(cold_spec, perm[k:], cold_w, Direction.DOWN),
    ]


def init_state(
    graph: ObjectGraph,
    regional: RegionalConfig,
    deps: DependencyConfig,
    rng: np.random.Generator,
) -> DynamicsState:
    regions = build_hregions(regional, np.arange(graph.num_objects), rng, graph)
    first = first_phase_regions(deps, graph.num_objects, rng)
    return DynamicsState(regions=regions, first_phase=first, partition_seed=int(rng.integers(2**63)))


def candidate_regions(
    state: DynamicsState,
    regional: RegionalConfig,
    candidates: np.ndarray,
    graph: ObjectGraph,
) -> list[HRegionState]:
    """H-regions over a candidate set, weighted by the current regional pattern.

    The candidate set is split into ``min(N, |candidates|)`` regions. Region
    ``j`` covers the global region slots ``[j*N/n, (j+1)*N/n)`` and carries the
    sum of their weights, so the hot slot keeps a single hot candidate region
    that moves as the pattern changes. The split itself is a pure function of
    the candidate set.
    """
    if len(candidates) == graph.num_objects:
        return state.regions
    slots = state.regions
    big_n = len(slots)
    part_rng = np.random.default_rng([state.partition_seed, zlib.crc32(candidates.tobytes()), len(candidates)])
    if regional.protocol is Protocol.CYCLES:
        n = len(candidates)
        ordered = _assignment_order(candidates, regional.object_assign_method, part_rng, graph)
        k = min(n // 2, max(1, math.floor(regional.hr_size * n))) if n >= 2 else 0
        parts = [ordered[:k], ordered[k : 2 * k], ordered[2 * k :]]
        return [HRegionState(s.spec, p, s.weight, s.dir) for s, p in zip(slots, parts)]
    count = min(big_n, len(candidates))
    ordered = _assignment_order(candidates, regional.object_assign_method, part_rng, graph)
    cum = np.concatenate([[0.0], np.cumsum([s.weight for s in slots])])
    out = []
    for j, (lo, hi) in enumerate(_equal_slices(len(ordered), count)):
        a, b = j * big_n // count, (j + 1) * big_n // count
        out.append(HRegionState(slots[a].spec, ordered[lo:hi], float(cum[b] - cum[a]), slots[a].dir))
    return out


def _draw_dependent(
    state: DynamicsState,
    deps: DependencyConfig,
    regional: RegionalConfig,
    graph: ObjectGraph,
    rng: np.random.Generator,
    integrated: bool,
) -> tuple[int, int | None]:
    candidates = dependency_candidates(deps, graph, state.prev_root, state.prev_traversal)
    if integrated:
        return tuple(reversed(draw_root(candidate_regions(state, regional, candidates, graph), rng)))
    return int(candidates[rng.integers(len(candidates))]), None


def next_root_hybrid(
    state: DynamicsState,
    deps: DependencyConfig,
    regional: RegionalConfig,
    graph: ObjectGraph,
    rng: np.random.Generator,
    integrated: bool = False,
) -> tuple[int, Phase, int | None]:
    """Next root under the hybrid setting; returns ``(root, phase, region)``.

    With the random dependency protocol every root is a regional draw over
    the whole database. Otherwise one randomisation-phase root (static hot/cold
    skew) is followed by ``hybrid_r`` dependency-phase roots. A dependency
    phase that finds no candidates falls back to a randomisation draw and
    restarts its count.
    """
    if deps.protocol is Dependency.RANDOM:
        region, root = draw_root(state.regions, rng)
        state.prev_root = root
        return root, Phase.RANDOMISATION, region

    if state.phase is Phase.RANDOMISATION or state.prev_root is None:
        region, root = draw_root(state.first_phase, rng)
        phase = Phase.RANDOMISATION
        if deps.hybrid_r > 0:
            state.phase, state.phase_step = Phase.DEPENDENCY, 0
    else:
        try:
            root, region = _draw_dependent(state, deps, regional, graph, rng, integrated)
            phase = Phase.DEPENDENCY
            state.phase_step += 1
            if state.phase_step >= deps.hybrid_r:
                state.phase, state.phase_step = Phase.RANDOMISATION, 0
        except EmptyCandidates:
            region, root = draw_root(state.first_phase, rng)
            phase = Phase.FALLBACK
            state.phase_step = 0
            state.fallbacks += 1
    state.prev_root = root
    return root, phase, region


def integrated_next_root(
    state: DynamicsState,
    deps: DependencyConfig,
    regional: RegionalConfig,
    graph: ObjectGraph,
    rng: np.random.Generator,
) -> tuple[int, Phase, int | None]:
    return next_root_hybrid(state, deps, regional, graph, rng, integrated=True)


class RootStream:
    """Drives one run's root selection: draw, then record the traversal."""

    def __init__(
        self,
        graph: ObjectGraph,
        regional: RegionalConfig,
        deps: DependencyConfig,
        rng: np.random.Generator,
        integrated: bool = False,
    ):
        regional.validate()
        deps.validate()
        self.graph = graph
        self.regional = regional
        self.deps = deps
        self.rng = rng
        self.integrated = integrated
        self.state = init_state(graph, regional, deps, rng)

    def next_root(self) -> tuple[int, Phase, int | None]:
        return next_root_hybrid(self.state, self.deps, self.regional, self.graph, self.rng, self.integrated)

    def finish(self, traversal: Sequence[int]) -> None:
        self.state.prev_traversal = traversal
        advance_pattern(self.state, self.regional)
