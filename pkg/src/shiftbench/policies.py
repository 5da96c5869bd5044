"""Dynamic clustering policies.

Every policy observes the object access stream and, once per trigger period,
may return a re-cluster plan. PRP and GP are conservative: they only touch
the ``worst_pages_n`` worst-clustered pages. The aggressive policy runs the
GP partitioner over every page with any estimated gain.

Page quality: for a page ``p`` with object heats ``h_o`` and sizes ``s_o``,

    utilisation(p) = sum(h_o / max_h * s_o) / page_size
    gain(p)        = sum(h_o) * (1 - utilisation(p))

A page full of equally hot objects has gain 0; a page where one hot object
shares space with cold ones (or with free space) has a gain close to its
whole access heat.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from .errors import ConfigError
from .storage import BufferPool, PageMap, ReclusterPlan

# Stored heats are scaled by 1/factor; renormalise before they overflow.
_RENORM_BELOW = 1e-100


class PolicyKind(str, Enum):
    NONE = "none"
    PRP = "prp"
    GP = "gp"
    AGGRESSIVE = "aggressive"


@dataclass(frozen=True)
class PolicyConfig:
    kind: PolicyKind = PolicyKind.NONE
    trigger_period: int = 200
    worst_pages_n: int = 50
    min_observations: int = 2000
    decay: float = 0.9
    co_access_window: int = 2

    def validate(self) -> None:
        if self.trigger_period < 1:
            raise ConfigError("policy.trigger_period must be >= 1")
        if self.kind in (PolicyKind.PRP, PolicyKind.GP) and self.worst_pages_n < 1:
            raise ConfigError("policy.worst_pages_n must be >= 1")
        if not 0 < self.decay <= 1:
            raise ConfigError("policy.decay must be in (0, 1]")
        if self.co_access_window < 1:
            raise ConfigError("policy.co_access_window must be >= 1")
        if self.min_observations < 0:
            raise ConfigError("policy.min_observations must be >= 0")


class AccessEvent(NamedTuple):
    txn_id: int
    oid: int
    page_id: int
    outcome: str
    position: int


class HeatStats:
    """Decayed per-object heat and co-access edge weights.

    Decay is lazy: values are stored divided by the running decay factor, so
    ``decay_period`` is O(1) and the true value is ``stored * factor``.
    """

    def __init__(self, num_objects: int, decay: float = 0.9, window: int = 2):
        if not 0 < decay <= 1:
            raise ValueError("decay must be in (0, 1]")
        self.decay = decay
        self.window = window
        self._heat = [0.0] * num_objects
        self._adj: dict[int, dict[int, float]] = {}
        self._factor = 1.0
        self._recent: list[int] = []
        self.observations = 0
        self.since_recluster = 0

    def heat(self, oid: int) -> float:
        return self._heat[oid] * self._factor

    def heats(self) -> np.ndarray:
        return np.asarray(self._heat) * self._factor

    def edge(self, a: int, b: int) -> float:
        return self._adj.get(a, {}).get(b, 0.0) * self._factor

    def neighbours(self, oid: int) -> dict[int, float]:
        return {b: w * self._factor for b, w in self._adj.get(oid, {}).items()}

    @property
    def num_edges(self) -> int:
        return sum(len(v) for v in self._adj.values()) // 2

    def observe(self, event: AccessEvent) -> None:
        inc = 1.0 / self._factor
        oid = event.oid
        self._heat[oid] += inc
        self.observations += 1
        self.since_recluster += 1
        if event.position == 0:
            self._recent = []
        recent = self._recent
        if self.window > 1:
            adj = self._adj
            for other in recent:
                if other == oid:
                    continue
                row = adj.setdefault(oid, {})
                row[other] = row.get(other, 0.0) + inc
                row = adj.setdefault(other, {})
                row[oid] = row.get(oid, 0.0) + inc
            recent.append(oid)
            if len(recent) >= self.window:
                del recent[0]

    def decay_period(self) -> None:
        self._factor *= self.decay
        if self._factor < _RENORM_BELOW:
            f = self._factor
            self._heat = [h * f for h in self._heat]
            for row in self._adj.values():
                for k in row:
                    row[k] *= f
            self._factor = 1.0


def observe(stats: HeatStats, event: AccessEvent) -> HeatStats:
    stats.observe(event)
    return stats


def page_gains(stats: HeatStats, pagemap: PageMap) -> dict[int, float]:
    """Estimated clustering gain of every page holding any heat."""
    heat = stats.heats()
    pages = np.asarray(pagemap.page_of)
    sizes = np.asarray(pagemap.sizes, dtype=float)
    length = pagemap.next_page_id
    total = np.bincount(pages, weights=heat, minlength=length)
    peak = np.zeros(length)
    np.maximum.at(peak, pages, heat)
    hot = peak > 0
    weighted = np.bincount(pages, weights=heat * sizes, minlength=length)
    util = np.zeros(length)
    util[hot] = weighted[hot] / peak[hot] / pagemap.page_size
    gain = total * (1.0 - util)
    idx = np.flatnonzero(hot & (gain > 1e-12 * max(1.0, total.max(initial=0.0))))
    return dict(zip(idx.tolist(), gain[idx].tolist()))


def worst_pages(stats: HeatStats, pagemap: PageMap, n: int | None) -> list[int]:
    gains = page_gains(stats, pagemap)
    ranked = sorted(gains, key=lambda p: (-gains[p], p))
    return ranked if n is None else ranked[:n]


class _Bins:
    """Page bins: the source pages first (in id order), then freshly allocated pages.

    A segment tree over remaining capacity gives O(log n) first-fit.
    """

    def __init__(self, pagemap: PageMap, sources: list[int], max_new: int):
        self.cap = pagemap.page_size
        self.ids = sorted(sources)
        self.fill = [0] * len(self.ids)
        self.next_id = pagemap.next_page_id
        self.new: list[int] = []
        size = 1
        while size < len(self.ids) + max_new + 1:
            size *= 2
        self._size = size
        tree = [0] * (2 * size)
        for i in range(len(self.ids)):
            tree[size + i] = self.cap
        for i in range(size - 1, 0, -1):
            tree[i] = max(tree[2 * i], tree[2 * i + 1])
        self._tree = tree

    def _set(self, i: int, remaining: int) -> None:
        tree = self._tree
        j = self._size + i
        tree[j] = remaining
        j //= 2
        while j:
            best = tree[2 * j] if tree[2 * j] >= tree[2 * j + 1] else tree[2 * j + 1]
            if tree[j] == best:
                break
            tree[j] = best
            j //= 2

    def _put(self, i: int, size: int) -> int:
        if i == len(self.ids):
            self.ids.append(self.next_id)
            self.new.append(self.next_id)
            self.fill.append(0)
            self.next_id += 1
        self.fill[i] += size
        self._set(i, self.cap - self.fill[i])
        return i

    def next_fit(self, size: int, cursor: int) -> int:
        while cursor < len(self.ids) and self.fill[cursor] + size > self.cap:
            cursor += 1
        return self._put(cursor, size)

    def first_fit(self, size: int) -> int:
        tree = self._tree
        if tree[1] < size:
            # unopened slots hold 0 until first use
            return self._put(len(self.ids), size)
        j = 1
        while j < self._size:
            j = 2 * j if tree[2 * j] >= size else 2 * j + 1
        return self._put(j - self._size, size)


def _plan(pagemap: PageMap, assignment: list[tuple[int, int]], bins: _Bins) -> ReclusterPlan:
    moves = [(o, bins.ids[b]) for o, b in assignment if pagemap.page_of[o] != bins.ids[b]]
    used = {bins.ids[b] for _, b in assignment}
    # Drop trailing unused allocations so new page ids stay contiguous.
    new = [p for p in bins.new if p in used]
    if new and new != list(range(pagemap.next_page_id, pagemap.next_page_id + len(new))):
        raise AssertionError("non-contiguous new pages")
    return ReclusterPlan(moves, new) if moves else ReclusterPlan()


def prp_plan(stats: HeatStats, pagemap: PageMap, pages: list[int]) -> ReclusterPlan:
    """Repack the objects of ``pages`` hottest-first into as few pages as next-fit allows."""
    if not pages:
        return ReclusterPlan()
    objs = [o for p in pages for o in pagemap.contents[p]]
    objs.sort(key=lambda o: (-stats.heat(o), o))
    bins = _Bins(pagemap, pages, len(objs))
    cursor, assignment = 0, []
    for o in objs:
        cursor = bins.next_fit(pagemap.sizes[o], cursor)
        assignment.append((o, cursor))
    return _plan(pagemap, assignment, bins)


def greedy_partition(
    objects: list[int],
    sizes,
    edges: list[tuple[float, int, int]],
    capacity: int,
) -> list[list[int]]:
    """Greedy graph partitioning: merge endpoints of heaviest edges while the union fits a page.

    Ties are broken by endpoint ids, so the result is deterministic.
    """
    parent = {o: o for o in objects}
    weight = {o: sizes[o] for o in objects}
    members = {o: [o] for o in objects}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    if edges:
        w, a, b = (np.asarray(col) for col in zip(*edges))
        order = np.lexsort((b, a, -w))
        pairs = zip(a[order].tolist(), b[order].tolist())
    else:
        pairs = iter(())
    for x, y in pairs:
        rx, ry = find(x), find(y)
        if rx == ry or weight[rx] + weight[ry] > capacity:
            continue
        if len(members[rx]) < len(members[ry]):
            rx, ry = ry, rx
        parent[ry] = rx
        weight[rx] += weight.pop(ry)
        members[rx].extend(members.pop(ry))
    return [members[r] for r in sorted(members)]


def gp_plan(stats: HeatStats, pagemap: PageMap, pages: list[int]) -> ReclusterPlan:
    """Partition the co-access subgraph of ``pages`` into page-sized clusters."""
    if not pages:
        return ReclusterPlan()
    objs = [o for p in pages for o in pagemap.contents[p]]
    inside = set(objs)
    edges = []
    adj = stats._adj
    # stored weights share one scale factor, which cannot change their order
    for a in objs:
        row = adj.get(a)
        if row:
            edges.extend((w, a, b) for b, w in row.items() if a < b and b in inside)
    clusters = greedy_partition(objs, pagemap.sizes, edges, pagemap.page_size)
    raw = stats._heat
    sizes = pagemap.sizes
    keyed = sorted(((-sum(raw[o] for o in c), c[0], c) for c in clusters), key=lambda t: (t[0], t[1]))
    bins = _Bins(pagemap, pages, len(clusters))
    assignment = []
    for _, _, c in keyed:
        b = bins.first_fit(sum(sizes[o] for o in c))
        assignment.extend((o, b) for o in c)
    return _plan(pagemap, assignment, bins)


def maybe_recluster(
    policy: PolicyConfig,
    stats: HeatStats,
    pagemap: PageMap,
    pool: BufferPool | None = None,
) -> ReclusterPlan:
    """Plan for this trigger point, then close the statistics period."""
    try:
        kind = policy.kind
        if kind is PolicyKind.NONE:
            return ReclusterPlan()
        if kind is PolicyKind.AGGRESSIVE:
            return gp_plan(stats, pagemap, worst_pages(stats, pagemap, None))
        if stats.observations < policy.min_observations:
            return ReclusterPlan()
        pages = worst_pages(stats, pagemap, policy.worst_pages_n)
        if kind is PolicyKind.PRP:
            return prp_plan(stats, pagemap, pages)
        return gp_plan(stats, pagemap, pages)
    finally:
        stats.decay_period()
        stats.since_recluster = 0
