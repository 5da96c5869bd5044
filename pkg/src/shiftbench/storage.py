"""Page store and LRU buffer simulation with separate transaction/clustering I/O tallies."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

from .errors import ConfigError, PlanError
from .objectbase import ObjectGraph

HIT = "hit"
MISS = "miss"


class Replacement(str, Enum):
    LRU1 = "lru1"


class Placement(str, Enum):
    SEQUENTIAL = "sequential"


@dataclass(frozen=True)
class StorageConfig:
    page_size: int = 4096
    buffer_bytes: int = 4 * 1024 * 1024
    replacement: Replacement = Replacement.LRU1
    placement: Placement = Placement.SEQUENTIAL

    @property
    def frames(self) -> int:
        return self.buffer_bytes // self.page_size

    def validate(self, max_object_size: int | None = None) -> None:
        if self.page_size < 1:
            raise ConfigError("storage.page_size must be >= 1")
        if self.frames < 1:
            raise ConfigError("storage.buffer_bytes must hold at least one page")
        if max_object_size is not None and max_object_size > self.page_size:
            raise ConfigError(f"storage.page_size={self.page_size} is smaller than an object of {max_object_size} bytes")


@dataclass
class IoTally:
    transaction_io: int = 0
    clustering_io: int = 0
    hits: int = 0

    @property
    def total(self) -> int:
        return self.transaction_io + self.clustering_io


@dataclass
class PageMap:
    page_size: int
    sizes: Sequence[int]
    page_of: list[int]
    contents: dict[int, list[int]]
    fill: dict[int, int]
    next_page_id: int

    def copy(self) -> PageMap:
        return PageMap(
            self.page_size,
            self.sizes,
            list(self.page_of),
            {p: list(objs) for p, objs in self.contents.items()},
            dict(self.fill),
            self.next_page_id,
        )

    @property
    def num_pages(self) -> int:
        return len(self.contents)

    def check(self) -> None:
        """Assert the page_of/contents views agree and no page overflows."""
        seen = 0
        for p, objs in self.contents.items():
            assert objs, f"empty page {p} not retired"
            assert sum(self.sizes[o] for o in objs) == self.fill[p] <= self.page_size
            for o in objs:
                assert self.page_of[o] == p
            seen += len(objs)
        assert seen == len(self.page_of)


def place_sequential(graph: ObjectGraph | Sequence[int], config: StorageConfig) -> PageMap:
    """Pack objects into pages in id order; an object that does not fit opens a new page."""
    sizes = graph.size_list if isinstance(graph, ObjectGraph) else list(graph)
    page_size = config.page_size
    page_of = [0] * len(sizes)
    contents: dict[int, list[int]] = {}
    fill: dict[int, int] = {}
    page, used = -1, page_size
    for oid, s in enumerate(sizes):
        if s > page_size:
            raise ConfigError(f"object {oid} of {s} bytes exceeds storage.page_size={page_size}")
        if used + s > page_size:
            page += 1
            used = 0
            contents[page] = []
        contents[page].append(oid)
        used += s
        fill[page] = used
        page_of[oid] = page
    return PageMap(page_size, sizes, page_of, contents, fill, page + 1)


@dataclass
class ReclusterPlan:
    """Object moves; ``new_pages`` lists page ids the plan allocates."""

    moves: list[tuple[int, int]] = field(default_factory=list)
    new_pages: list[int] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.moves)

    def source_pages(self, pagemap: PageMap) -> set[int]:
        return {pagemap.page_of[o] for o, t in self.moves if pagemap.page_of[o] != t}


class BufferPool:
    """LRU buffer of page frames. ``on_event(page, kind)`` receives page events if set."""

    def __init__(self, capacity: int, on_event: Callable[[int, str], None] | None = None):
        if capacity < 1:
            raise ConfigError("buffer capacity must be >= 1 frame")
        self.capacity = capacity
        self.frames: OrderedDict[int, None] = OrderedDict()
        self.tally = IoTally()
        self.on_event = on_event

    @property
    def resident(self) -> set[int]:
        return set(self.frames)

    def recency(self) -> list[int]:
        """Resident pages, most recently used first."""
        return list(reversed(self.frames))

    def _load(self, page: int) -> None:
        if len(self.frames) >= self.capacity:
            victim, _ = self.frames.popitem(last=False)
            if self.on_event:
                self.on_event(victim, "evict")
        self.frames[page] = None

    def access_page(self, page: int) -> str:
        frames = self.frames
        if page in frames:
            frames.move_to_end(page)
            self.tally.hits += 1
            if self.on_event:
                self.on_event(page, HIT)
            return HIT
        self.tally.transaction_io += 1
        if self.on_event:
            self.on_event(page, MISS)
        self._load(page)
        return MISS

    def invalidate(self, page: int) -> None:
        self.frames.pop(page, None)


def access_object(pool: BufferPool, pagemap: PageMap, oid: int) -> str:
    try:
        page = pagemap.page_of[oid]
    except IndexError:
        raise RuntimeError(f"object {oid} has no page") from None
    return pool.access_page(page)


def validate_plan(pagemap: PageMap, plan: ReclusterPlan) -> dict[int, int]:
    """Resulting fill of every touched page; raises PlanError if the plan is unsafe."""
    n = len(pagemap.page_of)
    expected = list(range(pagemap.next_page_id, pagemap.next_page_id + len(plan.new_pages)))
    if list(plan.new_pages) != expected:
        raise PlanError(f"new pages must be {expected}, got {plan.new_pages}")
    valid_targets = set(plan.new_pages)
    delta: dict[int, int] = {}
    moved = set()
    for oid, target in plan.moves:
        if not 0 <= oid < n:
            raise PlanError(f"unknown object {oid}")
        if oid in moved:
            raise PlanError(f"object {oid} moved twice")
        moved.add(oid)
        if target not in pagemap.contents and target not in valid_targets:
            raise PlanError(f"unknown target page {target}")
        src = pagemap.page_of[oid]
        if src == target:
            continue
        s = pagemap.sizes[oid]
        delta[src] = delta.get(src, 0) - s
        delta[target] = delta.get(target, 0) + s
    fills = {}
    for p, d in delta.items():
        f = pagemap.fill.get(p, 0) + d
        if f > pagemap.page_size:
            raise PlanError(f"page {p} would hold {f} bytes > {pagemap.page_size}")
        fills[p] = f
    return fills


def apply_recluster(pool: BufferPool, pagemap: PageMap, plan: ReclusterPlan) -> PageMap:
    """Apply ``plan`` in place and charge its clustering I/O.

    Cost: one read per touched pre-existing page that is not resident, plus
    one write per modified page. Reads go through the buffer; rewritten pages
    are written through and dropped from the buffer. Pages left empty are
    retired.
    """
    fills = validate_plan(pagemap, plan)
    if not fills:
        return pagemap
    touched = sorted(fills)
    for p in touched:
        if p in pagemap.contents and p not in pool.frames:
            pool.tally.clustering_io += 1
            if pool.on_event:
                pool.on_event(p, "cread")
            pool._load(p)
    for oid, target in plan.moves:
        src = pagemap.page_of[oid]
        if src == target:
            continue
        pagemap.contents[src].remove(oid)
        pagemap.contents.setdefault(target, []).append(oid)
        pagemap.page_of[oid] = target
    for p in touched:
        pool.tally.clustering_io += 1
        if pool.on_event:
            pool.on_event(p, "cwrite")
        pool.invalidate(p)
        if fills[p] == 0:
            pagemap.contents.pop(p, None)
            pagemap.fill.pop(p, None)
        else:
            pagemap.fill[p] = fills[p]
    pagemap.next_page_id += len(plan.new_pages)
    return pagemap
