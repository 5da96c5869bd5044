"""Synthetic object database generation and the depth-first traversal workload.

The database has a fixed number of classes, each with an
instance size and a set of typed class references; every object instantiates
its class's reference slots by pointing at a uniformly drawn member of the
referenced class.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .errors import ConfigError

# Instance sizes span base_size * [1, MAX_SIZE_FACTOR]; the shape exponent is
# calibrated so that the default schema averages ~233 bytes per object.
MAX_SIZE_FACTOR = 32
SIZE_SHAPE = 2.944

DUMP_MAGIC = "objectgraph 1"


@dataclass(frozen=True)
class DbParams:
    num_classes: int = 50
    max_refs_per_class: int = 10
    base_size: int = 50
    num_objects: int = 100_000
    num_ref_types: int = 4
    ref_type_dist: str = "uniform"
    class_ref_dist: str = "uniform"
    objects_in_classes_dist: str = "uniform"
    object_ref_dist: str = "uniform"
    seed: int = 0

    def validate(self) -> None:
        if self.num_classes < 1:
            raise ConfigError("database.num_classes must be >= 1")
        if self.num_objects < 1:
            raise ConfigError("database.num_objects must be >= 1")
        if self.max_refs_per_class < 0:
            raise ConfigError("database.max_refs_per_class must be >= 0")
        if self.base_size < 1:
            raise ConfigError("database.base_size must be >= 1")
        if self.num_ref_types < 1:
            raise ConfigError("database.num_ref_types must be >= 1")
        for name in ("ref_type_dist", "class_ref_dist", "objects_in_classes_dist", "object_ref_dist"):
            if getattr(self, name) != "uniform":
                raise ConfigError(f"database.{name}: only 'uniform' is supported")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("database.seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class ClassDescriptor:
    class_id: int
    instance_size: int
    ref_slots: int
    # target class and reference type of each slot
    slot_classes: tuple[int, ...] = ()
    slot_types: tuple[int, ...] = ()


class ObjectGraph:
    """Immutable object database image.

    Objects are dense ids ``0..n-1``. References are stored in CSR form:
    the refs of object ``o`` are ``targets[offsets[o]:offsets[o+1]]`` with
    matching ``ref_types``.
    """

    def __init__(
        self,
        classes: list[ClassDescriptor],
        object_class: np.ndarray,
        sizes: np.ndarray,
        offsets: np.ndarray,
        targets: np.ndarray,
        ref_types: np.ndarray,
        seed: int = 0,
    ):
        self.classes = classes
        self.object_class = np.asarray(object_class, dtype=np.int64)
        self.sizes = np.asarray(sizes, dtype=np.int64)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.targets = np.asarray(targets, dtype=np.int64)
        self.ref_types = np.asarray(ref_types, dtype=np.int64)
        self.seed = seed
        for arr in (self.object_class, self.sizes, self.offsets, self.targets, self.ref_types):
            arr.setflags(write=False)

    @property
    def num_objects(self) -> int:
        return len(self.object_class)

    @property
    def num_refs(self) -> int:
        return len(self.targets)

    @property
    def total_bytes(self) -> int:
        return int(self.sizes.sum())

    def class_of(self, oid: int) -> int:
        return self.class_list[oid]

    def size_of(self, oid: int) -> int:
        return self.size_list[oid]

    def refs(self, oid: int) -> list[tuple[int, int]]:
        lo, hi = self.offsets[oid], self.offsets[oid + 1]
        return list(zip(self.targets[lo:hi].tolist(), self.ref_types[lo:hi].tolist()))

    # Plain-list views; the simulation loop indexes these millions of times.
    @cached_property
    def adjacency(self) -> list[list[int]]:
        t = self.targets.tolist()
        off = self.offsets.tolist()
        return [t[off[i] : off[i + 1]] for i in range(self.num_objects)]

    @cached_property
    def class_list(self) -> list[int]:
        return self.object_class.tolist()

    @cached_property
    def size_list(self) -> list[int]:
        return self.sizes.tolist()

    @cached_property
    def by_class(self) -> dict[int, np.ndarray]:
        order = np.argsort(self.object_class, kind="stable")
        counts = np.bincount(self.object_class, minlength=len(self.classes))
        bounds = np.concatenate([[0], np.cumsum(counts)])
        out = {}
        for c in range(len(self.classes)):
            members = order[bounds[c] : bounds[c + 1]]
            members.setflags(write=False)
            out[c] = members
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ObjectGraph):
            return NotImplemented
        return (
            self.classes == other.classes
            and self.seed == other.seed
            and all(
                np.array_equal(getattr(self, a), getattr(other, a))
                for a in ("object_class", "sizes", "offsets", "targets", "ref_types")
            )
        )

    def __repr__(self) -> str:
        return f"ObjectGraph(objects={self.num_objects}, refs={self.num_refs}, classes={len(self.classes)})"


def _schema(params: DbParams, rng: np.random.Generator) -> list[ClassDescriptor]:
    nc = params.num_classes
    # Stratified quantiles keep the size envelope independent of the seed;
    # the seed only decides which class gets which size.
    q = np.arange(nc) / (nc - 1) if nc > 1 else np.zeros(1)
    factors = MAX_SIZE_FACTOR ** (q**SIZE_SHAPE)
    sizes = np.rint(params.base_size * factors).astype(np.int64)
    sizes = sizes[rng.permutation(nc)]
    slots = rng.integers(0, params.max_refs_per_class + 1, size=nc)
    classes = []
    for c in range(nc):
        k = int(slots[c])
        slot_classes = rng.integers(0, nc, size=k)
        slot_types = rng.integers(0, params.num_ref_types, size=k)
        classes.append(
            ClassDescriptor(
                class_id=c,
                instance_size=int(sizes[c]),
                ref_slots=k,
                slot_classes=tuple(slot_classes.tolist()),
                slot_types=tuple(slot_types.tolist()),
            )
        )
    return classes


def generate_database(params: DbParams | None = None) -> ObjectGraph:
    """Build the object database described by ``params``; pure in ``params.seed``."""
    params = params or DbParams()
    params.validate()
    rng = np.random.default_rng(params.seed)
    classes = _schema(params, rng)
    nc, n = params.num_classes, params.num_objects

    object_class = rng.integers(0, nc, size=n)
    class_sizes = np.array([c.instance_size for c in classes], dtype=np.int64)
    sizes = class_sizes[object_class]

    slot_counts = np.array([c.ref_slots for c in classes], dtype=np.int64)
    per_object = slot_counts[object_class]
    offsets = np.concatenate([[0], np.cumsum(per_object)])
    total = int(offsets[-1])

    # Flattened slot tables, one row per class, so each ref looks up its slot.
    slot_start = np.concatenate([[0], np.cumsum(slot_counts)])
    flat_slot_class = np.array([t for c in classes for t in c.slot_classes], dtype=np.int64)
    flat_slot_type = np.array([t for c in classes for t in c.slot_types], dtype=np.int64)

    owner = np.repeat(np.arange(n), per_object)
    slot_index = np.arange(total) - offsets[owner]
    slot_row = slot_start[object_class[owner]] + slot_index
    target_class = flat_slot_class[slot_row] if total else np.zeros(0, dtype=np.int64)
    ref_types = flat_slot_type[slot_row] if total else np.zeros(0, dtype=np.int64)

    order = np.argsort(object_class, kind="stable")
    members_per_class = np.bincount(object_class, minlength=nc)
    class_start = np.concatenate([[0], np.cumsum(members_per_class)])
    count = members_per_class[target_class]
    u = rng.random(total)
    # A slot pointing at an empty class falls back to any object.
    empty = count == 0
    pick = np.floor(u * np.where(empty, n, count)).astype(np.int64)
    targets = np.where(empty, pick, order[np.minimum(class_start[target_class] + pick, n - 1)])

    return ObjectGraph(classes, object_class, sizes, offsets, targets, ref_types, seed=params.seed)


def simple_traversal(graph: ObjectGraph, root: int, depth: int) -> list[int]:
    """Depth-first pre-order visit of every ref path of at most ``depth`` edges.

    Objects reachable along several paths are visited once per path.
    """
    if not 0 <= root < graph.num_objects:
        raise ValueError(f"invalid root id {root}")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    adj = graph.adjacency
    out = [root]
    stack = [(root, 0, 0)]
    while stack:
        node, d, i = stack[-1]
        kids = adj[node]
        if d >= depth or i >= len(kids):
            stack.pop()
            continue
        stack[-1] = (node, d, i + 1)
        child = kids[i]
        out.append(child)
        stack.append((child, d + 1, 0))
    return out


def from_edges(
    sizes: Iterable[int],
    edges: dict[int, list[int]] | None = None,
    classes: Iterable[int] | None = None,
) -> ObjectGraph:
    """Hand-built graph for tests and small examples. Ref types are all 0."""
    sizes = list(sizes)
    n = len(sizes)
    edges = edges or {}
    cls = list(classes) if classes is not None else [0] * n
    nc = max(cls) + 1
    offsets = [0]
    targets: list[int] = []
    for o in range(n):
        targets.extend(edges.get(o, []))
        offsets.append(len(targets))
    max_refs = max((len(edges.get(o, [])) for o in range(n)), default=0)
    descs = []
    for c in range(nc):
        members = [sizes[o] for o in range(n) if cls[o] == c]
        descs.append(ClassDescriptor(c, members[0] if members else 0, max_refs))
    return ObjectGraph(descs, cls, sizes, offsets, targets, [0] * len(targets))


def dump_graph(graph: ObjectGraph, out: TextIO | str | Path) -> None:
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="ascii") as fh:
            dump_graph(graph, fh)
        return
    w = out.write
    w(DUMP_MAGIC + "\n")
    w(f"classes {len(graph.classes)} objects {graph.num_objects} refs {graph.num_refs} seed {graph.seed}\n")
    for c in graph.classes:
        slots = " ".join(f"{a}:{b}" for a, b in zip(c.slot_classes, c.slot_types))
        w(f"{c.class_id} {c.instance_size} {c.ref_slots}{' ' + slots if slots else ''}\n")
    buf = io.StringIO()
    for oid, (c, s) in enumerate(zip(graph.object_class.tolist(), graph.sizes.tolist())):
        buf.write(f"{oid} {c} {s}\n")
    off = graph.offsets.tolist()
    tgt = graph.targets.tolist()
    typ = graph.ref_types.tolist()
    for src in range(graph.num_objects):
        for k in range(off[src], off[src + 1]):
            buf.write(f"{src} {tgt[k]} {typ[k]}\n")
    w(buf.getvalue())


def load_graph(src: TextIO | str | Path) -> ObjectGraph:
    if isinstance(src, (str, Path)):
        with open(src, encoding="ascii") as fh:
            return load_graph(fh)
    lines = iter(src)
    if next(lines).strip() != DUMP_MAGIC:
        raise ValueError("not an object graph dump")
    head = next(lines).split()
    fields = dict(zip(head[::2], map(int, head[1::2])))
    nc, n, nr = fields["classes"], fields["objects"], fields["refs"]
    classes = []
    for _ in range(nc):
        parts = next(lines).split()
        pairs = [tuple(map(int, p.split(":"))) for p in parts[3:]]
        classes.append(
            ClassDescriptor(
                int(parts[0]),
                int(parts[1]),
                int(parts[2]),
                tuple(a for a, _ in pairs),
                tuple(b for _, b in pairs),
            )
        )
    body = np.array("".join(lines).split(), dtype=np.int64)
    if body.size != 3 * (n + nr):
        raise ValueError("object/ref sections malformed")
    obj = body[: 3 * n].reshape(n, 3)
    refs = body[3 * n :].reshape(nr, 3)
    if not np.array_equal(obj[:, 0], np.arange(n)):
        raise ValueError("object ids must be dense and in order")
    counts = np.bincount(refs[:, 0], minlength=n) if nr else np.zeros(n, np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    if nr and np.any(np.diff(refs[:, 0]) < 0):
        raise ValueError("refs must be grouped by source in id order")
    return ObjectGraph(classes, obj[:, 1], obj[:, 2], offsets, refs[:, 1], refs[:, 2], seed=fields["seed"])
