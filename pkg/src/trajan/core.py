"""Domain types shared across the package.

Positions are stored as float32 (the storage precision of typical MD
trajectory data); all distance arithmetic elsewhere accumulates in
float64. Every type validates its invariants on construction and is
treated as immutable afterwards, except :class:`DisjointSet` which is a
single-writer structure.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .errors import DataError, UsageError


def _as_positions(positions, what: str) -> np.ndarray:
    arr = np.asarray(positions, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise UsageError(f"{what}: expected an (n, 3) coordinate array, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise UsageError(f"{what}: needs at least one point")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{what}: coordinates contain NaN or Inf")
    return np.ascontiguousarray(arr)


class Frame:
    """One snapshot of N atom positions, in nanometers."""

    __slots__ = ("positions",)

    def __init__(self, positions):
        self.positions = _as_positions(positions, "Frame")

    @property
    def n_atoms(self) -> int:
        return self.positions.shape[0]

    def __eq__(self, other):
        return isinstance(other, Frame) and np.array_equal(self.positions, other.positions)

    def __repr__(self):
        return f"Frame(n_atoms={self.n_atoms})"


class Trajectory:
    """Time-ordered frames with a constant atom count.

    Backed by a single ``(n_frames, n_atoms, 3)`` float32 array;
    :attr:`frames` exposes the per-frame view expected by frame-level
    operations.
    """

    __slots__ = ("positions", "id")

    def __init__(self, positions, id: str = ""):
        arr = np.asarray(positions, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise UsageError(
                f"Trajectory: expected (n_frames, n_atoms, 3), got shape {arr.shape}"
            )
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise UsageError("Trajectory: needs at least one frame and one atom")
        if not np.all(np.isfinite(arr)):
            raise DataError("Trajectory: coordinates contain NaN or Inf")
        self.positions = np.ascontiguousarray(arr)
        self.id = str(id)

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.positions.shape[1]

    @property
    def frames(self) -> list[Frame]:
        return [Frame(self.positions[i]) for i in range(self.n_frames)]

    def __eq__(self, other):
        return (
            isinstance(other, Trajectory)
            and self.id == other.id
            and np.array_equal(self.positions, other.positions)
        )

    def __repr__(self):
        return f"Trajectory(id={self.id!r}, n_frames={self.n_frames}, n_atoms={self.n_atoms})"


class System:
    """A single configuration of M particles (one snapshot)."""

    __slots__ = ("positions", "id")

    def __init__(self, positions, id: str = ""):
        self.positions = _as_positions(positions, "System")
        self.id = str(id)

    @property
    def n_atoms(self) -> int:
        return self.positions.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, System)
            and self.id == other.id
            and np.array_equal(self.positions, other.positions)
        )

    def __repr__(self):
        return f"System(id={self.id!r}, n_atoms={self.n_atoms})"


class EdgeList:
    """Undirected edges (u, v) over vertices 0..n_vertices-1, u < v."""

    __slots__ = ("u", "v", "n_vertices")

    def __init__(self, u, v, n_vertices: int, validate: bool = True):
        self.u = np.ascontiguousarray(u, dtype=np.int64)
        self.v = np.ascontiguousarray(v, dtype=np.int64)
        self.n_vertices = int(n_vertices)
        if validate:
            self.validate()

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]], n_vertices: int) -> "EdgeList":
        pairs = list(pairs)
        u = np.array([p[0] for p in pairs], dtype=np.int64)
        v = np.array([p[1] for p in pairs], dtype=np.int64)
        return cls(u, v, n_vertices)

    @property
    def n_edges(self) -> int:
        return self.u.shape[0]

    def validate(self):
        if self.u.shape != self.v.shape:
            raise UsageError("EdgeList: u and v differ in length")
        if self.n_edges:
            if self.u.min() < 0 or self.v.min() < 0:
                raise UsageError("EdgeList: negative vertex index")
            if max(self.u.max(), self.v.max()) >= self.n_vertices:
                raise UsageError("EdgeList: vertex index out of range")
            if np.any(self.u == self.v):
                raise UsageError("EdgeList: self-loop")
            lo = np.minimum(self.u, self.v)
            hi = np.maximum(self.u, self.v)
            key = lo * self.n_vertices + hi
            if np.unique(key).size != key.size:
                raise UsageError("EdgeList: duplicate undirected edge")

    def as_set(self) -> set[tuple[int, int]]:
        lo = np.minimum(self.u, self.v)
        hi = np.maximum(self.u, self.v)
        return set(zip(lo.tolist(), hi.tolist()))


class ComponentSet:
    """Partition of vertices into connected components.

    ``assignment[i]`` is the component id of vertex i. Ids are dense
    (0..n_components-1) and canonical: components are numbered by the
    first vertex (in index order) that belongs to them, so two equal
    partitions always compare equal element-wise.
    """

    __slots__ = ("assignment", "n_components")

    def __init__(self, assignment, n_components: int | None = None):
        self.assignment = np.ascontiguousarray(assignment, dtype=np.int64)
        if self.assignment.ndim != 1:
            raise UsageError("ComponentSet: assignment must be 1-D")
        found = int(self.assignment.max()) + 1 if self.assignment.size else 0
        self.n_components = int(n_components) if n_components is not None else found
        ids = np.unique(self.assignment)
        if self.assignment.size and (
            ids.size != self.n_components or ids[0] != 0 or ids[-1] != self.n_components - 1
        ):
            raise UsageError("ComponentSet: component ids must be dense 0..n-1")

    @property
    def n_vertices(self) -> int:
        return self.assignment.shape[0]

    def sizes(self) -> list[int]:
        return np.bincount(self.assignment, minlength=self.n_components).tolist()

    def groups(self) -> list[np.ndarray]:
        order = np.argsort(self.assignment, kind="stable")
        bounds = np.cumsum(np.bincount(self.assignment, minlength=self.n_components))
        return np.split(order, bounds[:-1])

    def __eq__(self, other):
        return (
            isinstance(other, ComponentSet)
            and self.n_components == other.n_components
            and np.array_equal(self.assignment, other.assignment)
        )

    def __repr__(self):
        return f"ComponentSet(n_vertices={self.n_vertices}, n_components={self.n_components})"


class PartitionPlan:
    """2-D blocking of an all-pairs computation over ``n_items`` items.

    ``block`` items are grouped per axis, giving ``k = n_items // block``
    groups and one task per (row-group, col-group) pair: k**2 tasks
    covering the full grid exactly once.
    """

    __slots__ = ("n_items", "block", "blocks", "tasks")

    def __init__(self, n_items: int, block: int):
        n_items = int(n_items)
        block = int(block)
        if n_items < 1:
            raise UsageError("PartitionPlan: n_items must be >= 1")
        if block < 1 or n_items % block != 0:
            raise UsageError(
                f"PartitionPlan: block size {block} does not divide item count {n_items}"
            )
        self.n_items = n_items
        self.block = block
        self.blocks = n_items // block
        self.tasks = [(i, j) for i in range(self.blocks) for j in range(self.blocks)]

    def block_range(self, index: int) -> range:
        return range(index * self.block, (index + 1) * self.block)

    def __repr__(self):
        return (
            f"PartitionPlan(n_items={self.n_items}, block={self.block}, "
            f"tasks={len(self.tasks)})"
        )


class DisjointSet:
    """Union-find over a fixed vertex range, with rank + path halving.

    Single-writer: safe to hand to another worker, not to mutate from
    two threads at once.
    """

    __slots__ = ("parent", "rank", "n")

    def __init__(self, n: int):
        n = int(n)
        if n < 0:
            raise UsageError(f"DisjointSet: size must be non-negative, got {n}")
        self.n = n
        self.parent = list(range(n))
        self.rank = [0] * n

    def _check(self, x: int) -> int:
        x = int(x)
        if not 0 <= x < self.n:
            raise UsageError(f"DisjointSet: index {x} out of range [0, {self.n})")
        return x

    def find(self, x: int) -> int:
        x = self._check(x)
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra = self.find(a)
        rb = self.find(b)
        if ra == rb:
            return False
        rank = self.rank
        if rank[ra] < rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if rank[ra] == rank[rb]:
            rank[ra] += 1
        return True

    def union_edges(self, u: np.ndarray, v: np.ndarray) -> None:
        """Union every (u[i], v[i]) pair; bounds checked once up front."""
        if len(u) == 0:
            return
        u = np.asarray(u)
        v = np.asarray(v)
        if min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= self.n:
            raise UsageError("DisjointSet: edge endpoint out of range")
        parent = self.parent
        rank = self.rank
        for a, b in zip(u.tolist(), v.tolist()):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            while parent[b] != b:
                parent[b] = parent[parent[b]]
                b = parent[b]
            if a == b:
                continue
            if rank[a] < rank[b]:
                a, b = b, a
            parent[b] = a
            if rank[a] == rank[b]:
                rank[a] += 1

    def components(self) -> ComponentSet:
        """Canonical component labeling (see :class:`ComponentSet`)."""
        parent = self.parent
        roots = np.empty(self.n, dtype=np.int64)
        for x in range(self.n):
            r = x
            while parent[r] != r:
                parent[r] = parent[parent[r]]
                r = parent[r]
            roots[x] = r
        uniq, first, inverse = np.unique(roots, return_index=True, return_inverse=True)
        # renumber so components appear in order of their first vertex
        order = np.argsort(np.argsort(first, kind="stable"), kind="stable")
        return ComponentSet(order[inverse], n_components=uniq.size)


def dsu_find(ds: DisjointSet, x: int) -> int:
    """Root of x's component (functional alias for :meth:`DisjointSet.find`)."""
    return ds.find(x)


def dsu_union(ds: DisjointSet, a: int, b: int) -> bool:
    """Merge the components of a and b; True if they were distinct."""
    return ds.union(a, b)


def dsu_components(ds: DisjointSet) -> ComponentSet:
    """Canonical labeling of the current partition."""
    return ds.components()


def components_from_edges(edges: EdgeList) -> ComponentSet:
    """Connected components of an edge list (single-shot, on the caller)."""
    ds = DisjointSet(edges.n_vertices)
    ds.union_edges(edges.u, edges.v)
    return ds.components()
