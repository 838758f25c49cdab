"""Leaflet finder: connected components of a cutoff-distance graph.

The analysis runs in two stages — edge discovery between atoms closer
than a cutoff, then connected components — and is implemented in the
four architectural variants this package exists to compare:

1. ``leaflet_approach1`` — the full position array is broadcast; each
   map task owns a 1-D slab of rows and compares it against all atoms;
   edge lists are gathered and components computed on the driver.
2. ``leaflet_approach2`` — no broadcast: atoms are 2-D block
   partitioned and each task receives only its row/col blocks; edge
   lists are gathered as in approach 1.
3. ``leaflet_approach3`` — like approach 2, but each task also reduces
   its own edges to partial connected components, shrinking the
   gathered bytes from O(edges) to O(atoms); the driver merges partials
   that share a vertex.
4. ``leaflet_approach4`` — like approach 3, but edge discovery uses a
   ball tree instead of pairwise distances. By default each task builds
   a tree over its column block (tasks stay self-contained); a
   driver-built shared tree over all atoms is available with
   ``shared_tree=True``.

Distance boundary is inclusive (``<= cutoff``) and evaluated by the
same float64 predicate in the pairwise and tree paths, so all four
approaches produce identical canonical component sets.

Duplicate suppression across blocks: diagonal blocks emit ``u < v``
only; off-diagonal blocks with i < j emit every pair; blocks with i > j
are skipped (symmetry). Approach 1 keeps a pair only on the task owning
its lower index.
"""

from __future__ import annotations

import pickle
import struct
from typing import Sequence

import numpy as np

from ._kernels import EDGE_CROSS, EDGE_DIAGONAL, EDGE_ROWS_VS_ALL, _edge_block
from .balltree import BallTree, build_balltree, collect_pairs, query_radius
from .core import ComponentSet, DisjointSet, EdgeList, PartitionPlan, System, components_from_edges
from .engine import Engine, TaskSpec
from .engine.registry import (
    KIND_LF_EDGES_BCAST,
    KIND_LF_EDGES_BLOCK,
    KIND_LF_PARTIAL_CC,
    KIND_LF_TREE_PARTIAL_CC,
    KIND_LF_TREE_SHARED,
    register,
)
from .errors import ResourceError, TaskFailure, UsageError

DEFAULT_LEAF_SIZE = 32


# ---------------------------------------------------------------------------
# Edge discovery


def _position_block(arr) -> np.ndarray:
    pos = np.ascontiguousarray(np.asarray(arr, dtype=np.float32))
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise UsageError(f"expected an (n, 3) position block, got shape {pos.shape}")
    return pos


def _soa(pos: np.ndarray):
    return (
        np.ascontiguousarray(pos[:, 0]),
        np.ascontiguousarray(pos[:, 1]),
        np.ascontiguousarray(pos[:, 2]),
    )


def _emit_edges(row_pos, col_pos, cutoff, row0, col0, mode):
    rx, ry, rz = _soa(row_pos)
    cx, cy, cz = _soa(col_pos)
    c2 = float(cutoff) * float(cutoff)
    cap = max(32 * row_pos.shape[0] + 1024, 4096)
    while True:
        out_u = np.empty(cap, dtype=np.int64)
        out_v = np.empty(cap, dtype=np.int64)
        n = _edge_block(rx, ry, rz, cx, cy, cz, c2, row0, col0, mode, out_u, out_v)
        if n <= cap:
            return out_u[:n].copy(), out_v[:n].copy()
        cap = n


def edges_pairwise_block(
    rows,
    row_offset: int,
    cols,
    col_offset: int,
    cutoff: float,
    n_vertices: int | None = None,
) -> EdgeList:
    """All (u, v) pairs across two position blocks within ``cutoff``.

    ``row_offset``/``col_offset`` translate block-local indices to
    global atom indices. When the two blocks are the same block
    (equal offsets and shapes) only ``u < v`` pairs are emitted.
    """
    if cutoff <= 0:
        raise UsageError("cutoff must be positive")
    row_pos = _position_block(rows)
    col_pos = _position_block(cols)
    diagonal = row_offset == col_offset and row_pos.shape[0] == col_pos.shape[0]
    mode = EDGE_DIAGONAL if diagonal else EDGE_CROSS
    u, v = _emit_edges(row_pos, col_pos, cutoff, row_offset, col_offset, mode)
    if n_vertices is None:
        n_vertices = max(row_offset + row_pos.shape[0], col_offset + col_pos.shape[0])
    return EdgeList(u, v, n_vertices, validate=False)


def edges_tree_block(
    rows,
    row_offset: int,
    cols,
    col_offset: int,
    cutoff: float,
    n_vertices: int | None = None,
    leaf_size: int = DEFAULT_LEAF_SIZE,
) -> EdgeList:
    """Same contract as :func:`edges_pairwise_block`, via a ball tree.

    Builds the tree over the column block and radius-queries the rows;
    produces the identical edge set.
    """
    if cutoff <= 0:
        raise UsageError("cutoff must be positive")
    row_pos = _position_block(rows)
    col_pos = _position_block(cols)
    diagonal = row_offset == col_offset and row_pos.shape[0] == col_pos.shape[0]
    mode = EDGE_DIAGONAL if diagonal else EDGE_CROSS
    tree = build_balltree(col_pos, leaf_size)
    u, v = collect_pairs(tree, row_pos, cutoff, mode, row_offset, col_offset)
    if n_vertices is None:
        n_vertices = max(row_offset + row_pos.shape[0], col_offset + col_pos.shape[0])
    return EdgeList(u, v, n_vertices, validate=False)


# ---------------------------------------------------------------------------
# Partial connected components


class PartialComponents:
    """Connected components of one task's edge subgraph.

    Holds only vertices incident to at least one of the task's edges
    (isolated atoms carry no merge information); each component is a
    sorted array of global atom indices, pairwise disjoint.
    """

    __slots__ = ("components",)

    def __init__(self, components: Sequence[np.ndarray]):
        self.components = [np.asarray(c, dtype=np.int64) for c in components]

    def encode(self) -> bytes:
        """Compact wire form: u32 count, u32 sizes, u32 flat members."""
        sizes = np.array([c.shape[0] for c in self.components], dtype="<u4")
        if self.components:
            members = np.concatenate(self.components).astype("<u4")
        else:
            members = np.empty(0, dtype="<u4")
        return struct.pack("<I", len(self.components)) + sizes.tobytes() + members.tobytes()

    @classmethod
    def decode(cls, data: bytes) -> "PartialComponents":
        (count,) = struct.unpack_from("<I", data)
        sizes = np.frombuffer(data, dtype="<u4", count=count, offset=4).astype(np.int64)
        members = np.frombuffer(data, dtype="<u4", offset=4 + 4 * count).astype(np.int64)
        bounds = np.cumsum(sizes)
        if members.shape[0] != (bounds[-1] if count else 0):
            raise UsageError("PartialComponents: truncated encoding")
        return cls(np.split(members, bounds[:-1]) if count else [])


def local_components(u: np.ndarray, v: np.ndarray) -> PartialComponents:
    """Components of the subgraph spanned by the given edges only."""
    if len(u) == 0:
        return PartialComponents([])
    verts = np.unique(np.concatenate([u, v]))
    lu = np.searchsorted(verts, u)
    lv = np.searchsorted(verts, v)
    ds = DisjointSet(verts.shape[0])
    ds.union_edges(lu, lv)
    groups = ds.components().groups()
    return PartialComponents([verts[g] for g in groups])


def merge_partial_components(
    parts: Sequence[PartialComponents], n_vertices: int
) -> ComponentSet:
    """Merge partials transitively: sets sharing a vertex coalesce.

    Vertices absent from every partial become singleton components.
    Labeling is the canonical one from :class:`ComponentSet`.
    """
    ds = DisjointSet(n_vertices)
    for part in parts:
        for comp in part.components:
            if comp.shape[0] == 0:
                continue
            if comp.min() < 0 or comp.max() >= n_vertices:
                raise UsageError(
                    f"merge_partial_components: vertex index out of range "
                    f"[0, {n_vertices})"
                )
            if comp.shape[0] > 1:
                ds.union_edges(np.full(comp.shape[0] - 1, comp[0]), comp[1:])
    return ds.components()


# ---------------------------------------------------------------------------
# Task handlers (run on workers)


def _decode_block_payload(payload):
    i, j, cutoff, row0, row_bytes, col0, col_bytes, leaf_size = pickle.loads(payload)
    row_pos = np.frombuffer(row_bytes, dtype="<f4").reshape(-1, 3)
    col_pos = row_pos if col_bytes is None else np.frombuffer(col_bytes, dtype="<f4").reshape(-1, 3)
    diagonal = col_bytes is None
    return i, j, cutoff, row0, row_pos, col0, col_pos, diagonal, leaf_size


def _pack_edges(u: np.ndarray, v: np.ndarray) -> bytes:
    return np.column_stack([u, v]).astype("<u4").tobytes()


def _unpack_edges(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    pairs = np.frombuffer(data, dtype="<u4").reshape(-1, 2).astype(np.int64)
    return pairs[:, 0], pairs[:, 1]


@register(KIND_LF_EDGES_BCAST)
def _lf_edges_bcast_task(payload: bytes, ctx) -> bytes:
    handle_id, row_start, row_stop, cutoff, m = pickle.loads(payload)
    pos = np.frombuffer(ctx.broadcast_bytes(handle_id), dtype="<f4").reshape(m, 3)
    u, v = _emit_edges(
        np.ascontiguousarray(pos[row_start:row_stop]), pos, cutoff,
        row_start, 0, EDGE_ROWS_VS_ALL,
    )
    return _pack_edges(u, v)


@register(KIND_LF_EDGES_BLOCK)
def _lf_edges_block_task(payload: bytes, ctx) -> bytes:
    _i, _j, cutoff, row0, row_pos, col0, col_pos, diagonal, _ls = _decode_block_payload(payload)
    mode = EDGE_DIAGONAL if diagonal else EDGE_CROSS
    u, v = _emit_edges(row_pos, col_pos, cutoff, row0, col0, mode)
    return _pack_edges(u, v)


@register(KIND_LF_PARTIAL_CC)
def _lf_partial_cc_task(payload: bytes, ctx) -> bytes:
    _i, _j, cutoff, row0, row_pos, col0, col_pos, diagonal, _ls = _decode_block_payload(payload)
    mode = EDGE_DIAGONAL if diagonal else EDGE_CROSS
    u, v = _emit_edges(row_pos, col_pos, cutoff, row0, col0, mode)
    return local_components(u, v).encode()


@register(KIND_LF_TREE_PARTIAL_CC)
def _lf_tree_partial_cc_task(payload: bytes, ctx) -> bytes:
    _i, _j, cutoff, row0, row_pos, col0, col_pos, diagonal, leaf_size = _decode_block_payload(payload)
    mode = EDGE_DIAGONAL if diagonal else EDGE_CROSS
    tree = build_balltree(col_pos, leaf_size)
    u, v = collect_pairs(tree, row_pos, cutoff, mode, row0, col0)
    return local_components(u, v).encode()


@register(KIND_LF_TREE_SHARED)
def _lf_tree_shared_task(payload: bytes, ctx) -> bytes:
    handle_id, row_start, row_stop, cutoff, leaf_size = pickle.loads(payload)
    tree: BallTree = pickle.loads(ctx.broadcast_bytes(handle_id))
    rows = np.ascontiguousarray(tree.data[row_start:row_stop])
    u, v = collect_pairs(tree, rows, cutoff, EDGE_ROWS_VS_ALL, row_start, 0)
    return local_components(u, v).encode()


# ---------------------------------------------------------------------------
# Approach drivers


def _check_inputs(system: System, cutoff: float, block: int):
    if cutoff <= 0:
        raise UsageError("cutoff must be positive")
    if block < 1 or system.n_atoms % block != 0:
        raise UsageError(
            f"block size {block} does not divide atom count {system.n_atoms}"
        )


def _guard_resources(approach: str, fn):
    try:
        return fn()
    except ResourceError as exc:
        raise ResourceError(f"{approach}: {exc}") from exc


def _check_results(results, coords, approach):
    for res in results:
        if not res.ok:
            where = coords.get(res.task_id)
            raise TaskFailure(
                f"{approach} task {where} failed: {res.payload.decode(errors='replace')}",
                task_id=res.task_id,
                coords=where,
            )


def _block_tasks(system: System, cutoff: float, block: int, kind: int,
                 leaf_size: int = DEFAULT_LEAF_SIZE):
    """2-D partitioned tasks over the i <= j triangle of the block grid."""
    plan = PartitionPlan(system.n_atoms, block)
    pos = system.positions
    tasks = []
    coords = {}
    tid = 0
    for i, j in plan.tasks:
        if i > j:
            continue
        row0, col0 = i * block, j * block
        row_bytes = pos[row0:row0 + block].tobytes()
        col_bytes = None if i == j else pos[col0:col0 + block].tobytes()
        payload = pickle.dumps(
            (i, j, float(cutoff), row0, row_bytes, col0, col_bytes, leaf_size),
            protocol=4,
        )
        tasks.append(TaskSpec(tid, kind, payload))
        coords[tid] = (i, j)
        tid += 1
    return tasks, coords


def _gather_edges(results, n_vertices) -> EdgeList:
    us, vs = [], []
    for res in results:
        u, v = _unpack_edges(res.payload)
        us.append(u)
        vs.append(v)
    u = np.concatenate(us) if us else np.empty(0, dtype=np.int64)
    v = np.concatenate(vs) if vs else np.empty(0, dtype=np.int64)
    return EdgeList(u, v, n_vertices, validate=False)


def leaflet_approach1(system: System, cutoff: float, block: int, engine: Engine) -> ComponentSet:
    """Broadcast and 1-D partitioning: rows vs all atoms, driver-side CC."""
    _check_inputs(system, cutoff, block)
    m = system.n_atoms
    handle = _guard_resources(
        "approach-1", lambda: engine.broadcast(system.positions.tobytes(), op="leaflet1.broadcast")
    )
    tasks = []
    coords = {}
    for tid, start in enumerate(range(0, m, block)):
        payload = pickle.dumps((handle.handle_id, start, start + block, float(cutoff), m),
                               protocol=4)
        tasks.append(TaskSpec(tid, KIND_LF_EDGES_BCAST, payload))
        coords[tid] = (tid,)
    results = _guard_resources(
        "approach-1",
        lambda: engine.submit_map(tasks, op="leaflet1.map", scale=f"atoms={m},block={block}"),
    )
    _check_results(results, coords, "approach-1")
    return components_from_edges(_gather_edges(results, m))


def leaflet_approach2(system: System, cutoff: float, block: int, engine: Engine) -> ComponentSet:
    """Task API and 2-D partitioning: pre-partitioned blocks, no broadcast."""
    _check_inputs(system, cutoff, block)
    m = system.n_atoms
    tasks, coords = _block_tasks(system, cutoff, block, KIND_LF_EDGES_BLOCK)
    results = _guard_resources(
        "approach-2",
        lambda: engine.submit_map(tasks, op="leaflet2.map", scale=f"atoms={m},block={block}"),
    )
    _check_results(results, coords, "approach-2")
    return components_from_edges(_gather_edges(results, m))


def leaflet_approach3(system: System, cutoff: float, block: int, engine: Engine) -> ComponentSet:
    """Parallel connected components: per-task partial CC, merged on the driver."""
    _check_inputs(system, cutoff, block)
    m = system.n_atoms
    tasks, coords = _block_tasks(system, cutoff, block, KIND_LF_PARTIAL_CC)
    results = _guard_resources(
        "approach-3",
        lambda: engine.submit_map(tasks, op="leaflet3.map", scale=f"atoms={m},block={block}"),
    )
    _check_results(results, coords, "approach-3")
    parts = [PartialComponents.decode(res.payload) for res in results]
    return merge_partial_components(parts, m)


def leaflet_approach4(
    system: System,
    cutoff: float,
    block: int,
    engine: Engine,
    leaf_size: int = DEFAULT_LEAF_SIZE,
    shared_tree: bool = False,
) -> ComponentSet:
    """Tree-search: ball-tree edge discovery plus partial CC.

    Default: each task builds a tree over its column block. With
    ``shared_tree=True`` the driver builds one tree over all atoms and
    broadcasts it; tasks then own 1-D row slabs.
    """
    _check_inputs(system, cutoff, block)
    m = system.n_atoms
    if shared_tree:
        tree = build_balltree(system.positions, leaf_size)
        handle = _guard_resources(
            "approach-4",
            lambda: engine.broadcast(pickle.dumps(tree, protocol=4), op="leaflet4.broadcast"),
        )
        tasks = []
        coords = {}
        for tid, start in enumerate(range(0, m, block)):
            payload = pickle.dumps(
                (handle.handle_id, start, start + block, float(cutoff), leaf_size),
                protocol=4,
            )
            tasks.append(TaskSpec(tid, KIND_LF_TREE_SHARED, payload))
            coords[tid] = (tid,)
    else:
        tasks, coords = _block_tasks(
            system, cutoff, block, KIND_LF_TREE_PARTIAL_CC, leaf_size
        )
    results = _guard_resources(
        "approach-4",
        lambda: engine.submit_map(tasks, op="leaflet4.map", scale=f"atoms={m},block={block}"),
    )
    _check_results(results, coords, "approach-4")
    parts = [PartialComponents.decode(res.payload) for res in results]
    return merge_partial_components(parts, m)


APPROACHES = {
    1: leaflet_approach1,
    2: leaflet_approach2,
    3: leaflet_approach3,
    4: leaflet_approach4,
}


def run_approach(
    approach: int, system: System, cutoff: float, block: int, engine: Engine, **kwargs
) -> ComponentSet:
    """Dispatch by approach number (1-4)."""
    try:
        fn = APPROACHES[int(approach)]
    except (KeyError, ValueError):
        raise UsageError(f"approach must be 1, 2, 3 or 4, got {approach!r}")
    return fn(system, cutoff, block, engine, **kwargs)
