"""Array-backed ball tree for fixed-radius neighbor search.

Nodes live in a flat heap (children of node i at 2i+1 and 2i+2), each
bounding its points by a centroid and radius; leaves reference a slice
of the point permutation array. The split rule is fixed — widest-spread
axis, median split — so construction is deterministic, and the level
count is chosen so every leaf holds at most ``leaf_size`` points.

Boundary semantics match the pairwise edge kernel exactly: candidate
pruning uses the centroid/radius bound with a small slack, but every
reported point passes the same float64 ``(dx*dx + dy*dy) + dz*dz <= r*r``
predicate used everywhere else, so tree-derived edge sets equal
brute-force edge sets including points at exactly the cutoff distance.
"""

from __future__ import annotations

import math

import numpy as np

from ._kernels import EDGE_CROSS, _tree_collect_pairs
from .errors import UsageError


class BallTree:
    """Immutable ball tree over an (n, 3) float32 point set."""

    __slots__ = (
        "data", "permutation", "leaf_size",
        "node_start", "node_end", "node_is_leaf", "node_centroid", "node_radius",
        "_soa", "_node_soa",
    )

    def __init__(self, data, permutation, leaf_size, node_start, node_end,
                 node_is_leaf, node_centroid, node_radius):
        self.data = data
        self.permutation = permutation
        self.leaf_size = leaf_size
        self.node_start = node_start
        self.node_end = node_end
        self.node_is_leaf = node_is_leaf
        self.node_centroid = node_centroid
        self.node_radius = node_radius
        self._soa = tuple(np.ascontiguousarray(data[:, k]) for k in range(3))
        self._node_soa = tuple(np.ascontiguousarray(node_centroid[:, k]) for k in range(3))

    @property
    def n_points(self) -> int:
        return self.data.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.node_start.shape[0]


def build_balltree(points, leaf_size: int = 32) -> BallTree:
    """Build a ball tree; deterministic for identical input.

    Split: choose the axis with the largest coordinate spread, move the
    points below the median (by count) to the left child. Recursion
    stops once a node holds at most ``leaf_size`` points; the heap is
    sized so that depth suffices for every branch.
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float32))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise UsageError(f"build_balltree: expected (n, 3) points, got {pts.shape}")
    n = pts.shape[0]
    if n < 1:
        raise UsageError("build_balltree: need at least one point")
    if leaf_size < 1:
        raise UsageError("build_balltree: leaf_size must be >= 1")

    depth = 0
    while math.ceil(n / (1 << depth)) > leaf_size:
        depth += 1
    n_nodes = (1 << (depth + 1)) - 1

    perm = np.arange(n, dtype=np.int64)
    start = np.zeros(n_nodes, dtype=np.int64)
    end = np.zeros(n_nodes, dtype=np.int64)
    is_leaf = np.zeros(n_nodes, dtype=np.bool_)
    centroid = np.zeros((n_nodes, 3), dtype=np.float64)
    radius = np.full(n_nodes, -1.0)

    coords = pts.astype(np.float64)
    stack = [(0, 0, n)]
    while stack:
        node, lo, hi = stack.pop()
        start[node] = lo
        end[node] = hi
        idx = perm[lo:hi]
        sub = coords[idx]
        c = sub.mean(axis=0)
        centroid[node] = c
        diff = sub - c
        radius[node] = math.sqrt(float(np.max((diff * diff).sum(axis=1))))
        count = hi - lo
        if count <= leaf_size:
            is_leaf[node] = True
            continue
        spread = sub.max(axis=0) - sub.min(axis=0)
        axis = int(np.argmax(spread))
        mid = count // 2
        order = np.argpartition(sub[:, axis], mid)
        perm[lo:hi] = idx[order]
        stack.append((2 * node + 1, lo, lo + mid))
        stack.append((2 * node + 2, lo + mid, hi))

    return BallTree(pts, perm, int(leaf_size), start, end, is_leaf, centroid, radius)


def query_radius(tree: BallTree, center, r: float) -> np.ndarray:
    """Indices of all points within distance ``r`` of ``center``.

    Inclusive boundary; result sorted ascending.
    """
    if r <= 0:
        raise UsageError("query_radius: radius must be positive")
    c = np.asarray(center, dtype=np.float32).reshape(1, 3)
    out = collect_pairs(tree, c, r)
    return np.sort(out[1])


def collect_pairs(
    tree: BallTree,
    queries,
    r: float,
    mode: int = EDGE_CROSS,
    row0: int = 0,
    col0: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """(query_index + row0, point_index + col0) pairs within radius ``r``.

    ``mode`` selects the same duplicate-suppression rules as the
    pairwise edge kernel (see :mod:`trajan._kernels`).
    """
    q = np.ascontiguousarray(np.asarray(queries, dtype=np.float32))
    if q.ndim != 2 or q.shape[1] != 3:
        raise UsageError(f"collect_pairs: expected (m, 3) queries, got {q.shape}")
    qx = np.ascontiguousarray(q[:, 0])
    qy = np.ascontiguousarray(q[:, 1])
    qz = np.ascontiguousarray(q[:, 2])
    dx, dy, dz = tree._soa
    ncx, ncy, ncz = tree._node_soa
    cap = max(4 * q.shape[0] + 64, 1024)
    while True:
        out_u = np.empty(cap, dtype=np.int64)
        out_v = np.empty(cap, dtype=np.int64)
        n = _tree_collect_pairs(
            dx, dy, dz, tree.permutation,
            tree.node_start, tree.node_end, tree.node_is_leaf,
            ncx, ncy, ncz, tree.node_radius,
            qx, qy, qz, float(r), row0, col0, mode, out_u, out_v,
        )
        if n <= cap:
            return out_u[:n].copy(), out_v[:n].copy()
        cap = n
