"""Numba-compiled inner loops shared by the analysis modules.

Everything here accumulates in float64 with strict IEEE semantics
(``fastmath`` stays off), in a fixed scalar order, so results are
reproducible bit-for-bit across processes and so the squared-distance
predicate is evaluated identically by the pairwise path, the ball-tree
path, and the brute-force oracles used in tests.

Distance convention: coordinates are float32; every arithmetic step
happens after widening to float64, and the squared distance is always
associated as ``(dx*dx + dy*dy) + dz*dz``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Edge emission modes for _edge_block / _tree_collect_pairs.
EDGE_CROSS = 0  # off-diagonal block: emit every hit
EDGE_DIAGONAL = 1  # diagonal block: emit j > i only
EDGE_ROWS_VS_ALL = 2  # 1-D row slab vs full system: emit global u < v only


@njit(cache=True)
def _msd_flat(a, b):
    # a, b: (3N,) float64. Sequential sum, same order as a scalar loop.
    s = 0.0
    for k in range(a.shape[0]):
        d = a[k] - b[k]
        s += d * d
    return s


@njit(cache=True)
def _msd_row(a, frames, out):
    # out[j] = sum of squared coordinate differences between a and frames[j]
    for j in range(frames.shape[0]):
        out[j] = _msd_flat(a, frames[j])


@njit(cache=True)
def _msd_row_min_break(a, frames, break_below):
    """Running min of squared sums over ``frames``, stopping early.

    Scans frames in order; once the running min drops strictly below
    ``break_below`` the remaining frames cannot influence a directed
    Hausdorff maximum, so the scan stops. Returns the (possibly partial)
    running min.
    """
    m = np.inf
    for j in range(frames.shape[0]):
        s = _msd_flat(a, frames[j])
        if s < m:
            m = s
        if m < break_below:
            break
    return m


@njit(cache=True)
def _edge_block(rx, ry, rz, cx, cy, cz, c2, row0, col0, mode, out_u, out_v):
    """Collect index pairs with squared distance <= c2 (inclusive).

    Row/col coordinates arrive as separate float32 arrays; row0/col0 are
    the global indices of the first row/col atom. Writes at most
    ``out_u.size`` pairs but keeps counting, so a return value larger
    than the capacity means "re-run with a bigger buffer".
    """
    n = 0
    cap = out_u.shape[0]
    nc = cx.shape[0]
    d2 = np.empty(nc, np.float64)
    for i in range(rx.shape[0]):
        ax = np.float64(rx[i])
        ay = np.float64(ry[i])
        az = np.float64(rz[i])
        for j in range(nc):
            dx = ax - np.float64(cx[j])
            dy = ay - np.float64(cy[j])
            dz = az - np.float64(cz[j])
            d2[j] = (dx * dx + dy * dy) + dz * dz
        gu = row0 + i
        if mode == 1:
            jstart = i + 1
        else:
            jstart = 0
        for j in range(jstart, nc):
            if d2[j] <= c2:
                gv = col0 + j
                if mode == 2 and gu >= gv:
                    continue
                if n < cap:
                    out_u[n] = gu
                    out_v[n] = gv
                n += 1
    return n


@njit(cache=True)
def _tree_collect_pairs(
    data_x, data_y, data_z, perm, node_start, node_end, node_is_leaf,
    node_cx, node_cy, node_cz, node_radius,
    qx, qy, qz, radius, row0, col0, mode, out_u, out_v,
):
    """Radius search of every query point against a built ball tree.

    Tree arrays are the flattened heap produced by build_balltree
    (children of node i live at 2i+1 and 2i+2). Emits global index pairs
    under the same modes and the same exact float64 predicate as
    _edge_block, so both edge-discovery routes agree bit-for-bit.
    Returns the number of pairs (may exceed capacity; see _edge_block).
    """
    n = 0
    cap = out_u.shape[0]
    c2 = radius * radius
    # generous slack on the pruning bound only; leaf checks are exact
    slack = 1e-9 + 1e-12 * radius
    stack = np.empty(128, np.int64)
    for q in range(qx.shape[0]):
        ax = np.float64(qx[q])
        ay = np.float64(qy[q])
        az = np.float64(qz[q])
        gu = row0 + q
        top = 0
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            dxc = ax - node_cx[node]
            dyc = ay - node_cy[node]
            dzc = az - node_cz[node]
            dc = np.sqrt((dxc * dxc + dyc * dyc) + dzc * dzc)
            if dc - node_radius[node] > radius + slack:
                continue
            if node_is_leaf[node]:
                for t in range(node_start[node], node_end[node]):
                    p = perm[t]
                    dx = ax - np.float64(data_x[p])
                    dy = ay - np.float64(data_y[p])
                    dz = az - np.float64(data_z[p])
                    d2 = (dx * dx + dy * dy) + dz * dz
                    if d2 <= c2:
                        gv = col0 + p
                        # diagonal and rows-vs-all both keep gu < gv only
                        if mode != 0 and gv <= gu:
                            continue
                        if n < cap:
                            out_u[n] = gu
                            out_v[n] = gv
                        n += 1
            else:
                stack[top] = 2 * node + 1
                top += 1
                stack[top] = 2 * node + 2
                top += 1
    return n
