"""Path similarity analysis: all-pairs Hausdorff distance.

The per-frame distance is d_RMS: the root-mean-square over atoms of the
Euclidean distance between index-matched atom positions, with no
superposition or alignment (frames are compared as raw point sets; see
README for why). The Hausdorff distance between two trajectories is the
larger of the two directed values ``max over frames of one trajectory
of the min d_RMS to any frame of the other``.

Two evaluation variants are provided. ``naive`` evaluates every frame
pair once; ``early-break`` prunes inner scans that can no longer affect
the directed maximum and is bit-identical to ``naive`` by construction:
each frame pair it does evaluate goes through the same float64 kernel,
and pruning only skips candidates that cannot change a min/max.

All comparisons run on squared sums internally; the final square root
and the division by the atom count are monotone, so min/max commute
with them exactly.
"""

from __future__ import annotations

import io as _stdio
import math
import pickle
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io as tio
from ._kernels import _msd_flat, _msd_row, _msd_row_min_break
from .core import Frame, PartitionPlan, Trajectory
from .engine import Engine, TaskSpec
from .engine.registry import KIND_PSA_BLOCK, register
from .errors import TaskFailure, UsageError

VARIANT_NAIVE = "naive"
VARIANT_EARLY_BREAK = "early-break"
VARIANTS = (VARIANT_NAIVE, VARIANT_EARLY_BREAK)


class DistanceMatrix:
    """Symmetric all-pairs trajectory distance matrix (nm)."""

    __slots__ = ("values", "labels")

    def __init__(self, values, labels: Sequence[str]):
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.labels = list(labels)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise UsageError("DistanceMatrix: values must be square")
        if len(self.labels) != self.values.shape[0]:
            raise UsageError("DistanceMatrix: one label per row required")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def validate(self):
        if not np.all(np.isfinite(self.values)):
            raise UsageError("DistanceMatrix: non-finite entries")
        if np.any(self.values < 0):
            raise UsageError("DistanceMatrix: negative distances")
        if np.any(np.diag(self.values) != 0.0):
            raise UsageError("DistanceMatrix: nonzero diagonal")
        if not np.array_equal(self.values, self.values.T):
            raise UsageError("DistanceMatrix: not symmetric")

    def write_csv(self, destination) -> int:
        """Rows of ``label,v0,v1,...`` preceded by a matching header."""
        import csv

        buf = _stdio.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["label"] + self.labels)
        for label, row in zip(self.labels, self.values):
            writer.writerow([label] + [repr(float(v)) for v in row])
        data = buf.getvalue().encode("utf-8")
        sink, owned = tio._open_sink(destination, "wb")
        try:
            sink.write(data)
        finally:
            if owned:
                sink.close()
        return len(data)


def _frame_positions(frame) -> np.ndarray:
    if isinstance(frame, Frame):
        return frame.positions
    arr = np.asarray(frame, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise UsageError(f"expected an (N, 3) frame, got shape {arr.shape}")
    return arr


def d_rms(a, b) -> float:
    """Root-mean-square distance between two index-matched frames."""
    pa = _frame_positions(a)
    pb = _frame_positions(b)
    if pa.shape[0] != pb.shape[0]:
        raise UsageError(
            f"d_rms: mismatched atom counts {pa.shape[0]} vs {pb.shape[0]}"
        )
    s = _msd_flat(
        np.ascontiguousarray(pa, dtype=np.float64).ravel(),
        np.ascontiguousarray(pb, dtype=np.float64).ravel(),
    )
    return math.sqrt(s / pa.shape[0])


def _flat64(traj: Trajectory) -> np.ndarray:
    # float32 -> float64 is exact, so both variants and the scalar
    # oracle see identical coordinate values
    return np.ascontiguousarray(
        traj.positions.astype(np.float64).reshape(traj.n_frames, -1)
    )


def _check_pair(t1: Trajectory, t2: Trajectory):
    if t1.n_atoms != t2.n_atoms:
        raise UsageError(
            f"hausdorff: mismatched atom counts {t1.n_atoms} vs {t2.n_atoms}"
        )


def _hausdorff_sq_naive(a: np.ndarray, b: np.ndarray) -> float:
    # full |t1| x |t2| table of squared sums; the second direction is
    # the same table read the other way (the kernel is symmetric in its
    # arguments, bit for bit)
    table = np.empty((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        _msd_row(a[i], b, table[i])
    d1 = table.min(axis=1).max()
    d2 = table.min(axis=0).max()
    return max(d1, d2)


def _hausdorff_sq_early_break(a: np.ndarray, b: np.ndarray) -> float:
    cmax = 0.0
    for i in range(a.shape[0]):
        m = _msd_row_min_break(a[i], b, cmax)
        if m > cmax:
            cmax = m
    for j in range(b.shape[0]):
        m = _msd_row_min_break(b[j], a, cmax)
        if m > cmax:
            cmax = m
    return cmax


_SQ_VARIANTS = {
    VARIANT_NAIVE: _hausdorff_sq_naive,
    VARIANT_EARLY_BREAK: _hausdorff_sq_early_break,
}


def hausdorff_naive(t1: Trajectory, t2: Trajectory) -> float:
    """Hausdorff distance evaluating every frame pair."""
    _check_pair(t1, t2)
    return math.sqrt(_hausdorff_sq_naive(_flat64(t1), _flat64(t2)) / t1.n_atoms)


def hausdorff_early_break(t1: Trajectory, t2: Trajectory) -> float:
    """Hausdorff distance with inner-scan pruning; equals naive exactly."""
    _check_pair(t1, t2)
    return math.sqrt(_hausdorff_sq_early_break(_flat64(t1), _flat64(t2)) / t1.n_atoms)


def partition_2d(n_items: int, block: int) -> PartitionPlan:
    """2-D blocking of the all-pairs grid; block must divide n_items."""
    return PartitionPlan(n_items, block)


# ---------------------------------------------------------------------------
# Engine integration


def _sources_for(trajectories) -> tuple[list, list[str], int]:
    """Normalize inputs to task-shippable sources + labels + atom count.

    Accepts in-memory Trajectory objects (shipped as TRJB bytes inside
    task payloads) or TRJB paths (workers read their own blocks).
    """
    sources: list[tuple[str, object]] = []
    labels: list[str] = []
    atoms: list[int] = []
    for item in trajectories:
        if isinstance(item, Trajectory):
            buf = _stdio.BytesIO()
            tio.write_trjb(item, buf)
            sources.append(("trjb", buf.getvalue()))
            labels.append(item.id)
            atoms.append(item.n_atoms)
        else:
            path = str(item)
            header = tio.read_trjb_header(path)
            sources.append(("path", path))
            labels.append(Path(path).stem)
            atoms.append(header.n_atoms)
    if len(set(atoms)) > 1:
        offenders = sorted(set(atoms))
        raise UsageError(
            f"psa_matrix: trajectories disagree on atom count {offenders}; "
            f"labels={labels}"
        )
    return sources, labels, atoms[0]


def _load_source(source) -> Trajectory:
    tag, value = source
    if tag == "path":
        return tio.read_trjb(value)
    if tag == "trjb":
        return tio.read_trjb(_stdio.BytesIO(value))
    raise UsageError(f"unknown trajectory source tag {tag!r}")


_BLOCK_HEAD = struct.Struct("<IIII")


@register(KIND_PSA_BLOCK)
def _psa_block_task(payload: bytes, ctx) -> bytes:
    """Map task: Hausdorff sub-block between a row and a col block."""
    variant, bi, bj, row_sources, col_sources = pickle.loads(payload)
    sq = _SQ_VARIANTS[variant]
    rows = [_load_source(s) for s in row_sources]
    cols = rows if col_sources is None else [_load_source(s) for s in col_sources]
    rflat = [_flat64(t) for t in rows]
    cflat = rflat if col_sources is None else [_flat64(t) for t in cols]
    n_atoms = rows[0].n_atoms
    out = np.zeros((len(rows), len(cflat)))
    diagonal = col_sources is None
    for a in range(len(rflat)):
        for b in range(len(cflat)):
            if diagonal and b <= a:
                continue  # mirrored below; the diagonal itself is 0
            out[a, b] = math.sqrt(sq(rflat[a], cflat[b]) / n_atoms)
    if diagonal:
        out = np.maximum(out, out.T)  # mirror the computed upper triangle
    return _BLOCK_HEAD.pack(bi, bj, out.shape[0], out.shape[1]) + out.tobytes()


def psa_matrix(
    trajectories,
    block: int,
    engine: Engine,
    variant: str = VARIANT_EARLY_BREAK,
    full_grid: bool = False,
) -> DistanceMatrix:
    """All-pairs Hausdorff matrix computed as 2-D partitioned map tasks.

    Each task receives only the trajectory sources of its row/col block,
    loads them itself, and returns its sub-block; the driver assembles
    the symmetric matrix. By default only blocks with i <= j are
    computed and (j, i) is mirrored; ``full_grid=True`` computes all
    k**2 blocks (benchmark parity with the all-pairs formulation, same
    values).

    Raises :class:`TaskFailure` naming the failing block if any task
    errors, and :class:`UsageError` before submission if trajectory
    shapes disagree.
    """
    if variant not in _SQ_VARIANTS:
        raise UsageError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    sources, labels, _n_atoms = _sources_for(trajectories)
    n = len(sources)
    plan = partition_2d(n, block)
    wanted = [(i, j) for (i, j) in plan.tasks if full_grid or i <= j]

    tasks = []
    coords: dict[int, tuple[int, int]] = {}
    for tid, (i, j) in enumerate(wanted):
        rows = sources[i * block:(i + 1) * block]
        cols = None if (i == j and not full_grid) else sources[j * block:(j + 1) * block]
        payload = pickle.dumps((variant, i, j, rows, cols), protocol=4)
        tasks.append(TaskSpec(tid, KIND_PSA_BLOCK, payload))
        coords[tid] = (i, j)

    results = engine.submit_map(
        tasks, op=f"psa.map.{variant}", scale=f"n={n},block={block}"
    )
    values = np.zeros((n, n))
    for res in results:
        if not res.ok:
            i, j = coords[res.task_id]
            raise TaskFailure(
                f"psa block ({i}, {j}) failed: {res.payload.decode(errors='replace')}",
                task_id=res.task_id,
                coords=(i, j),
            )
        bi, bj, nr, nc = _BLOCK_HEAD.unpack_from(res.payload)
        sub = np.frombuffer(res.payload[_BLOCK_HEAD.size:], dtype=np.float64)
        sub = sub.reshape(nr, nc)
        rs, cs = bi * block, bj * block
        values[rs:rs + nr, cs:cs + nc] = sub
        if bi != bj:
            values[cs:cs + nc, rs:rs + nr] = sub.T
    matrix = DistanceMatrix(values, labels)
    matrix.validate()
    return matrix
