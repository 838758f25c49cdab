"""Binary trajectory format, seeded synthetic generators, CSV emission.

TRJB format, version 1 (little-endian throughout)::

    offset  size  field
    0       4     magic "TRJB"
    4       2     version (uint16, = 1)
    6       4     n_frames (uint32)
    10      4     n_atoms (uint32)
    14      ...   frames in order; each frame is n_atoms * 3 float32
                  (x, y, z interleaved)

Total size is ``14 + 12 * n_frames * n_atoms`` bytes. The format is a
deliberately minimal stand-in for production trajectory files: no units,
no topology, bit-exact round trips.

All generators are pure functions of their arguments; the same seed
yields byte-identical data (see :mod:`trajan.rng`).
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from . import rng
from .core import ComponentSet, System, Trajectory
from .errors import DataError, FormatError, UsageError

TRJB_MAGIC = b"TRJB"
TRJB_VERSION = 1
_HEADER = struct.Struct("<4sHII")
HEADER_SIZE = _HEADER.size  # 14
FRAME_ITEM_SIZE = 12  # 3 * float32


@dataclass(frozen=True)
class TrjbHeader:
    """Parsed TRJB file header."""

    n_frames: int
    n_atoms: int
    version: int = TRJB_VERSION

    @property
    def payload_size(self) -> int:
        return FRAME_ITEM_SIZE * self.n_frames * self.n_atoms

    @property
    def file_size(self) -> int:
        return HEADER_SIZE + self.payload_size


def _open_sink(destination, mode):
    if isinstance(destination, (str, Path)):
        return open(destination, mode), True
    return destination, False


def write_trjb(trajectory: Trajectory, destination) -> int:
    """Write a trajectory to a path or binary sink; returns bytes written."""
    sink, owned = _open_sink(destination, "wb")
    try:
        header = _HEADER.pack(
            TRJB_MAGIC, TRJB_VERSION, trajectory.n_frames, trajectory.n_atoms
        )
        payload = np.ascontiguousarray(trajectory.positions, dtype="<f4").tobytes()
        try:
            sink.write(header)
            sink.write(payload)
        except OSError as exc:
            raise OSError(
                f"write failed at byte {len(header)} of trajectory "
                f"{trajectory.id!r}: {exc}"
            ) from exc
        return len(header) + len(payload)
    finally:
        if owned:
            sink.close()


def read_trjb_header(source) -> TrjbHeader:
    """Read and validate only the 14-byte header."""
    stream, owned = _open_sink(source, "rb")
    try:
        raw = stream.read(HEADER_SIZE)
        if len(raw) < HEADER_SIZE:
            raise FormatError(
                f"truncated header: expected {HEADER_SIZE} bytes, got {len(raw)}"
            )
        magic, version, n_frames, n_atoms = _HEADER.unpack(raw)
        if magic != TRJB_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {TRJB_MAGIC!r}")
        if version != TRJB_VERSION:
            raise FormatError(f"unsupported version {version}, expected {TRJB_VERSION}")
        if n_frames < 1 or n_atoms < 1:
            raise FormatError(
                f"header declares n_frames={n_frames}, n_atoms={n_atoms}; both must be >= 1"
            )
        return TrjbHeader(n_frames=n_frames, n_atoms=n_atoms, version=version)
    finally:
        if owned:
            stream.close()


def read_trjb(source, id: str | None = None) -> Trajectory:
    """Read a trajectory from a path or binary stream.

    The trajectory id defaults to the file stem when reading from a
    path (TRJB carries no label of its own).
    """
    if id is None and isinstance(source, (str, Path)):
        id = Path(source).stem
    stream, owned = _open_sink(source, "rb")
    try:
        header = read_trjb_header(stream)
        raw = stream.read(header.payload_size)
        if len(raw) < header.payload_size:
            raise FormatError(
                f"truncated payload: expected {header.payload_size} bytes, got {len(raw)}"
            )
        data = np.frombuffer(raw, dtype="<f4").reshape(
            header.n_frames, header.n_atoms, 3
        )
        if not np.all(np.isfinite(data)):
            raise DataError("trajectory payload contains NaN or Inf coordinates")
        return Trajectory(data, id=id or "")
    finally:
        if owned:
            stream.close()


def write_system_trjb(system: System, destination) -> int:
    """Store a single-snapshot system as a 1-frame TRJB file."""
    traj = Trajectory(system.positions[np.newaxis, :, :], id=system.id)
    return write_trjb(traj, destination)


def read_system_trjb(source, id: str | None = None) -> System:
    traj = read_trjb(source, id=id)
    if traj.n_frames != 1:
        raise FormatError(
            f"expected a single-frame system file, found {traj.n_frames} frames"
        )
    return System(traj.positions[0], id=traj.id)


# ---------------------------------------------------------------------------
# Synthetic data generators


#: box edge (nm) for initial random configurations
ENSEMBLE_BOX = 10.0
#: per-frame, per-axis random-walk step bound (nm)
ENSEMBLE_STEP = 0.05


def generate_trajectory(n_frames: int, n_atoms: int, seed: int, id: str = "") -> Trajectory:
    """One random-walk trajectory, deterministic in ``seed``.

    Frame 0 is uniform in a cubic box; every later frame displaces each
    coordinate by a bounded uniform step, so trajectories drift apart
    and pairwise Hausdorff distances are nonzero.
    """
    if n_frames < 1 or n_atoms < 1:
        raise UsageError("generate_trajectory: counts must be >= 1")
    per_frame = n_atoms * 3
    values = rng.random_doubles(seed, n_frames * per_frame)
    values = values.reshape(n_frames, per_frame)
    walk = np.empty_like(values)
    walk[0] = values[0] * ENSEMBLE_BOX
    if n_frames > 1:
        steps = (values[1:] * 2.0 - 1.0) * ENSEMBLE_STEP
        np.cumsum(steps, axis=0, out=walk[1:])
        walk[1:] += walk[0]
    return Trajectory(walk.astype(np.float32).reshape(n_frames, n_atoms, 3), id=id)


def generate_ensemble(
    n_traj: int, n_frames: int, n_atoms: int, seed: int
) -> list[Trajectory]:
    """``n_traj`` independent trajectories; substream per trajectory."""
    if n_traj < 1:
        raise UsageError("generate_ensemble: n_traj must be >= 1")
    return [
        generate_trajectory(
            n_frames, n_atoms, rng.substream_seed(seed, t), id=f"traj-{t:04d}"
        )
        for t in range(n_traj)
    ]


@dataclass(frozen=True)
class BilayerSpec:
    """Parameters for the flat two-sheet benchmark system.

    The generator produces the idealized flat version of a lipid
    bilayer: two jittered square lattices a fixed distance apart, which
    gives a provable two-component ground truth.
    """

    atoms_per_leaflet: int
    separation: float
    lattice_spacing: float
    jitter: float
    seed: int

    def validate(self, cutoff: float | None = None) -> None:
        if self.atoms_per_leaflet < 1:
            raise UsageError("BilayerSpec: atoms_per_leaflet must be >= 1")
        if self.lattice_spacing <= 0 or self.separation <= 0:
            raise UsageError("BilayerSpec: spacing and separation must be positive")
        if self.jitter < 0 or self.jitter >= self.lattice_spacing / 2:
            raise UsageError(
                f"BilayerSpec: jitter {self.jitter} must lie in [0, spacing/2 = "
                f"{self.lattice_spacing / 2})"
            )
        if cutoff is not None:
            if cutoff <= 0:
                raise UsageError("BilayerSpec: cutoff must be positive")
            # sheets must stay farther apart than the cutoff ...
            if self.separation - 2 * self.jitter <= cutoff:
                raise UsageError(
                    f"BilayerSpec: separation {self.separation} is not safely larger "
                    f"than cutoff {cutoff} + 2*jitter {2 * self.jitter}"
                )
            # ... while lattice neighbors within a sheet must stay inside it
            j2 = 2 * self.jitter
            worst_nn = math.sqrt((self.lattice_spacing + j2) ** 2 + 2 * j2 * j2)
            if self.atoms_per_leaflet > 1 and cutoff < worst_nn:
                raise UsageError(
                    f"BilayerSpec: cutoff {cutoff} cannot guarantee in-sheet "
                    f"connectivity (worst-case neighbor distance {worst_nn:.4f})"
                )


def generate_bilayer(
    spec: BilayerSpec, cutoff: float | None = None
) -> tuple[System, ComponentSet]:
    """Two flat jittered sheets plus their ground-truth partition.

    Atoms ``0..A-1`` sit on the sheet at z ~ 0, atoms ``A..2A-1`` on the
    sheet at z ~ separation. When ``cutoff`` is given, the spec is
    validated against it so that any correct leaflet assignment must
    recover exactly these two components.
    """
    spec.validate(cutoff)
    a = spec.atoms_per_leaflet
    side = math.isqrt(a)
    if side * side < a:
        side += 1
    i = np.arange(a)
    gx = (i % side).astype(np.float64) * spec.lattice_spacing
    gy = (i // side).astype(np.float64) * spec.lattice_spacing
    base = np.zeros((2 * a, 3))
    base[:a, 0] = gx
    base[:a, 1] = gy
    base[a:, 0] = gx
    base[a:, 1] = gy
    base[a:, 2] = spec.separation
    noise = rng.random_uniform(spec.seed, 6 * a, -spec.jitter, spec.jitter)
    positions = base + noise.reshape(2 * a, 3)
    truth = ComponentSet(np.repeat(np.array([0, 1], dtype=np.int64), a))
    system = System(positions.astype(np.float32), id=f"bilayer-{a}x2-seed{spec.seed}")
    return system, truth


# ---------------------------------------------------------------------------
# Result emission

RESULTS_CSV_HEADER = ("op", "scale", "workers", "repeat", "wall_seconds", "bytes_shuffled")


def write_results_csv(records: Iterable, destination) -> int:
    """Write benchmark records as CSV; returns bytes written.

    Schema: ``op,scale,workers,repeat,wall_seconds,bytes_shuffled`` with
    RFC-4180 quoting. ``records`` is any iterable of objects with those
    attributes (normally :class:`trajan.engine.BenchRecord`).
    """
    import io as _io

    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULTS_CSV_HEADER)
    for rec in records:
        writer.writerow(
            [
                rec.op,
                rec.scale,
                rec.workers,
                rec.repeat,
                repr(rec.wall_seconds),
                rec.bytes_shuffled,
            ]
        )
    data = buf.getvalue().encode("utf-8")
    sink, owned = _open_sink(destination, "wb")
    try:
        sink.write(data)
    finally:
        if owned:
            sink.close()
    return len(data)


def read_results_csv(source) -> list[dict]:
    """Parse a results CSV back into a list of dicts (round-trip helper)."""
    stream, owned = _open_sink(source, "rb")
    try:
        text = stream.read().decode("utf-8")
    finally:
        if owned:
            stream.close()
    rows = list(csv.DictReader(text.splitlines()))
    for row in rows:
        row["workers"] = int(row["workers"])
        row["repeat"] = int(row["repeat"])
        row["wall_seconds"] = float(row["wall_seconds"])
        row["bytes_shuffled"] = int(row["bytes_shuffled"])
    return rows
