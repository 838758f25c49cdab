"""trajan: task-parallel analysis of molecular dynamics trajectories.

A small toolkit built around two analyses — Hausdorff-distance path
similarity over trajectory ensembles (:mod:`trajan.psa`) and leaflet
assignment via connected components of a cutoff graph
(:mod:`trajan.leaflet`, in four architectural variants) — running on a
minimal map/broadcast/reduce engine (:mod:`trajan.engine`) with
byte-level shuffle accounting. Synthetic data generators and the TRJB
binary trajectory format live in :mod:`trajan.io`.
"""

__version__ = "0.1.0"

from . import core, engine, io, leaflet, psa  # noqa: F401  (registers task kinds)
from .core import (
    ComponentSet,
    DisjointSet,
    EdgeList,
    Frame,
    PartitionPlan,
    System,
    Trajectory,
)
from .errors import (
    DataError,
    FormatError,
    ProtocolError,
    ResourceError,
    TaskFailure,
    TrajanError,
    UsageError,
)

__all__ = [
    "__version__",
    "ComponentSet",
    "DisjointSet",
    "EdgeList",
    "Frame",
    "PartitionPlan",
    "System",
    "Trajectory",
    "DataError",
    "FormatError",
    "ProtocolError",
    "ResourceError",
    "TaskFailure",
    "TrajanError",
    "UsageError",
    "core",
    "engine",
    "io",
    "leaflet",
    "psa",
]
