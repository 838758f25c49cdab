"""The multi-process backend: a scheduler plus wire-protocol workers.

The engine binds a TCP port and spawns `trajan worker` subprocesses that
connect, REGISTER, and serve TPW1 frames. The same analysis code runs
unchanged on either backend and produces identical results.

Run:  python demos/04_wire_protocol_workers.py
"""

import numpy as np

from trajan import io as tio
from trajan.engine import Engine, EngineConfig
from trajan.psa import psa_matrix

trajs = tio.generate_ensemble(n_traj=8, n_frames=20, n_atoms=32, seed=7)

reference = None
for backend in ("in-process", "multi-process"):
    config = EngineConfig(backend=backend, workers=2, listen="127.0.0.1:0")
    with Engine(config) as engine:
        if backend == "multi-process":
            print(f"scheduler listening on {engine.address}, workers registered")
        matrix = psa_matrix(trajs, block=4, engine=engine)
    if reference is None:
        reference = matrix.values
        print(f"{backend}: computed {matrix.n}x{matrix.n} matrix")
    else:
        identical = np.array_equal(reference, matrix.values)
        print(f"{backend}: matrix bit-identical to in-process run: {identical}")
        assert identical

# Workers can also run on other machines: start them by hand with
#   trajan worker --connect HOST:PORT
# against an engine configured with spawn_workers=False and a fixed
# listen address (or the TRAJAN_LISTEN environment variable).
