"""The task engine: map, broadcast, reduce, and dispatch throughput.

Shows the engine primitives directly, then measures zero-workload task
throughput (the classic scheduler benchmark) cold and warm.

Run:  python demos/03_engine_and_throughput.py
"""

import struct

from trajan.engine import (
    KIND_ECHO,
    KIND_FETCH_BROADCAST,
    KIND_NOOP,
    Engine,
    EngineConfig,
    TaskSpec,
    reduce as engine_reduce,
    throughput_benchmark,
)

# --- primitives ---------------------------------------------------------------
with Engine(EngineConfig(backend="in-process", workers=2)) as engine:
    # map: every task runs exactly once, results return in task-id order
    results = engine.submit_map(
        [TaskSpec(i, KIND_ECHO, struct.pack("<q", i * i)) for i in range(10)]
    )
    squares = [struct.unpack("<q", r.payload)[0] for r in results]
    print("echoed squares:", squares)

    # reduce: deterministic left fold over the gathered payloads
    def add(a, b):
        return struct.pack("<q", struct.unpack("<q", a)[0] + struct.unpack("<q", b)[0])

    total = struct.unpack("<q", engine_reduce(results, add))[0]
    print("sum of squares via reduce:", total)

    # broadcast: one payload replicated to every worker, fetched by tasks
    handle = engine.broadcast(b"shared-lookup-table")
    fetched = engine.submit_map(
        [TaskSpec(i, KIND_FETCH_BROADCAST, struct.pack("<Q", handle.handle_id))
         for i in range(4)]
    )
    assert all(r.payload == b"shared-lookup-table" for r in fetched)
    print(f"broadcast of {handle.size} bytes resolved on every worker")

# --- zero-workload throughput --------------------------------------------------
# Dispatch cost dominates no-op tasks, so this measures the scheduler
# round trip itself. Cold includes engine startup; warm does not.
N = 20_000
for workers in (1, 2):
    config = EngineConfig(backend="in-process", workers=workers)
    cold = throughput_benchmark(N, config)
    with Engine(config) as engine:
        engine.submit_map([TaskSpec(i, KIND_NOOP) for i in range(200)], op="warmup")
        warm = throughput_benchmark(N, engine=engine)
    print(
        f"{workers} worker(s): cold {N / cold.wall_seconds:8.0f} tasks/s, "
        f"warm {N / warm.wall_seconds:8.0f} tasks/s"
    )
