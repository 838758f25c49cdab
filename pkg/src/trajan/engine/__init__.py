"""Minimal task-parallel execution engine: map, broadcast, reduce.

See :mod:`trajan.engine.engine` for the scheduling model and
:mod:`trajan.engine.wire` for the multi-process wire protocol.
"""

from .engine import (
    BACKEND_IN_PROCESS,
    BACKEND_MULTI_PROCESS,
    BenchRecord,
    BroadcastHandle,
    Engine,
    EngineConfig,
    TaskResult,
    TaskSpec,
    reduce,
    submit_map,
    throughput_benchmark,
)
from .registry import (
    KIND_CRASH,
    KIND_ECHO,
    KIND_FETCH_BROADCAST,
    KIND_NOOP,
    KIND_PID,
    KIND_SLEEP,
    register,
)
from .worker import WorkerContext, execute_task, worker_serve

__all__ = [
    "BACKEND_IN_PROCESS",
    "BACKEND_MULTI_PROCESS",
    "BenchRecord",
    "BroadcastHandle",
    "Engine",
    "EngineConfig",
    "TaskResult",
    "TaskSpec",
    "WorkerContext",
    "KIND_CRASH",
    "KIND_ECHO",
    "KIND_FETCH_BROADCAST",
    "KIND_NOOP",
    "KIND_PID",
    "KIND_SLEEP",
    "execute_task",
    "reduce",
    "register",
    "submit_map",
    "throughput_benchmark",
    "worker_serve",
]
