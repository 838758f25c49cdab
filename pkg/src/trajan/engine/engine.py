"""Driver side of the task engine: scheduling, broadcast, accounting.

Scheduling is pull-based with one outstanding task per worker: a worker
receives a task, executes it, and its result doubles as the request for
the next one. Uniform analysis blocks keep workers busy despite the
per-task round trip, and the round trip itself is exactly what the
zero-workload throughput benchmark measures.

Both backends speak the same TPW1 frame protocol over a stream socket;
they differ only in how workers come to exist:

* ``in-process`` — the engine forks its workers and talks to them over
  socketpairs. Workers inherit the parent's imports; cheap default for
  a single machine.
* ``multi-process`` — workers are independent processes (``trajan
  worker``) that connect over TCP and REGISTER; the engine can also
  spawn them as local subprocesses.

Failure policy: a worker that dies or violates the protocol is dropped;
each of its in-flight tasks is retried once on another worker, then
reported as an error result. Payload and broadcast sizes are checked
against the per-worker memory budget up front, before anything is sent.
"""

from __future__ import annotations

import multiprocessing
import selectors
import socket
import subprocess
import sys
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from ..errors import ProtocolError, ResourceError, TrajanError, UsageError
from . import wire
from .worker import fork_worker_main, parse_address

BACKEND_IN_PROCESS = "in-process"
BACKEND_MULTI_PROCESS = "multi-process"

DEFAULT_MEMORY_BUDGET = 1 << 30

_RECV_CHUNK = 1 << 18


@dataclass
class TaskSpec:
    """One unit of work: unique id, kind tag, opaque input payload."""

    task_id: int
    kind: int
    payload: bytes = b""


@dataclass
class TaskResult:
    """Outcome of one task; payload_size feeds the shuffle accounting."""

    task_id: int
    status: str  # "ok" | "error"
    payload: bytes
    payload_size: int
    wall_seconds: float

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class BroadcastHandle:
    """Token for data replicated to every worker."""

    handle_id: int
    size: int


@dataclass
class EngineConfig:
    """Engine parameters.

    ``listen`` is the multi-process bind address ("host:port", port 0
    for ephemeral); ``spawn_workers`` makes the engine launch local
    ``trajan worker`` subprocesses instead of waiting for external
    registrations.
    """

    backend: str = BACKEND_IN_PROCESS
    workers: int = 1
    memory_budget: int = DEFAULT_MEMORY_BUDGET
    listen: str | None = None
    spawn_workers: bool = True
    start_timeout: float = 60.0

    def __post_init__(self):
        if self.backend not in (BACKEND_IN_PROCESS, BACKEND_MULTI_PROCESS):
            raise UsageError(f"unknown backend {self.backend!r}")
        if self.workers < 1:
            raise UsageError("workers must be >= 1")
        if self.memory_budget <= 0:
            raise UsageError("memory budget must be positive")


@dataclass
class BenchRecord:
    """One timed measurement, as written to results CSV files."""

    op: str
    scale: str
    workers: int
    repeat: int
    wall_seconds: float
    bytes_shuffled: int


class _Channel:
    """Driver-side view of one worker connection."""

    __slots__ = ("sock", "parser", "alive", "process", "_rbuf", "_view")

    def __init__(self, sock: socket.socket, process=None):
        self.sock = sock
        self.parser = wire.FrameParser()
        self.alive = True
        self.process = process  # multiprocessing.Process for forked workers
        self._rbuf = bytearray(_RECV_CHUNK)
        self._view = memoryview(self._rbuf)

    def send_task(self, task_id: int, kind: int, payload: bytes):
        self.sock.sendall(wire.pack_task(task_id, kind, payload))

    def send_broadcast(self, handle_id: int, data: bytes):
        self.sock.sendall(wire.pack_broadcast(handle_id, data))

    def send_shutdown(self):
        try:
            self.sock.sendall(wire.pack_frame(wire.MSG_SHUTDOWN))
        except OSError:
            pass

    def drain(self):
        """Messages available after one read: ("r", ...), ("a", id),
        or ("dead", why) when the worker is gone or misbehaving."""
        try:
            n = self.sock.recv_into(self._view)
        except OSError as exc:
            return [("dead", f"worker socket error: {exc}")]
        if n == 0:
            return [("dead", "worker connection closed")]
        out = []
        try:
            self.parser.feed(self._view[:n])
            for mtype, payload in self.parser:
                if mtype == wire.MSG_RESULT:
                    task_id, status, wall, output = wire.unpack_result(payload)
                    out.append(("r", task_id, status, wall, output))
                elif mtype == wire.MSG_ACK:
                    out.append(("a", wire.unpack_ack(payload)))
                else:
                    raise ProtocolError(f"unexpected message type {mtype} from worker")
        except ProtocolError as exc:
            out.append(("dead", f"protocol violation: {exc}"))
        return out

    def close(self):
        self.alive = False
        try:
            self.sock.close()
        except OSError:
            pass
        if self.process is not None:
            self.process.join(timeout=5.0)
            if self.process.is_alive():
                self.process.terminate()
                self.process.join(timeout=5.0)
            self.process = None


class Engine:
    """Task engine driver. Single caller; see module docstring."""

    def __init__(self, config: EngineConfig):
        self.config = config
        self.records: list[BenchRecord] = []
        self._channels: list[_Channel] = []
        self._subprocs: list[subprocess.Popen] = []
        self._listener: socket.socket | None = None
        self._selector = None
        self._next_broadcast = 1
        self._started = False

    # -- lifecycle -----------------------------------------------------------

    def __enter__(self):
        if not self._started:
            self.start()
        return self

    def __exit__(self, *exc):
        self.shutdown()

    def start(self) -> "Engine":
        if self._started:
            raise UsageError("engine already started")
        self._selector = selectors.DefaultSelector()
        if self.config.backend == BACKEND_IN_PROCESS:
            self._start_fork()
        else:
            self._start_wire()
        self._started = True
        return self

    def _add_channel(self, ch: _Channel):
        self._channels.append(ch)
        self._selector.register(ch.sock, selectors.EVENT_READ, ch)

    def _drop_channel(self, ch: _Channel):
        if ch.alive:
            try:
                self._selector.unregister(ch.sock)
            except (KeyError, ValueError):
                pass
        ch.close()

    def _start_fork(self):
        ctx = multiprocessing.get_context("fork")
        for _ in range(self.config.workers):
            parent_sock, child_sock = socket.socketpair()
            proc = ctx.Process(
                target=fork_worker_main,
                args=(child_sock, self.config.memory_budget),
                daemon=True,
            )
            proc.start()
            child_sock.close()
            self._add_channel(_Channel(parent_sock, process=proc))

    def _start_wire(self):
        host, port = parse_address(self.config.listen or "127.0.0.1:0")
        listener = socket.socket()
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((host, port))
        listener.listen(self.config.workers + 8)
        listener.setblocking(False)
        self._listener = listener
        self.address = "%s:%d" % listener.getsockname()

        if self.config.spawn_workers:
            for _ in range(self.config.workers):
                self._subprocs.append(
                    subprocess.Popen(
                        [
                            sys.executable, "-m", "trajan", "worker",
                            "--connect", self.address,
                            "--memory-budget", str(self.config.memory_budget),
                        ],
                    )
                )
        self._accept_registrations()

    def _accept_registrations(self):
        """Accept connections until ``workers`` REGISTER frames arrived.

        Connections that send anything else are dropped: garbage must
        neither crash the engine nor block legitimate workers.
        """
        deadline = time.monotonic() + self.config.start_timeout
        sel = selectors.DefaultSelector()
        sel.register(self._listener, selectors.EVENT_READ, None)
        pending: dict[socket.socket, wire.FrameParser] = {}
        try:
            while len(self._channels) < self.config.workers:
                if time.monotonic() > deadline:
                    raise TrajanError(
                        f"engine start timed out with {len(self._channels)} of "
                        f"{self.config.workers} workers registered"
                    )
                for key, _events in sel.select(timeout=0.25):
                    if key.data is None:
                        try:
                            conn, _addr = self._listener.accept()
                        except (BlockingIOError, OSError):
                            continue
                        conn.setblocking(True)
                        try:
                            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                        except OSError:
                            pass
                        pending[conn] = wire.FrameParser()
                        sel.register(conn, selectors.EVENT_READ, conn)
                        continue
                    conn = key.data
                    parser = pending.get(conn)
                    if parser is None:
                        continue
                    try:
                        data = conn.recv(1 << 16)
                    except OSError:
                        data = b""
                    frame = None
                    bad = not data
                    if data:
                        try:
                            parser.feed(data)
                            frame = next(iter(parser), None)
                        except ProtocolError:
                            bad = True
                    if frame is not None and frame[0] != wire.MSG_REGISTER:
                        bad = True
                    if bad:
                        sel.unregister(conn)
                        del pending[conn]
                        conn.close()
                        continue
                    if frame is None:
                        continue  # incomplete frame; keep waiting
                    sel.unregister(conn)
                    del pending[conn]
                    conn.sendall(wire.pack_ack(0))
                    self._add_channel(_Channel(conn))
        finally:
            for conn in pending:
                conn.close()
            sel.close()

    def shutdown(self):
        for ch in self._channels:
            if ch.alive:
                ch.send_shutdown()
        for ch in self._channels:
            self._drop_channel(ch)
        self._channels = []
        if self._listener is not None:
            self._listener.close()
            self._listener = None
        if self._selector is not None:
            self._selector.close()
            self._selector = None
        for proc in self._subprocs:
            try:
                proc.wait(timeout=10.0)
            except subprocess.TimeoutExpired:
                proc.kill()
        self._subprocs = []
        self._started = False

    # -- primitives ----------------------------------------------------------

    def _require_started(self):
        if not self._started:
            raise UsageError("engine not started")

    def _live_channels(self):
        return [ch for ch in self._channels if ch.alive]

    def submit_map(
        self,
        tasks: Sequence[TaskSpec],
        *,
        op: str = "map",
        scale: str | None = None,
        repeat: int = 0,
    ) -> list[TaskResult]:
        """Run every task exactly once; results come back in task-id order.

        Appends a :class:`BenchRecord` measuring first submission to
        last result, with ``bytes_shuffled`` equal to the summed result
        payload sizes (the gather volume of this map phase).
        """
        self._require_started()
        tasks = list(tasks)
        ids = [t.task_id for t in tasks]
        if len(set(ids)) != len(ids):
            raise UsageError("duplicate task ids in submission")
        budget = self.config.memory_budget
        for t in tasks:
            if len(t.payload) > budget:
                raise ResourceError(
                    f"task {t.task_id} payload ({len(t.payload)} bytes) exceeds "
                    f"worker memory budget ({budget} bytes)"
                )
        if not tasks:
            return []

        pending = deque(tasks)
        attempts: dict[int, int] = {}
        results: dict[int, TaskResult] = {}
        outstanding: dict[_Channel, TaskSpec] = {}

        channels = self._live_channels()
        if not channels:
            raise TrajanError("no live workers")

        def fail_task(spec: TaskSpec, why: str):
            nonlocal t_last
            n = attempts.get(spec.task_id, 0)
            if n < 1:
                attempts[spec.task_id] = n + 1
                pending.appendleft(spec)
            else:
                message = why.encode()
                results[spec.task_id] = TaskResult(
                    spec.task_id, "error", message, len(message), 0.0
                )
                t_last = time.perf_counter()

        def dispatch(ch: _Channel, spec: TaskSpec) -> bool:
            try:
                ch.send_task(spec.task_id, spec.kind, spec.payload)
            except OSError:
                self._drop_channel(ch)
                fail_task(spec, "worker died while dispatching")
                return False
            outstanding[ch] = spec
            return True

        t_first = time.perf_counter()
        t_last = t_first
        for ch in channels:
            if not pending:
                break
            dispatch(ch, pending.popleft())

        select = self._selector.select
        while len(results) < len(tasks):
            if not outstanding:
                live = self._live_channels()
                if not live:
                    while pending:
                        spec = pending.popleft()
                        msg = b"no live workers left"
                        results[spec.task_id] = TaskResult(
                            spec.task_id, "error", msg, len(msg), 0.0
                        )
                    t_last = time.perf_counter()
                    break
                for ch in live:
                    if not pending:
                        break
                    dispatch(ch, pending.popleft())
                continue
            for key, _events in select(timeout=None):
                ch = key.data
                if not ch.alive:
                    continue
                for msg in ch.drain():
                    tag = msg[0]
                    if tag == "r":
                        _, task_id, status, wall, output = msg
                        spec = outstanding.get(ch)
                        if spec is None or task_id != spec.task_id:
                            continue  # stale or unsolicited result
                        del outstanding[ch]
                        results[task_id] = TaskResult(
                            task_id,
                            "ok" if status == 0 else "error",
                            output,
                            len(output),
                            wall,
                        )
                        t_last = time.perf_counter()
                        if pending:
                            dispatch(ch, pending.popleft())
                    elif tag == "dead":
                        spec = outstanding.pop(ch, None)
                        self._drop_channel(ch)
                        if spec is not None and spec.task_id not in results:
                            fail_task(spec, f"worker lost: {msg[1]}")

        gathered = sum(r.payload_size for r in results.values())
        self.records.append(
            BenchRecord(
                op=op,
                scale=scale if scale is not None else f"tasks={len(tasks)}",
                workers=self.config.workers,
                repeat=repeat,
                wall_seconds=max(t_last - t_first, 1e-9),
                bytes_shuffled=gathered,
            )
        )
        return [results[tid] for tid in sorted(ids)]

    def broadcast(self, data: bytes, *, op: str = "broadcast") -> BroadcastHandle:
        """Replicate ``data`` to every live worker and await their acks."""
        self._require_started()
        if len(data) > self.config.memory_budget:
            raise ResourceError(
                f"broadcast of {len(data)} bytes exceeds worker memory budget "
                f"({self.config.memory_budget} bytes)"
            )
        channels = self._live_channels()
        if not channels:
            raise TrajanError("no live workers")
        handle_id = self._next_broadcast
        self._next_broadcast += 1
        t0 = time.perf_counter()
        awaiting = set()
        for ch in channels:
            try:
                ch.send_broadcast(handle_id, data)
                awaiting.add(ch)
            except OSError:
                self._drop_channel(ch)
        deadline = time.monotonic() + max(60.0, len(data) / 1e6)
        while awaiting:
            if time.monotonic() > deadline:
                raise TrajanError("broadcast timed out waiting for worker acks")
            for key, _events in self._selector.select(timeout=1.0):
                ch = key.data
                if ch not in awaiting:
                    continue
                for msg in ch.drain():
                    if msg[0] == "a" and msg[1] == handle_id:
                        awaiting.discard(ch)
                    elif msg[0] == "dead":
                        self._drop_channel(ch)
                        awaiting.discard(ch)
        wall = time.perf_counter() - t0
        self.records.append(
            BenchRecord(
                op=op,
                scale=f"bytes={len(data)}",
                workers=self.config.workers,
                repeat=0,
                wall_seconds=max(wall, 1e-9),
                bytes_shuffled=len(data),
            )
        )
        return BroadcastHandle(handle_id, len(data))

    @property
    def bytes_shuffled(self) -> int:
        """Total gathered map-output bytes across all submissions."""
        return sum(r.bytes_shuffled for r in self.records if r.op != "broadcast")


def submit_map(tasks: Sequence[TaskSpec], config: EngineConfig) -> list[TaskResult]:
    """One-shot map on a transient engine."""
    with Engine(config) as eng:
        return eng.submit_map(tasks)


def reduce(results: Iterable[TaskResult], combine: Callable[[bytes, bytes], bytes]) -> bytes:
    """Left-fold ``combine`` over result payloads in task-id order.

    The fold order is fixed so that a combine that is associative only
    up to float rounding still yields a deterministic value.
    """
    ordered = sorted(results, key=lambda r: r.task_id)
    if not ordered:
        raise UsageError("reduce of an empty result sequence")
    bad = [r for r in ordered if not r.ok]
    if bad:
        raise UsageError(
            f"reduce over failed results (first: task {bad[0].task_id}: "
            f"{bad[0].payload[:200]!r})"
        )
    acc = ordered[0].payload
    for r in ordered[1:]:
        acc = combine(acc, r.payload)
    return acc


def throughput_benchmark(
    n_tasks: int,
    config: EngineConfig | None = None,
    *,
    engine: Engine | None = None,
    repeat: int = 0,
) -> BenchRecord:
    """Zero-workload dispatch throughput.

    With ``engine`` (already started) this measures warm throughput:
    the window from first task submission to last result. With
    ``config`` it measures cold throughput including engine startup.
    """
    from .registry import KIND_NOOP

    if n_tasks < 1:
        raise UsageError("throughput benchmark needs n_tasks >= 1")
    tasks = [TaskSpec(i, KIND_NOOP) for i in range(n_tasks)]
    if engine is not None:
        engine.submit_map(tasks, op="throughput-warm", scale=str(n_tasks), repeat=repeat)
        return engine.records[-1]
    if config is None:
        raise UsageError("throughput_benchmark needs a config or a started engine")
    t0 = time.perf_counter()
    with Engine(config) as eng:
        eng.submit_map(tasks, op="throughput-cold", scale=str(n_tasks), repeat=repeat)
        wall = time.perf_counter() - t0
        return BenchRecord(
            op="throughput-cold",
            scale=str(n_tasks),
            workers=config.workers,
            repeat=repeat,
            wall_seconds=wall,
            bytes_shuffled=eng.records[-1].bytes_shuffled,
        )
