"""Worker-side execution loop, shared by both backends.

A worker is a process that answers TPW1 frames on a stream socket:
TASK frames run a registered handler and produce a RESULT frame;
BROADCAST frames store data for later tasks and produce an ACK;
SHUTDOWN ends the loop. Forked in-process workers get their socket from
the engine (one end of a socketpair); wire workers
(:func:`worker_serve`) dial the scheduler over TCP and REGISTER first.
"""

from __future__ import annotations

import socket
import sys
import time

from ..errors import ProtocolError, TrajanError
from . import wire
from .registry import REGISTRY

_RECV_CHUNK = 1 << 18


class WorkerContext:
    """Per-worker state visible to task handlers."""

    def __init__(self, memory_budget: int):
        self.memory_budget = memory_budget
        self._broadcasts: dict[int, bytes] = {}

    def store_broadcast(self, handle_id: int, data: bytes) -> None:
        self._broadcasts[handle_id] = data

    def broadcast_bytes(self, handle_id: int) -> bytes:
        try:
            return self._broadcasts[handle_id]
        except KeyError:
            raise TrajanError(f"broadcast handle {handle_id} not present on this worker")


def execute_task(kind: int, payload: bytes, ctx: WorkerContext) -> tuple[int, float, bytes]:
    """Run one task; never raises. Returns (status, wall_seconds, output)."""
    t0 = time.perf_counter()
    try:
        fn = REGISTRY.get(kind)
        if fn is None:
            raise TrajanError(f"unknown task kind {kind}")
        out = fn(payload, ctx)
        status, output = 0, (out if out is not None else b"")
    except Exception as exc:
        status, output = 1, f"{type(exc).__name__}: {exc}".encode()
    wall = time.perf_counter() - t0
    return status, wall, output


def serve_connection(sock: socket.socket, ctx: WorkerContext) -> int:
    """Answer frames until SHUTDOWN or EOF (returns 0) or a protocol
    violation (drops the connection, returns 1)."""
    parser = wire.FrameParser()
    rbuf = bytearray(_RECV_CHUNK)
    view = memoryview(rbuf)
    try:
        while True:
            try:
                n = sock.recv_into(view)
            except OSError:
                return 0
            if n == 0:
                return 0
            parser.feed(view[:n])
            for mtype, payload in parser:
                if mtype == wire.MSG_TASK:
                    task_id, kind, input_bytes = wire.unpack_task(payload)
                    status, wall, output = execute_task(kind, input_bytes, ctx)
                    sock.sendall(wire.pack_result(task_id, status, wall, output))
                elif mtype == wire.MSG_BROADCAST:
                    handle_id, blob = wire.unpack_broadcast(payload)
                    ctx.store_broadcast(handle_id, blob)
                    sock.sendall(wire.pack_ack(handle_id))
                elif mtype == wire.MSG_ACK:
                    pass  # registration acknowledged
                elif mtype == wire.MSG_SHUTDOWN:
                    return 0
                else:
                    raise ProtocolError(f"unexpected message type {mtype} on a worker")
    except OSError:
        return 0  # scheduler went away mid-reply
    except ProtocolError as exc:
        print(f"trajan worker: protocol violation, dropping connection: {exc}",
              file=sys.stderr)
        return 1
    finally:
        try:
            sock.close()
        except OSError:
            pass


def fork_worker_main(sock: socket.socket, memory_budget: int) -> None:
    """Entry point of an engine-forked in-process worker."""
    serve_connection(sock, WorkerContext(memory_budget))


def parse_address(address: str) -> tuple[str, int]:
    host, sep, port = address.rpartition(":")
    if not sep or not port.isdigit():
        raise TrajanError(f"bad address {address!r}, expected HOST:PORT")
    return host or "127.0.0.1", int(port)


def worker_serve(
    address: str,
    memory_budget: int = 1 << 30,
    connect_timeout: float = 10.0,
) -> int:
    """Serve tasks for a wire-protocol scheduler; returns an exit code.

    Dials the scheduler at ``address`` (retrying briefly so workers can
    be launched before the scheduler binds), registers, then serves
    until SHUTDOWN (exit 0), EOF (exit 0), or a protocol violation
    (exit 1, cause on stderr).
    """
    host, port = parse_address(address)
    deadline = time.monotonic() + connect_timeout
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=connect_timeout)
            break
        except OSError as exc:
            if time.monotonic() >= deadline:
                print(f"trajan worker: cannot reach scheduler at {address}: {exc}",
                      file=sys.stderr)
                return 1
            time.sleep(0.05)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    try:
        sock.sendall(wire.pack_frame(wire.MSG_REGISTER))
    except OSError:
        sock.close()
        return 1
    return serve_connection(sock, WorkerContext(memory_budget))
