"""Task-kind registry: maps the wire-level kind tag to a handler.

Handlers run on workers with the signature ``fn(payload: bytes, ctx) ->
bytes | None`` where ``ctx`` is the worker's :class:`WorkerContext`
(gives access to broadcast data). Handlers must be registered at import
time by module-level code so that freshly started worker processes see
them after ``import trajan``.
"""

from __future__ import annotations

import os
import struct
import time
from typing import Callable

# Built-in kinds (engine self-test / benchmarking)
KIND_NOOP = 0
KIND_ECHO = 1
KIND_SLEEP = 2
KIND_CRASH = 3
KIND_PID = 4
KIND_FETCH_BROADCAST = 5

# Analysis kinds (registered by trajan.psa / trajan.leaflet)
KIND_PSA_BLOCK = 16
KIND_LF_EDGES_BCAST = 17
KIND_LF_EDGES_BLOCK = 18
KIND_LF_PARTIAL_CC = 19
KIND_LF_TREE_PARTIAL_CC = 20
KIND_LF_TREE_SHARED = 21

REGISTRY: dict[int, Callable] = {}


def register(kind: int):
    def wrap(fn):
        REGISTRY[kind] = fn
        return fn
    return wrap


@register(KIND_NOOP)
def _noop(payload: bytes, ctx) -> bytes:
    return b""


@register(KIND_ECHO)
def _echo(payload: bytes, ctx) -> bytes:
    return payload


@register(KIND_SLEEP)
def _sleep(payload: bytes, ctx) -> bytes:
    (seconds,) = struct.unpack("<d", payload)
    time.sleep(seconds)
    return b""


@register(KIND_CRASH)
def _crash(payload: bytes, ctx) -> bytes:
    # hard worker death, bypassing all error handling (exercises the
    # scheduler's retry-then-report path)
    os._exit(17)


@register(KIND_PID)
def _pid(payload: bytes, ctx) -> bytes:
    # identifies the executing worker (load-distribution checks)
    return struct.pack("<Q", os.getpid())


@register(KIND_FETCH_BROADCAST)
def _fetch_broadcast(payload: bytes, ctx) -> bytes:
    # round-trips broadcast data back to the driver (resolution checks)
    (handle_id,) = struct.unpack("<Q", payload)
    return ctx.broadcast_bytes(handle_id)
