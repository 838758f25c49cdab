"""Framing for the multi-process backend's wire protocol.

Every frame is::

    magic "TPW1" (4 bytes) | message type (1 byte) | payload length
    (uint32 LE) | payload

Message types: 1=REGISTER, 2=TASK, 3=RESULT, 4=BROADCAST, 5=SHUTDOWN,
6=ACK.

TASK payload:   task id (8 bytes LE) | kind (1 byte) | input bytes
RESULT payload: task id (8 bytes LE) | status (1 byte: 0=ok, 1=error) |
                wall time (8-byte LE double, seconds) | output bytes
BROADCAST payload: handle id (8 bytes LE) | data
ACK payload:    acknowledged id (8 bytes LE; 0 for REGISTER acks)
"""

from __future__ import annotations

import struct

from ..errors import ProtocolError

MAGIC = b"TPW1"

MSG_REGISTER = 1
MSG_TASK = 2
MSG_RESULT = 3
MSG_BROADCAST = 4
MSG_SHUTDOWN = 5
MSG_ACK = 6

_VALID_TYPES = frozenset(
    (MSG_REGISTER, MSG_TASK, MSG_RESULT, MSG_BROADCAST, MSG_SHUTDOWN, MSG_ACK)
)

_HEADER = struct.Struct("<4sBI")
HEADER_SIZE = _HEADER.size  # 9

_TASK_HEAD = struct.Struct("<QB")
_RESULT_HEAD = struct.Struct("<QBd")
_U64 = struct.Struct("<Q")

#: refuse frames larger than this (protects against garbage length fields)
MAX_PAYLOAD = (1 << 31) - 1


def pack_frame(mtype: int, payload: bytes = b"") -> bytes:
    return _HEADER.pack(MAGIC, mtype, len(payload)) + payload


def pack_task(task_id: int, kind: int, input_bytes: bytes) -> bytes:
    return pack_frame(MSG_TASK, _TASK_HEAD.pack(task_id, kind) + input_bytes)


def unpack_task(payload: bytes) -> tuple[int, int, bytes]:
    if len(payload) < _TASK_HEAD.size:
        raise ProtocolError(f"TASK payload too short ({len(payload)} bytes)")
    task_id, kind = _TASK_HEAD.unpack_from(payload)
    return task_id, kind, payload[_TASK_HEAD.size:]


def pack_result(task_id: int, status: int, wall: float, output: bytes) -> bytes:
    return pack_frame(MSG_RESULT, _RESULT_HEAD.pack(task_id, status, wall) + output)


def unpack_result(payload: bytes) -> tuple[int, int, float, bytes]:
    if len(payload) < _RESULT_HEAD.size:
        raise ProtocolError(f"RESULT payload too short ({len(payload)} bytes)")
    task_id, status, wall = _RESULT_HEAD.unpack_from(payload)
    return task_id, status, wall, payload[_RESULT_HEAD.size:]


def pack_broadcast(handle_id: int, data: bytes) -> bytes:
    return pack_frame(MSG_BROADCAST, _U64.pack(handle_id) + data)


def unpack_broadcast(payload: bytes) -> tuple[int, bytes]:
    if len(payload) < _U64.size:
        raise ProtocolError(f"BROADCAST payload too short ({len(payload)} bytes)")
    return _U64.unpack_from(payload)[0], payload[_U64.size:]


def pack_ack(acked_id: int = 0) -> bytes:
    return pack_frame(MSG_ACK, _U64.pack(acked_id))


def unpack_ack(payload: bytes) -> int:
    if len(payload) < _U64.size:
        raise ProtocolError(f"ACK payload too short ({len(payload)} bytes)")
    return _U64.unpack_from(payload)[0]


class FrameParser:
    """Incremental parser: feed raw bytes, pop complete frames.

    Raises :class:`ProtocolError` as soon as the stream deviates from
    the format (wrong magic, unknown type, absurd length); after that
    the connection is unusable and should be dropped.
    """

    def __init__(self, max_payload: int = MAX_PAYLOAD):
        self._buf = bytearray()
        self._max = max_payload

    def feed(self, data: bytes) -> None:
        self._buf.extend(data)

    def __iter__(self):
        return self

    def __next__(self) -> tuple[int, bytes]:
        buf = self._buf
        if len(buf) < HEADER_SIZE:
            raise StopIteration
        magic, mtype, length = _HEADER.unpack_from(buf)
        if magic != MAGIC:
            raise ProtocolError(f"bad frame magic {bytes(magic)!r}")
        if mtype not in _VALID_TYPES:
            raise ProtocolError(f"unknown message type {mtype}")
        if length > self._max:
            raise ProtocolError(f"frame payload length {length} exceeds limit {self._max}")
        if len(buf) < HEADER_SIZE + length:
            raise StopIteration
        payload = bytes(buf[HEADER_SIZE:HEADER_SIZE + length])
        del buf[:HEADER_SIZE + length]
        return mtype, payload
