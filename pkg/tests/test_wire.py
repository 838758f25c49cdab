"""Wire-protocol conformance, worker lifecycle, and fuzz robustness."""

import socket
import struct
import subprocess
import sys
import threading
import time

import pytest

from trajan.engine import (
    BACKEND_MULTI_PROCESS,
    Engine,
    EngineConfig,
    KIND_ECHO,
    KIND_NOOP,
    TaskSpec,
    WorkerContext,
)
from trajan.engine import wire
from trajan.engine.worker import serve_connection
from trajan.errors import ProtocolError


class TestFraming:
    def test_frame_layout(self):
        frame = wire.pack_frame(wire.MSG_TASK, b"abc")
        assert frame[:4] == b"TPW1"
        assert frame[4] == 2
        assert struct.unpack("<I", frame[5:9])[0] == 3
        assert frame[9:] == b"abc"

    def test_task_payload_layout(self):
        frame = wire.pack_task(0x1122334455667788, 7, b"IN")
        payload = frame[9:]
        assert payload[:8] == (0x1122334455667788).to_bytes(8, "little")
        assert payload[8] == 7
        assert payload[9:] == b"IN"
        assert wire.unpack_task(payload) == (0x1122334455667788, 7, b"IN")

    def test_result_payload_layout(self):
        frame = wire.pack_result(5, 1, 0.25, b"OUT")
        payload = frame[9:]
        tid, status, wall, out = wire.unpack_result(payload)
        assert (tid, status, wall, out) == (5, 1, 0.25, b"OUT")
        assert payload[8] == 1
        assert struct.unpack("<d", payload[9:17])[0] == 0.25

    def test_parser_incremental_byte_by_byte(self):
        frames = (
            wire.pack_task(1, 0, b"")
            + wire.pack_result(2, 0, 0.5, b"xyz")
            + wire.pack_frame(wire.MSG_SHUTDOWN)
        )
        parser = wire.FrameParser()
        seen = []
        for i in range(len(frames)):
            parser.feed(frames[i:i + 1])
            seen.extend(parser)
        assert [m for m, _ in seen] == [wire.MSG_TASK, wire.MSG_RESULT, wire.MSG_SHUTDOWN]

    def test_parser_bad_magic(self):
        parser = wire.FrameParser()
        parser.feed(b"XXXX" + bytes(5))
        with pytest.raises(ProtocolError, match="magic"):
            next(iter(parser))

    def test_parser_unknown_type(self):
        parser = wire.FrameParser()
        parser.feed(b"TPW1" + bytes([99]) + struct.pack("<I", 0))
        with pytest.raises(ProtocolError, match="type"):
            next(iter(parser))

    def test_parser_absurd_length(self):
        parser = wire.FrameParser(max_payload=1024)
        parser.feed(b"TPW1" + bytes([2]) + struct.pack("<I", 1 << 30))
        with pytest.raises(ProtocolError, match="length"):
            next(iter(parser))


def _spawn_worker(address):
    return subprocess.Popen(
        [sys.executable, "-m", "trajan", "worker", "--connect", address],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
    )


def _accept_registered_worker(listener):
    conn, _ = listener.accept()
    parser = wire.FrameParser()
    while True:
        data = conn.recv(65536)
        assert data, "worker closed before registering"
        parser.feed(data)
        frame = next(iter(parser), None)
        if frame is not None:
            break
    assert frame[0] == wire.MSG_REGISTER
    conn.sendall(wire.pack_ack(0))
    return conn, parser


def _read_frames(conn, parser, count, timeout=30.0):
    frames = []
    conn.settimeout(timeout)
    while len(frames) < count:
        data = conn.recv(65536)
        if not data:
            break
        parser.feed(data)
        frames.extend(parser)
    return frames


class TestWorkerLifecycle:
    def test_register_task_shutdown_exit_zero(self):
        listener = socket.socket()
        listener.bind(("127.0.0.1", 0))
        listener.listen(1)
        addr = "%s:%d" % listener.getsockname()
        proc = _spawn_worker(addr)
        try:
            conn, parser = _accept_registered_worker(listener)
            conn.sendall(wire.pack_task(42, KIND_ECHO, b"ping"))
            frames = _read_frames(conn, parser, 1)
            assert frames[0][0] == wire.MSG_RESULT
            tid, status, wall, out = wire.unpack_result(frames[0][1])
            assert (tid, status, out) == (42, 0, b"ping")
            assert wall >= 0
            conn.sendall(wire.pack_frame(wire.MSG_SHUTDOWN))
            assert proc.wait(timeout=30) == 0
        finally:
            proc.kill()
            listener.close()

    def test_malformed_magic_drops_connection(self):
        listener = socket.socket()
        listener.bind(("127.0.0.1", 0))
        listener.listen(1)
        addr = "%s:%d" % listener.getsockname()
        proc = _spawn_worker(addr)
        try:
            conn, parser = _accept_registered_worker(listener)
            conn.sendall(b"NOPE" + bytes(20))
            out, err = proc.communicate(timeout=30)
            assert proc.returncode == 1
            assert b"protocol violation" in err
            assert b"Traceback" not in err
        finally:
            proc.kill()
            listener.close()


def _mutate(frame: bytes, rng) -> bytes:
    data = bytearray(frame)
    choice = rng.random()
    if choice < 0.4 or len(data) == 0:
        # flip bytes somewhere
        for _ in range(rng.integers(1, 4)):
            pos = int(rng.integers(0, len(data)))
            data[pos] ^= int(rng.integers(1, 256))
    elif choice < 0.7:
        # truncate
        data = data[: int(rng.integers(0, len(data)))]
    else:
        # splice garbage
        pos = int(rng.integers(0, len(data)))
        data[pos:pos] = bytes(rng.integers(0, 256, size=int(rng.integers(1, 16))).tolist())
    return bytes(data)


class TestFuzz:
    def test_worker_loop_survives_mutated_frames(self):
        """Mutated frames either behave as valid traffic or end the loop
        with a clean error; the serving loop never raises."""
        import numpy as np

        rng = np.random.default_rng(1234)
        valid = [
            wire.pack_task(7, KIND_NOOP, b""),
            wire.pack_task(8, KIND_ECHO, b"payload"),
            wire.pack_broadcast(3, b"data"),
            wire.pack_frame(wire.MSG_SHUTDOWN),
            wire.pack_ack(0),
        ]
        for trial in range(60):
            blob = b"".join(
                _mutate(valid[int(rng.integers(0, len(valid)))], rng)
                for _ in range(int(rng.integers(1, 4)))
            )
            a, b = socket.socketpair()
            ctx = WorkerContext(1 << 20)
            t = threading.Thread(target=serve_connection, args=(b, ctx), daemon=True)
            t.start()
            try:
                a.sendall(blob)
            except OSError:
                pass  # loop already dropped the connection
            a.close()
            t.join(timeout=30)
            assert not t.is_alive(), f"worker loop hung on trial {trial}"

    def test_scheduler_survives_garbage_registrations(self):
        """Garbage connections during startup are dropped; legitimate
        workers still register and the engine serves maps."""
        cfg = EngineConfig(
            backend=BACKEND_MULTI_PROCESS, workers=2, spawn_workers=False,
            listen="127.0.0.1:0", start_timeout=60.0,
        )
        engine = Engine(cfg)
        errors = []

        def start_engine():
            try:
                engine.start()
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        thread = threading.Thread(target=start_engine, daemon=True)
        thread.start()
        deadline = time.monotonic() + 30
        while not hasattr(engine, "address"):
            assert time.monotonic() < deadline
            time.sleep(0.01)
        addr = engine.address
        host, port = addr.rsplit(":", 1)

        # garbage connections first
        import numpy as np

        rng = np.random.default_rng(7)
        for _ in range(6):
            s = socket.create_connection((host, int(port)))
            s.sendall(bytes(rng.integers(0, 256, size=40).tolist()))
            s.close()
        # then real workers
        procs = [_spawn_worker(addr) for _ in range(2)]
        thread.join(timeout=60)
        assert not thread.is_alive() and not errors
        try:
            results = engine.submit_map([TaskSpec(i, KIND_NOOP) for i in range(20)])
            assert all(r.ok for r in results)
        finally:
            engine.shutdown()
            for p in procs:
                p.wait(timeout=30)

    def test_scheduler_drops_misbehaving_worker_and_retries(self):
        """A registered worker that sends garbage instead of a RESULT is
        dropped; its task is retried on a healthy worker."""
        cfg = EngineConfig(
            backend=BACKEND_MULTI_PROCESS, workers=2, spawn_workers=False,
            listen="127.0.0.1:0", start_timeout=60.0,
        )
        engine = Engine(cfg)
        thread = threading.Thread(target=engine.start, daemon=True)
        thread.start()
        while not hasattr(engine, "address"):
            time.sleep(0.01)
        host, port = engine.address.rsplit(":", 1)

        # fake worker: registers properly, then answers everything with noise
        fake = socket.create_connection((host, int(port)))
        fake.sendall(wire.pack_frame(wire.MSG_REGISTER))

        proc = _spawn_worker(engine.address)
        thread.join(timeout=60)
        assert not thread.is_alive()

        def fake_worker_babble():
            try:
                fake.recv(65536)  # its ACK or first task
                fake.sendall(b"\xde\xad\xbe\xef" * 8)
                fake.recv(65536)
            except OSError:
                pass

        babble = threading.Thread(target=fake_worker_babble, daemon=True)
        babble.start()
        try:
            results = engine.submit_map([TaskSpec(i, KIND_NOOP) for i in range(12)])
            assert all(r.ok for r in results), [
                (r.task_id, r.payload) for r in results if not r.ok
            ]
        finally:
            engine.shutdown()
            fake.close()
            proc.wait(timeout=30)
