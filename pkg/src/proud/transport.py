"""Framed byte transport, traffic metering, and the phase report.

Frame format (little-endian):

    length u32 | version u8 | kind u8 | payload

where length counts everything after itself (payload size + 2).  The same
channel code runs over TCP sockets and in-process socketpairs, so loopback
tests exercise the real read/write paths.
"""

from __future__ import annotations

import socket
import struct
import time
from dataclasses import dataclass

from .errors import FrameError, IncompleteSessionError, TransportError

FRAME_VERSION = 1
FRAME_OVERHEAD = 6  # length field + version + kind
MAX_PAYLOAD = 1 << 28  # 256 MiB sanity bound

_LEN = struct.Struct("<I")

MB = float(1 << 20)

PHASES = (
    "client_encode_encrypt",
    "server_set_model",
    "server_dnn_computation",
    "client_decrypt_decode",
)


def pack_frame(kind: int, payload: bytes) -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise FrameError(f"payload of {len(payload)} bytes exceeds frame limit")
    return _LEN.pack(len(payload) + 2) + bytes([FRAME_VERSION, kind & 0xFF]) + payload


class Channel:
    """Duplex framed stream over a connected socket, with byte counters."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self.sent_bytes = 0
        self.recv_bytes = 0

    def send_frame(self, kind: int, payload: bytes) -> int:
        frame = pack_frame(kind, payload)
        try:
            self._sock.sendall(frame)
        except OSError as e:
            raise TransportError(f"send failed: {e}") from e
        self.sent_bytes += len(frame)
        return len(frame)

    def _recv_exact(self, n: int) -> bytes:
        chunks = []
        got = 0
        while got < n:
            try:
                chunk = self._sock.recv(min(n - got, 1 << 20))
            except OSError as e:
                raise TransportError(f"recv failed: {e}") from e
            if not chunk:
                raise TransportError("connection closed mid-frame" if chunks or got else "connection closed")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def recv_frame(self) -> tuple[int, bytes, int]:
        """Returns (kind, payload, total frame bytes including header)."""
        head = self._recv_exact(4)
        (length,) = _LEN.unpack(head)
        if length < 2:
            raise FrameError(f"frame length {length} too small")
        if length - 2 > MAX_PAYLOAD:
            raise FrameError(f"frame length {length} exceeds limit")
        body = self._recv_exact(length)
        if body[0] != FRAME_VERSION:
            raise FrameError(f"unsupported frame version {body[0]}")
        kind = body[1]
        payload = body[2:]
        self.recv_bytes += 4 + length
        return kind, payload, 4 + length

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass


def loopback_pair() -> tuple[Channel, Channel]:
    """Two connected channels in this process; same code paths as TCP."""
    a, b = socket.socketpair()
    return Channel(a), Channel(b)


def connect(host: str, port: int, timeout: float = 10.0) -> Channel:
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
        sock.settimeout(None)
    except OSError as e:
        raise TransportError(f"cannot connect to {host}:{port}: {e}") from e
    return Channel(sock)


def open_listener(host: str, port: int, backlog: int = 16) -> socket.socket:
    try:
        srv = socket.create_server((host, port), backlog=backlog, reuse_port=False)
    except OSError as e:
        raise TransportError(f"cannot listen on {host}:{port}: {e}") from e
    return srv


# -- phase accounting --------------------------------------------------


class PhaseRecorder:
    """Wall-clock and traffic attribution over the four protocol phases.

    Phases need not be contiguous: re-entering a phase resumes its
    accumulators.  Bytes are attributed to whichever phase is active when
    the frame crosses the channel.
    """

    def __init__(self):
        self._lat = {p: 0.0 for p in PHASES}
        self._sent = {p: 0 for p in PHASES}
        self._recv = {p: 0 for p in PHASES}
        self._current = None
        self._mark = None
        self.finished = False

    def enter(self, phase: str):
        now = time.perf_counter()
        if phase not in self._lat:
            raise ValueError(f"unknown phase {phase!r}")
        if self._current is not None:
            self._lat[self._current] += now - self._mark
        self._current = phase
        self._mark = now

    def finish(self):
        if self._current is not None:
            self._lat[self._current] += time.perf_counter() - self._mark
            self._current = None
        self.finished = True

    def on_sent(self, nbytes: int):
        if self._current is not None:
            self._sent[self._current] += nbytes

    def on_recv(self, nbytes: int):
        if self._current is not None:
            self._recv[self._current] += nbytes

    def snapshot(self, phase: str) -> tuple[float, int, int]:
        return self._lat[phase], self._sent[phase], self._recv[phase]


@dataclass
class PhaseReport:
    phase: str
    latency_ms: float
    sent_bytes: int
    recv_bytes: int

    @property
    def comm_bytes(self) -> int:
        return self.sent_bytes + self.recv_bytes

    @property
    def comm_mb(self) -> float:
        return self.comm_bytes / MB


def build_report(rec: PhaseRecorder) -> list[PhaseReport]:
    """Four phase rows plus a Total row; errors if the session is unfinished."""
    if not rec.finished:
        raise IncompleteSessionError("session did not reach its final phase")
    rows = []
    for p in PHASES:
        lat, sent, recv = rec.snapshot(p)
        rows.append(PhaseReport(p, lat * 1e3, sent, recv))
    rows.append(
        PhaseReport(
            "Total",
            sum(r.latency_ms for r in rows),
            sum(r.sent_bytes for r in rows),
            sum(r.recv_bytes for r in rows),
        )
    )
    return rows


def format_report(rows: list[PhaseReport]) -> str:
    width = max(len(r.phase) for r in rows)
    lines = [f"{'phase':<{width}}  {'latency_ms':>12}  {'comm_mb':>10}"]
    for r in rows:
        lines.append(f"{r.phase:<{width}}  {r.latency_ms:>12.3f}  {r.comm_mb:>10.6f}")
    return "\n".join(lines)


def report_csv(rows: list[PhaseReport]) -> str:
    lines = ["phase,latency_ms,comm_mb"]
    for r in rows:
        lines.append(f"{r.phase},{r.latency_ms:.3f},{r.comm_mb:.6f}")
    return "\n".join(lines) + "\n"
