import socket
import struct
import threading
import time

import numpy as np
import pytest

from proud.backend import HEParams
from proud.errors import FrameError, IncompleteSessionError, TransportError
from proud.model_io import make_mlp
from proud.protocol import ClientSession, ServerSession, run_inference
from proud.transport import (
    MB,
    PHASES,
    Channel,
    PhaseRecorder,
    build_report,
    connect,
    format_report,
    loopback_pair,
    open_listener,
    pack_frame,
    report_csv,
)


def test_frame_layout():
    f = pack_frame(3, b"hello")
    # u32 little-endian length counts version + kind + payload
    assert struct.unpack("<I", f[:4])[0] == len(b"hello") + 2
    assert f[4] == 1  # frame version
    assert f[5] == 3
    assert f[6:] == b"hello"
    assert len(f) == 4 + 2 + 5


def test_empty_payload_frame():
    f = pack_frame(9, b"")
    assert struct.unpack("<I", f[:4])[0] == 2
    assert len(f) == 6


def test_loopback_roundtrip_and_counters():
    a, b = loopback_pair()
    n = a.send_frame(4, b"abc")
    kind, payload, m = b.recv_frame()
    assert (kind, payload) == (4, b"abc")
    assert n == m == 9
    assert a.sent_bytes == 9
    assert b.recv_bytes == 9
    a.close()
    b.close()


def test_large_frame_over_tcp():
    srv = open_listener("127.0.0.1", 0)
    port = srv.getsockname()[1]
    blob = np.random.default_rng(1).integers(0, 256, 10 * 1 << 20, dtype=np.uint8).tobytes()
    got = {}

    def serve():
        sock, _ = srv.accept()
        ch = Channel(sock)
        got["frame"] = ch.recv_frame()
        ch.close()

    th = threading.Thread(target=serve)
    th.start()
    ch = connect("127.0.0.1", port)
    ch.send_frame(5, blob)
    th.join()
    srv.close()
    ch.close()
    kind, payload, nbytes = got["frame"]
    assert kind == 5
    assert payload == blob
    assert nbytes == len(blob) + 6


def test_eof_mid_frame():
    a, b = loopback_pair()
    a._sock.sendall(struct.pack("<I", 100) + b"\x01\x02partial")
    a.close()
    with pytest.raises(TransportError):
        b.recv_frame()
    b.close()


def test_bad_version_rejected():
    a, b = loopback_pair()
    a._sock.sendall(struct.pack("<I", 3) + bytes([9, 1, 0]))
    with pytest.raises(FrameError):
        b.recv_frame()
    a.close()
    b.close()


def test_oversize_length_rejected():
    a, b = loopback_pair()
    a._sock.sendall(struct.pack("<I", (1 << 28) + 100))
    with pytest.raises(FrameError):
        b.recv_frame()
    a.close()
    b.close()


def test_recorder_phases():
    rec = PhaseRecorder()
    rec.enter(PHASES[0])
    rec.on_sent(100)
    time.sleep(0.01)
    rec.enter(PHASES[1])
    rec.on_recv(50)
    rec.enter(PHASES[0])  # phases can be re-entered; totals accumulate
    rec.on_sent(10)
    rec.enter(PHASES[2])
    rec.enter(PHASES[3])
    rec.finish()
    lat0, sent0, recv0 = rec.snapshot(PHASES[0])
    assert sent0 == 110 and recv0 == 0
    _, sent1, recv1 = rec.snapshot(PHASES[1])
    assert sent1 == 0 and recv1 == 50
    assert lat0 > 0


def test_report_requires_finish():
    rec = PhaseRecorder()
    rec.enter(PHASES[0])
    with pytest.raises(IncompleteSessionError):
        build_report(rec)


def test_report_rows_and_total():
    rec = PhaseRecorder()
    for ph in PHASES:
        rec.enter(ph)
        rec.on_sent(1000)
        rec.on_recv(48576)
    rec.finish()
    rows = build_report(rec)
    assert [r.phase for r in rows] == list(PHASES) + ["Total"]
    total = rows[-1]
    assert total.comm_bytes == 4 * 49576
    assert total.comm_mb == pytest.approx(4 * 49576 / MB)
    assert total.latency_ms == pytest.approx(sum(r.latency_ms for r in rows[:-1]))


def test_csv_format():
    rec = PhaseRecorder()
    for ph in PHASES:
        rec.enter(ph)
        rec.on_sent(1 << 19)  # half a MiB
    rec.finish()
    text = report_csv(build_report(rec))
    lines = text.strip().split("\n")
    assert lines[0] == "phase,latency_ms,comm_mb"
    assert len(lines) == 6
    assert lines[1].startswith("client_encode_encrypt,")
    assert lines[-1].startswith("Total,")
    assert lines[1].endswith(",0.500000")
    table = format_report(build_report(rec))
    assert "Total" in table and "comm_mb" in table


def _run_session(client_ch, server_ch, model, params, x, seed):
    srv = ServerSession(server_ch, model)
    th = threading.Thread(target=srv.run)
    th.start()
    res = ClientSession(client_ch, params, x, seed=seed).run()
    th.join()
    client_ch.close()
    server_ch.close()
    return res, srv


def test_loopback_and_tcp_transcripts_identical():
    """Same seeded session over socketpair and real TCP: byte-identical wire."""
    model = make_mlp([6, 5, 4], seed=9)
    params = HEParams.clear(slot_count=36)
    x = np.random.default_rng(10).uniform(-1, 1, (1, 6))

    a, b = loopback_pair()
    res_loop, srv_loop = _run_session(a, b, model, params, x, seed=42)

    lst = open_listener("127.0.0.1", 0)
    port = lst.getsockname()[1]
    holder = {}

    def accept():
        sock, _ = lst.accept()
        holder["ch"] = Channel(sock)

    th = threading.Thread(target=accept)
    th.start()
    cl = connect("127.0.0.1", port)
    th.join()
    res_tcp, srv_tcp = _run_session(cl, holder["ch"], model, params, x, seed=42)
    lst.close()

    assert res_loop.transcript.wire_signature() == res_tcp.transcript.wire_signature()
    assert srv_loop.transcript.wire_signature() == srv_tcp.transcript.wire_signature()
    assert np.array_equal(res_loop.logits, res_tcp.logits)


def test_upload_mb_matches_input_set_frames():
    from proud import messages as msg

    model = make_mlp([8, 6, 4], seed=11)
    res = run_inference(
        model,
        np.random.default_rng(12).uniform(-1, 1, 8),
        HEParams.clear(slot_count=64),
        seed=13,
    )
    sent_sets = [
        e.nbytes
        for e in res.transcript.entries
        if e.direction == "sent" and e.kind == msg.INPUT_SET
    ]
    # all ciphertext upload happens in INPUT_SET frames
    upload = sum(r.comm_bytes for r in res.report if r.phase != "Total")
    hello = [
        e.nbytes
        for e in res.transcript.entries
        if e.direction == "sent" and e.kind == msg.HELLO
    ]
    recv_total = sum(e.nbytes for e in res.transcript.entries if e.direction == "recv")
    assert upload == sum(sent_sets) + sum(hello) + recv_total
    assert sum(sent_sets) / MB == sum(sent_sets) / float(1 << 20)
