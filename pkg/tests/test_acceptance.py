"""End-to-end acceptance checks.

Each test exercises one advertised guarantee at its stated tolerance and
prints a single PASS/FAIL line (run with ``pytest -s`` to see them inline,
or execute this file directly).
"""

import threading
import time

import numpy as np
import pytest

from proud import messages as msg
from proud.backend import HEParams, make_backend
from proud.backend.ckks.encoding import decode_coeffs, encode_coeffs
from proud.backend.ckks.ntt import PrimeTables, ntt_forward, ntt_inverse
from proud.model import LinearLayer, reference_infer
from proud.model_io import make_mlp
from proud.packing import encode_matrix
from proud.permute import naive_matmul, permuted_matmul
from proud.protocol import (
    ClientSession,
    ServerSession,
    WeightCache,
    audit_transcript,
    extract_columns,
    matf,
    prepare_input_set,
    prepare_linear,
)
from proud.transport import MB, PHASES, loopback_pair


def _report(num, name, ok, detail=""):
    tail = f" ({detail})" if detail else ""
    print(f"[criterion {num}] {name}: {'PASS' if ok else 'FAIL'}{tail}")
    assert ok, f"criterion {num} {name} failed: {detail}"


def _paired_session(model, params, x, seed, cache=None, workers=1):
    ch_c, ch_s = loopback_pair()
    server = ServerSession(ch_s, model, cache=cache, workers=workers)
    errs = []

    def run():
        try:
            server.run()
        except Exception as e:
            errs.append(e)

    th = threading.Thread(target=run)
    th.start()
    res = ClientSession(ch_c, params, x, seed=seed).run()
    th.join()
    ch_c.close()
    ch_s.close()
    if errs:
        raise errs[0]
    return res, server


def test_criterion_1_permutation_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1001)
    worst = 0.0
    for n in range(1, 17):
        for _ in range(200):
            w = rng.uniform(-1, 1, (n, n))
            v = rng.uniform(-1, 1, (n, n))
            ref = naive_matmul(w, v)
            got = permuted_matmul(w, v)
            scale = max(np.abs(ref).max(), 1.0)
            worst = max(worst, np.abs(got - ref).max() / scale)
    exact = True
    for n in range(1, 17):
        wi = rng.integers(-8, 9, (n, n)).astype(np.float64)
        vi = rng.integers(-8, 9, (n, n)).astype(np.float64)
        exact &= bool(np.array_equal(permuted_matmul(wi, vi), naive_matmul(wi, vi)))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and exact and dt < 5.0
    _report(1, "permutation identity", ok, f"rel err {worst:.2e}, int exact {exact}, {dt:.2f}s")


def test_criterion_2_matf_both_backends():
    t0 = time.perf_counter()
    # clear scheme: exact on integer data for every order up to 64
    rng = np.random.default_rng(1002)
    clear = make_backend(HEParams.clear(slot_count=4096), seed=1)
    cpk, csk = clear.keygen()
    clear_exact = True
    for n in range(1, 65):
        w = rng.integers(-8, 9, (n, n)).astype(np.float64)
        b = rng.integers(-8, 9, n).astype(np.float64)
        v = rng.integers(-8, 9, n).astype(np.float64)
        prep = prepare_linear(clear, LinearLayer(w, b))
        out = matf(clear, prep, prepare_input_set(clear, cpk, [v], n))
        got = extract_columns(clear.decrypt(csk, out), n)[0]
        clear_exact &= bool(np.array_equal(got, w @ v + b))

    # encrypted scheme: 50 random instances, orders up to 32
    params = HEParams.ckks()
    be = make_backend(params, seed=2)
    pk, sk = be.keygen()
    worst = 0.0
    for i in range(50):
        n = int(rng.integers(1, 33))
        w = rng.uniform(-1, 1, (n, n))
        b = rng.uniform(-1, 1, n)
        v = rng.uniform(-1, 1, n)
        prep = prepare_linear(be, LinearLayer(w, b))
        out = matf(be, prep, prepare_input_set(be, pk, [v], n))
        got = extract_columns(be.decrypt(sk, out), n)[0]
        worst = max(worst, np.abs(got - (w @ v + b)).max())
    dt = time.perf_counter() - t0
    ok = clear_exact and worst <= 1e-3 and dt < 60.0
    _report(2, "encrypted linear layer", ok, f"clear exact {clear_exact}, max err {worst:.2e}, {dt:.1f}s")


def test_criterion_3_mlp_100_inputs():
    t0 = time.perf_counter()
    model = make_mlp([64, 16, 10], activation="relu", seed=2024)
    params = HEParams.ckks()
    rng = np.random.default_rng(1003)
    cache = WeightCache()
    hits = 0
    worst = 0.0
    for i in range(100):
        x = rng.uniform(-1, 1, 64)
        res, _ = _paired_session(model, params, x.reshape(1, -1), seed=3000 + i, cache=cache, workers=2)
        ref = reference_infer(model, x)
        logits = res.logits[0]
        worst = max(worst, np.abs(logits - ref).max())
        hits += int(np.argmax(logits) == np.argmax(ref))
    dt = time.perf_counter() - t0
    ok = hits >= 99 and worst < 1e-2
    _report(3, "relu MLP over encryption", ok, f"{hits}/100 argmax, logit dev {worst:.2e}, {dt:.0f}s")


def test_criterion_4_round_trip_count():
    model = make_mlp([16, 12, 12, 10], activation="relu", seed=1004)  # two activations
    params = HEParams.ckks()
    x = np.random.default_rng(1004).uniform(-1, 1, (1, 16))
    res, server = _paired_session(model, params, x, seed=4)
    m = model.activation_count
    t = res.transcript
    checks = {
        "rounds": res.rounds == m,
        "nlnf": t.count(msg.NLNF_REQ, "recv") == m,
        "uploads": t.count(msg.INPUT_SET, "sent") == m + 1,
        "result": t.count(msg.RESULT, "recv") == 1,
        "server view": server.transcript.count(msg.INPUT_SET, "recv") == m + 1
        and server.transcript.count(msg.NLNF_REQ, "sent") == m,
    }
    ok = all(checks.values())
    _report(4, "one round per activation", ok, f"m={m}, " + ", ".join(k for k, v in checks.items() if not v) if not ok else f"m={m}")


def test_criterion_5_transcript_hygiene():
    model = make_mlp([16, 10], seed=1005)
    params = HEParams.ckks()
    x = np.random.default_rng(1005).uniform(-1, 1, (1, 16))
    res, server = _paired_session(model, params, x, seed=5)
    vc = audit_transcript(res.transcript, "client")
    vs = audit_transcript(server.transcript, "server")
    ok = vc == [] and vs == []
    _report(5, "wire hygiene audit", ok, f"{len(vc) + len(vs)} violations")


def test_criterion_6_batching():
    d = 16
    model = make_mlp([16, 16, 10], activation="relu", seed=1006)
    params = HEParams.ckks()
    rng = np.random.default_rng(1006)
    counts = {}
    per_matrix = {}
    refs = {}
    for g in (1, 2, 4):
        xs = rng.uniform(-1, 1, (g, 16))
        res, server = _paired_session(model, params, xs, seed=60 + g)
        counts[g] = res.client_op_counts["encrypt"]
        linears = sum(1 for e in model.describe() if e[0] == "linear")
        per_matrix[g] = server.backend.op_counts["mul_pt"] / linears / g
        refs[g] = np.array([reference_infer(model, x) for x in xs])
        assert np.abs(res.logits - refs[g]).max() < 1e-2
    # ciphertext count for g inputs in one batch == count for one input
    reduction_ok = all(counts[g] == counts[1] for g in (2, 4))
    pred_ok = all(abs(per_matrix[g] - d / g) / (d / g) <= 0.10 for g in (1, 2, 4))
    ok = reduction_ok and pred_ok
    _report(
        6,
        "slot batching",
        ok,
        f"ct counts {counts}, mul/matrix {per_matrix} vs d/g {[d // g for g in (1, 2, 4)]}",
    )


def test_criterion_7_numeric_kernels():
    t0 = time.perf_counter()
    params = HEParams.ckks()
    rng = np.random.default_rng(1007)

    # transform round trip, both chain primes: 2 * 8192 elements > 1e4
    bit_exact = True
    for q in params.moduli:
        t = PrimeTables(q, params.ring_dim)
        a = rng.integers(0, q, params.ring_dim, dtype=np.uint64)
        b = a.copy()
        ntt_forward(b, t)
        ntt_inverse(b, t)
        bit_exact &= bool(np.array_equal(a, b))

    # canonical embedding at the small scale
    v = rng.uniform(-1, 1, params.slot_count)
    back = decode_coeffs(encode_coeffs(v, 2.0**30, params.ring_dim), 2.0**30, params.ring_dim)
    enc_rel = np.abs(back - v).max() / np.abs(v).max()

    # one plaintext multiply with its rescale
    be = make_backend(params, seed=7)
    pk, sk = be.keygen()
    a8 = rng.uniform(-1, 1, (8, 8))
    w8 = rng.uniform(-1, 1, (8, 8))
    ct = be.mul_pt(be.encrypt(pk, encode_matrix(a8, params.slot_count)), encode_matrix(w8, params.slot_count))
    mul_err = np.abs(be.decrypt(sk, ct).slots[:64].reshape(8, 8) - a8 * w8).max()

    dt = time.perf_counter() - t0
    ok = bit_exact and enc_rel < 2.0**-20 and mul_err < 1e-4 and dt < 60.0
    _report(
        7,
        "kernel accuracy",
        ok,
        f"ntt exact {bit_exact}, encode rel {enc_rel:.2e}, mul err {mul_err:.2e}, {dt:.1f}s",
    )


def test_criterion_8_phase_report():
    model = make_mlp([16, 10], seed=1008)
    params = HEParams.ckks()
    x = np.random.default_rng(1008).uniform(-1, 1, (1, 16))

    runs = []
    for _ in range(2):
        res, _ = _paired_session(model, params, x, seed=8)
        runs.append(res)

    rows = runs[0].report
    phase_ok = [r.phase for r in rows] == list(PHASES) + ["Total"]
    total = rows[-1]
    wire_bytes = runs[0].transcript.total_bytes()
    exact_ok = total.comm_bytes == wire_bytes and total.comm_mb == wire_bytes / MB
    sum_ok = total.comm_bytes == sum(r.comm_bytes for r in rows[:-1])
    comm_cols = [[(r.phase, r.comm_mb) for r in run.report] for run in runs]
    det_ok = comm_cols[0] == comm_cols[1]
    ok = phase_ok and exact_ok and sum_ok and det_ok
    _report(
        8,
        "phase/latency/comm report",
        ok,
        f"total {total.comm_mb:.3f} MB, deterministic {det_ok}",
    )


if __name__ == "__main__":
    for fn in [
        test_criterion_1_permutation_identity,
        test_criterion_2_matf_both_backends,
        test_criterion_3_mlp_100_inputs,
        test_criterion_4_round_trip_count,
        test_criterion_5_transcript_hygiene,
        test_criterion_6_batching,
        test_criterion_7_numeric_kernels,
        test_criterion_8_phase_report,
    ]:
        fn()
