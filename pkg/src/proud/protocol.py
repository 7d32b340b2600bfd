"""Two-party inference sessions over a framed channel.

Roles: the client owns the input and the only secret key; the server owns
the model.  Linear layers are evaluated by the server directly on packed
ciphertexts using the shifted-product identity (one plaintext multiply per
shift, then ciphertext adds, then the bias).  Each activation costs one
interactive round: the server returns the current ciphertext, the client
decrypts, applies the activation exactly, and re-encrypts fresh for the
next layer.  Consequently ciphertexts never need more than one level of
multiplicative depth, and the server never sees anything but ciphertexts
and public material.

Both roles keep an append-only transcript of every frame (direction, kind,
traffic class, size); `audit_transcript` checks the hygiene rules over it.
"""

from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import messages as msg
from .backend import Ciphertext, HEParams, make_backend
from .errors import (
    CapacityError,
    DimensionError,
    FingerprintError,
    FrameError,
    LayoutError,
    LevelError,
    ParamsError,
    ProtocolError,
    ProudError,
    SessionAborted,
    TransportError,
)
from .model import LinearLayer, ModelSpec, apply_activation
from .packing import PackedPlaintext, decode_batch, encode_batch
from .permute import permut_weights, tau
from .transport import PhaseRecorder, build_report

log = logging.getLogger("proud.protocol")


# -- square embeddings -------------------------------------------------


def pad_to_square(weights: np.ndarray, v: np.ndarray):
    """Embed a (rows, cols) map and a length-cols vector into order
    max(rows, cols): weights top-left, vector in column 0.  The top `rows`
    entries of column 0 of w_sq @ v_sq equal weights @ v.
    """
    w = np.asarray(weights, dtype=np.float64)
    rows, cols = w.shape
    n = max(rows, cols)
    w_sq = np.zeros((n, n))
    w_sq[:rows, :cols] = w
    return w_sq, embed_vector(v, n)


def _square_layer(layer: LinearLayer):
    """Weights and bias of a linear layer as order-n squares (bias in
    column 0).  Returns (w_sq, b_sq, n)."""
    rows, cols = layer.rows, layer.cols
    n = max(rows, cols)
    w_sq = np.zeros((n, n))
    w_sq[:rows, :cols] = layer.weights
    b_sq = np.zeros((n, n))
    b_sq[:rows, 0] = layer.bias
    return w_sq, b_sq, n


def embed_vector(v: np.ndarray, n: int) -> np.ndarray:
    """Vector into column 0 of an order-n zero matrix."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.shape[0] > n:
        raise DimensionError(f"vector of length {v.shape[0]} does not fit order {n}")
    m = np.zeros((n, n))
    m[: v.shape[0], 0] = v
    return m


def extract_columns(pt: PackedPlaintext, rows: int) -> list[np.ndarray]:
    """First `rows` entries of column 0 of every matrix in the batch."""
    return [m[:rows, 0].copy() for m in decode_batch(pt)]


# -- transcript and audit ----------------------------------------------


@dataclass
class TranscriptEntry:
    direction: str  # "sent" | "recv"
    kind: int
    klass: str
    nbytes: int
    timestamp: float


class Transcript:
    """Append-only record of every frame a party sent or received."""

    def __init__(self):
        self.entries: list[TranscriptEntry] = []

    def record(self, direction: str, kind: int, nbytes: int):
        klass = msg.CLASS_BY_KIND.get(kind, "unknown")
        self.entries.append(TranscriptEntry(direction, kind, klass, nbytes, time.time()))

    def count(self, kind: int, direction: str | None = None) -> int:
        return sum(
            1
            for e in self.entries
            if e.kind == kind and (direction is None or e.direction == direction)
        )

    def total_bytes(self, direction: str | None = None) -> int:
        return sum(
            e.nbytes for e in self.entries if direction is None or e.direction == direction
        )

    def wire_signature(self) -> list[tuple]:
        """Timing-free view used for determinism comparisons."""
        return [(e.direction, e.kind, e.klass, e.nbytes) for e in self.entries]


_RECV_ALLOWED = {
    "client": {msg.MODEL_ACK, msg.NLNF_REQ, msg.RESULT, msg.ERROR},
    "server": {msg.HELLO, msg.INPUT_SET, msg.ERROR},
}


def audit_transcript(transcript: Transcript, role: str) -> list[str]:
    """Hygiene check; returns human-readable violations (empty == clean).

    Rules: no frame may carry the "plaintext" traffic class (unencrypted
    user data never crosses the wire); each role may only receive the
    message kinds its state machine defines.  Model weights have no wire
    encoding at all, so an undefined or misclassified kind flags here.
    """
    if role not in _RECV_ALLOWED:
        raise ValueError(f"role must be 'client' or 'server', got {role!r}")
    violations = []
    for i, e in enumerate(transcript.entries):
        name = msg.KIND_NAMES.get(e.kind, f"kind#{e.kind}")
        if e.klass not in (msg.CLASS_PUBLIC, msg.CLASS_CIPHERTEXT):
            violations.append(
                f"entry {i}: {e.direction} {name} has forbidden traffic class {e.klass!r}"
            )
        if e.direction == "recv" and e.kind not in _RECV_ALLOWED[role]:
            violations.append(f"entry {i}: {role} received unexpected kind {name}")
    return violations


class SessionIO:
    """Channel + transcript + optional phase recorder, as one send/recv API."""

    def __init__(self, channel, transcript: Transcript, recorder: PhaseRecorder | None = None):
        self.channel = channel
        self.transcript = transcript
        self.recorder = recorder

    def send(self, kind: int, payload: bytes):
        n = self.channel.send_frame(kind, payload)
        if self.recorder is not None:
            self.recorder.on_sent(n)
        self.transcript.record("sent", kind, n)

    def recv(self, *expected: int) -> tuple[int, bytes]:
        kind, payload, n = self.channel.recv_frame()
        if self.recorder is not None:
            self.recorder.on_recv(n)
        self.transcript.record("recv", kind, n)
        if kind == msg.ERROR and msg.ERROR not in expected:
            code, detail = msg.decode_error(payload)
            raise SessionAborted(code, detail)
        if expected and kind not in expected:
            names = "/".join(msg.KIND_NAMES.get(k, str(k)) for k in expected)
            got = msg.KIND_NAMES.get(kind, str(kind))
            raise ProtocolError(f"expected {names}, got {got}")
        return kind, payload


# -- server-side linear evaluation -------------------------------------


@dataclass
class PreparedLinear:
    """Weight permutations encoded once, reused across ciphertexts."""

    n: int
    rows: int
    cols: int
    g: int
    w_enc: list
    bias_slots: PackedPlaintext
    _bias_cache: dict = field(default_factory=dict)

    def bias_encoded(self, backend, level: int, scale: float):
        key = (level, scale)
        if key not in self._bias_cache:
            self._bias_cache[key] = backend.encode(self.bias_slots, level=level, scale=scale)
        return self._bias_cache[key]


def prepare_linear(backend, layer: LinearLayer, g: int = 1) -> PreparedLinear:
    w_sq, b_sq, n = _square_layer(layer)
    slots = backend.params.slot_count
    wk = permut_weights(w_sq)
    w_enc = [backend.encode(encode_batch([wk[k]] * g, slots)) for k in range(n)]
    bias_slots = encode_batch([b_sq] * g, slots)
    return PreparedLinear(n, layer.rows, layer.cols, g, w_enc, bias_slots)


def matf(backend, prep: PreparedLinear, cts: list[Ciphertext], workers: int = 1) -> Ciphertext:
    """Shifted-product linear layer on ciphertexts: n plaintext multiplies,
    n-1 ciphertext adds in ascending shift order, then the bias."""
    if len(cts) != prep.n:
        raise ProtocolError(
            f"order-{prep.n} linear layer needs {prep.n} ciphertexts, got {len(cts)}"
        )
    for ct in cts:
        if ct.layout.d != prep.n or ct.layout.g != prep.g:
            raise LayoutError(f"ciphertext layout {ct.layout} does not match layer ({prep.n}, {prep.g})")
    if workers > 1 and len(cts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            prods = list(pool.map(lambda p: backend.mul_pt(p[0], p[1]), zip(cts, prep.w_enc)))
    else:
        prods = [backend.mul_pt(ct, w) for ct, w in zip(cts, prep.w_enc)]
    acc = prods[0]
    for p in prods[1:]:
        acc = backend.add_ct(acc, p)
    return backend.add_pt(acc, prep.bias_encoded(backend, acc.level, acc.scale))


# -- client-side input preparation -------------------------------------


def prepare_input_set(backend, pk, vectors: list[np.ndarray], n: int) -> list[Ciphertext]:
    """The n shifted encryptions of the column-embedded input batch."""
    slots = backend.params.slot_count
    base = [tau(embed_vector(v, n)) for v in vectors]
    cts = []
    for k in range(n):
        mats = [np.roll(b, -k, axis=0) for b in base]
        cts.append(backend.encrypt(pk, encode_batch(mats, slots)))
    return cts


def encrypt_plain_square(backend, pk, vectors: list[np.ndarray], n: int) -> Ciphertext:
    """One fresh encryption of the unpermuted column embedding."""
    slots = backend.params.slot_count
    return backend.encrypt(pk, encode_batch([embed_vector(v, n) for v in vectors], slots))


# -- sessions ----------------------------------------------------------


@dataclass
class InferenceResult:
    logits: np.ndarray
    argmax: np.ndarray
    report: list
    transcript: Transcript
    rounds: int
    server_transcript: Transcript | None = None
    op_counts: dict | None = None
    client_op_counts: dict | None = None


def _rows_before(summary: list[tuple], idx: int, default: int) -> int:
    for entry in reversed(summary[:idx]):
        if entry[0] == "linear":
            return entry[1]
    return default


class ClientSession:
    """Drives one inference: key setup, input upload, activation rounds."""

    def __init__(self, channel, params: HEParams, inputs: np.ndarray, seed=None):
        self.params = params
        self.inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        if self.inputs.ndim != 2 or self.inputs.size == 0:
            raise DimensionError(f"inputs must be (g, d), got shape {self.inputs.shape}")
        if not np.isfinite(self.inputs).all():
            raise DimensionError("non-finite input values")
        self.seed = seed
        self.transcript = Transcript()
        self.recorder = PhaseRecorder()
        self._io = SessionIO(channel, self.transcript, self.recorder)

    def run(self) -> InferenceResult:
        io = self._io
        rec = self.recorder
        g, in_dim = self.inputs.shape

        rec.enter("client_encode_encrypt")
        backend = make_backend(self.params, seed=self.seed)
        pk, sk = backend.keygen()
        io.send(msg.HELLO, msg.encode_hello(self.params.to_bytes(), backend.serialize_pk(pk)))

        rec.enter("server_set_model")
        _, payload = io.recv(msg.MODEL_ACK)
        summary = msg.decode_model_ack(payload)
        if not summary:
            raise ProtocolError("server announced an empty model")

        rec.enter("client_encode_encrypt")
        if summary[0][0] == "linear":
            rows0, cols0 = summary[0][1], summary[0][2]
            if in_dim != cols0:
                raise DimensionError(f"input has {in_dim} values, model expects {cols0}")
            cts = prepare_input_set(backend, pk, list(self.inputs), max(rows0, cols0))
        else:
            cts = [encrypt_plain_square(backend, pk, list(self.inputs), in_dim)]
        io.send(msg.INPUT_SET, msg.encode_input_set(0, [backend.serialize_ct(c) for c in cts]))
        log.debug("client: uploaded %d ciphertexts for layer 0", len(cts))

        rec.enter("server_dnn_computation")
        rounds = 0
        while True:
            kind, payload = io.recv(msg.NLNF_REQ, msg.RESULT)
            if kind == msg.RESULT:
                result_ct = backend.deserialize_ct(msg.decode_result(payload))
                break
            rounds += 1
            idx, blob = msg.decode_nlnf_req(payload)
            if idx >= len(summary) or summary[idx][0] != "activation":
                raise ProtocolError(f"activation request for non-activation layer {idx}")
            ct = backend.deserialize_ct(blob)
            rows_prev = _rows_before(summary, idx, in_dim)
            vecs = extract_columns(backend.decrypt(sk, ct), rows_prev)
            acts = [apply_activation(summary[idx][1], v) for v in vecs]
            nxt = idx + 1
            if nxt < len(summary) and summary[nxt][0] == "linear":
                rows_n, cols_n = summary[nxt][1], summary[nxt][2]
                if cols_n != rows_prev:
                    raise ProtocolError(
                        f"layer {nxt} expects {cols_n} inputs, activation produced {rows_prev}"
                    )
                cts = prepare_input_set(backend, pk, acts, max(rows_n, cols_n))
            else:
                cts = [encrypt_plain_square(backend, pk, acts, ct.layout.d)]
            io.send(
                msg.INPUT_SET,
                msg.encode_input_set(nxt, [backend.serialize_ct(c) for c in cts]),
            )
            log.debug("client: activation round %d at layer %d", rounds, idx)

        rec.enter("client_decrypt_decode")
        out_rows = _rows_before(summary, len(summary), in_dim)
        vecs = extract_columns(backend.decrypt(sk, result_ct), out_rows)
        logits = np.array(vecs)
        rec.finish()
        return InferenceResult(
            logits=logits,
            argmax=np.argmax(logits, axis=1),
            report=build_report(rec),
            transcript=self.transcript,
            rounds=rounds,
            client_op_counts=dict(backend.op_counts),
        )


class WeightCache:
    """Encoded weight sets shared across sessions, keyed by params and batch."""

    def __init__(self):
        self._store: dict[tuple, PreparedLinear] = {}
        self._lock = threading.Lock()

    def get_or_build(self, key: tuple, builder):
        with self._lock:
            got = self._store.get(key)
        if got is None:
            got = builder()
            with self._lock:
                self._store.setdefault(key, got)
        return got


def _error_code(e: Exception) -> int:
    if isinstance(e, (DimensionError, LayoutError)):
        return msg.E_DIMENSION
    if isinstance(e, CapacityError):
        return msg.E_CAPACITY
    if isinstance(e, (ParamsError, FingerprintError, FrameError)):
        return msg.E_PARAMS
    if isinstance(e, LevelError):
        return msg.E_LEVEL
    if isinstance(e, ProtocolError):
        return msg.E_PROTOCOL
    return msg.E_INTERNAL


class ServerSession:
    """Evaluates the model on one client's ciphertexts; holds no secret key."""

    def __init__(self, channel, model: ModelSpec, cache: WeightCache | None = None, workers: int = 1):
        self.model = model
        self.cache = cache if cache is not None else WeightCache()
        self.workers = max(1, int(workers))
        self.transcript = Transcript()
        self.backend = None
        self._io = SessionIO(channel, self.transcript, None)

    def _prepared(self, layer_idx: int, g: int) -> PreparedLinear:
        layer = self.model.layers[layer_idx]
        key = (self.backend.fingerprint, g, layer_idx)
        return self.cache.get_or_build(key, lambda: prepare_linear(self.backend, layer, g))

    def run(self):
        try:
            self._run()
        except ProudError as e:
            log.warning("server session failed: %s", e)
            try:
                self._io.send(msg.ERROR, msg.encode_error(_error_code(e), str(e)))
            except TransportError:
                pass
            raise
        except Exception as e:  # pragma: no cover - defensive
            log.exception("server session crashed")
            try:
                self._io.send(msg.ERROR, msg.encode_error(msg.E_INTERNAL, str(e)))
            except TransportError:
                pass
            raise

    def _run(self):
        io = self._io
        _, payload = io.recv(msg.HELLO)
        params_b, pk_b = msg.decode_hello(payload)
        params = HEParams.from_bytes(params_b)
        self.backend = make_backend(params)
        self.backend.deserialize_pk(pk_b)  # validated; the server never encrypts
        for i, layer in enumerate(self.model.layers):
            if isinstance(layer, LinearLayer):
                self._prepared(i, 1)
        io.send(msg.MODEL_ACK, msg.encode_model_ack(self.model.describe()))
        log.debug("server: model of %d layers announced", len(self.model.layers))

        _, payload = io.recv(msg.INPUT_SET)
        idx, blobs = msg.decode_input_set(payload)
        if idx != 0:
            raise ProtocolError(f"initial input must target layer 0, got {idx}")
        current = self._decode_set(blobs)

        for i, layer in enumerate(self.model.layers):
            if isinstance(layer, LinearLayer):
                g = current[0].layout.g
                ct = matf(self.backend, self._prepared(i, g), current, self.workers)
                current = [ct]
                log.debug("server: linear layer %d evaluated", i)
            else:
                if len(current) != 1:
                    raise ProtocolError(f"activation layer {i} needs a single ciphertext")
                io.send(msg.NLNF_REQ, msg.encode_nlnf_req(i, self.backend.serialize_ct(current[0])))
                _, payload = io.recv(msg.INPUT_SET)
                ridx, blobs = msg.decode_input_set(payload)
                if ridx != i + 1:
                    raise ProtocolError(f"expected input for layer {i + 1}, got {ridx}")
                current = self._decode_set(blobs)
        if len(current) != 1:
            raise ProtocolError("evaluation did not reduce to a single ciphertext")
        io.send(msg.RESULT, msg.encode_result(self.backend.serialize_ct(current[0])))
        log.debug("server: result returned")

    def _decode_set(self, blobs: list[bytes]) -> list[Ciphertext]:
        if not blobs:
            raise ProtocolError("empty ciphertext set")
        cts = [self.backend.deserialize_ct(b) for b in blobs]
        layouts = {(ct.layout.d, ct.layout.g) for ct in cts}
        if len(layouts) != 1:
            raise LayoutError(f"mixed layouts in ciphertext set: {sorted(layouts)}")
        for ct in cts:
            if ct.level != self.backend.params.depth:
                raise LevelError("uploaded ciphertexts must be fresh (full level)")
        return cts


# -- in-process end-to-end ---------------------------------------------


def run_inference(
    model: ModelSpec,
    x,
    params: HEParams | None = None,
    seed=None,
    workers: int = 1,
) -> InferenceResult:
    """Full client+server exchange over an in-process socket pair."""
    from .transport import loopback_pair

    if params is None:
        params = HEParams.ckks()
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    inputs = np.atleast_2d(arr)

    ch_client, ch_server = loopback_pair()
    server = ServerSession(ch_server, model, workers=workers)
    server_err: list[BaseException] = []

    def serve():
        try:
            server.run()
        except BaseException as e:  # noqa: BLE001 - propagated to caller below
            server_err.append(e)

    th = threading.Thread(target=serve, name="proud-server", daemon=True)
    th.start()
    try:
        client = ClientSession(ch_client, params, inputs, seed=seed)
        result = client.run()
    finally:
        ch_client.close()
        th.join(timeout=30)
        ch_server.close()
    if server_err:
        raise server_err[0]
    result.server_transcript = server.transcript
    result.op_counts = dict(server.backend.op_counts) if server.backend else {}
    if single:
        result.logits = result.logits[0]
        result.argmax = int(result.argmax[0])
    return result
