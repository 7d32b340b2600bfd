"""Slot-wise homomorphic backends behind a single interface.

Two schemes share the interface: ``clear`` (no cryptography, exact slots,
same metadata flow — used for debugging and as a numeric reference) and
``ckks_lite`` (approximate RLWE scheme with plaintext-only multiplication).

Ciphertexts, public keys, and parameter sets all have canonical byte
serializations used on the wire.  Every ciphertext starts with the same
16-byte header:

    scheme_id u8 | version u8 | d u16 | g u16 | level u16 | scale f64

followed by a scheme-specific payload.  All integers little-endian.
"""

from __future__ import annotations

import hashlib
import struct
import threading
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..errors import (
    FingerprintError,
    FrameError,
    LayoutError,
    LevelError,
    ParamsError,
)
from ..packing import Layout, PackedPlaintext

WIRE_VERSION = 1
SCHEME_IDS = {"clear": 1, "ckks_lite": 2}
SCHEME_NAMES = {v: k for k, v in SCHEME_IDS.items()}

_CT_HEADER = struct.Struct("<BBHHHd")
_PARAMS_HEAD = struct.Struct("<BBIHd")
_CKKS_TAIL = struct.Struct("<IBdB")

CT_HEADER_SIZE = _CT_HEADER.size  # 16


@dataclass(frozen=True)
class HEParams:
    """Parameter set shared by both parties; fingerprint pins compatibility."""

    scheme: str
    slot_count: int
    depth: int
    eps: float
    ring_dim: int = 0
    scale_bits: int = 0
    sigma: float = 0.0
    moduli: tuple = ()

    def __post_init__(self):
        if self.scheme not in SCHEME_IDS:
            raise ParamsError(f"unknown scheme {self.scheme!r}")
        if self.slot_count < 1:
            raise ParamsError("slot_count must be positive")
        if self.depth < 1:
            raise ParamsError("depth must be at least 1")
        if self.scheme == "ckks_lite":
            n = self.ring_dim
            if n < 8 or n & (n - 1):
                raise ParamsError(f"ring_dim must be a power of two >= 8, got {n}")
            if self.slot_count != n // 2:
                raise ParamsError("slot_count must equal ring_dim / 2")
            if not 20 <= self.scale_bits <= 59:
                raise ParamsError(
                    f"scale_bits must be in [20, 59], got {self.scale_bits}"
                )
            if len(self.moduli) != self.depth + 1:
                raise ParamsError(
                    f"need {self.depth + 1} moduli for depth {self.depth}, "
                    f"got {len(self.moduli)}"
                )
            if len(set(self.moduli)) != len(self.moduli):
                raise ParamsError("moduli must be distinct")
            for q in self.moduli:
                if q % (2 * n) != 1:
                    raise ParamsError(f"modulus {q} is not 1 mod 2*ring_dim")

    @classmethod
    def clear(cls, slot_count: int = 4096, depth: int = 1) -> "HEParams":
        return cls(scheme="clear", slot_count=slot_count, depth=depth, eps=0.0)

    @classmethod
    def ckks(
        cls,
        ring_dim: int = 8192,
        scale_bits: int = 40,
        depth: int = 1,
        sigma: float = 3.2,
        moduli: tuple | None = None,
    ) -> "HEParams":
        if moduli is None:
            from .ckks.params import default_chain

            moduli = default_chain(ring_dim, scale_bits, depth)
        return cls(
            scheme="ckks_lite",
            slot_count=ring_dim // 2,
            depth=depth,
            eps=1e-4,
            ring_dim=ring_dim,
            scale_bits=scale_bits,
            sigma=sigma,
            moduli=tuple(moduli),
        )

    @property
    def scale(self) -> float:
        return float(2 ** self.scale_bits) if self.scheme == "ckks_lite" else 1.0

    def to_bytes(self) -> bytes:
        head = _PARAMS_HEAD.pack(
            SCHEME_IDS[self.scheme], WIRE_VERSION, self.slot_count, self.depth, self.eps
        )
        if self.scheme == "clear":
            return head
        tail = _CKKS_TAIL.pack(self.ring_dim, self.scale_bits, self.sigma, len(self.moduli))
        tail += b"".join(struct.pack("<Q", q) for q in self.moduli)
        return head + tail

    @classmethod
    def from_bytes(cls, data: bytes) -> "HEParams":
        if len(data) < _PARAMS_HEAD.size:
            raise FrameError("truncated parameter block")
        sid, ver, slot_count, depth, eps = _PARAMS_HEAD.unpack_from(data, 0)
        if ver != WIRE_VERSION:
            raise FrameError(f"unsupported parameter version {ver}")
        if sid not in SCHEME_NAMES:
            raise FrameError(f"unknown scheme id {sid}")
        scheme = SCHEME_NAMES[sid]
        if scheme == "clear":
            return cls(scheme="clear", slot_count=slot_count, depth=depth, eps=eps)
        off = _PARAMS_HEAD.size
        ring_dim, scale_bits, sigma, n_mod = _CKKS_TAIL.unpack_from(data, off)
        off += _CKKS_TAIL.size
        need = off + 8 * n_mod
        if len(data) < need:
            raise FrameError("truncated modulus chain")
        moduli = tuple(struct.unpack_from("<Q", data, off + 8 * i)[0] for i in range(n_mod))
        return cls(
            scheme=scheme,
            slot_count=slot_count,
            depth=depth,
            eps=eps,
            ring_dim=ring_dim,
            scale_bits=scale_bits,
            sigma=sigma,
            moduli=moduli,
        )

    def fingerprint(self) -> bytes:
        return hashlib.sha256(self.to_bytes()).digest()[:16]


@dataclass(frozen=True)
class PublicKey:
    fingerprint: bytes
    material: object


@dataclass(frozen=True)
class SecretKey:
    fingerprint: bytes
    material: object


@dataclass
class Ciphertext:
    payload: object
    level: int
    scale: float
    layout: Layout
    fingerprint: bytes


@dataclass
class EncodedPlaintext:
    """Scheme-side encoding of a slot vector, reusable across ciphertexts."""

    payload: object
    level: int
    scale: float
    layout: Layout


class HEBackend:
    """Shared checks, op counting, and serialization framing for schemes."""

    scheme = "?"

    def __init__(self, params: HEParams, seed=None):
        if params.scheme != self.scheme:
            raise ParamsError(f"{type(self).__name__} cannot run scheme {params.scheme!r}")
        self.params = params
        self.fingerprint = params.fingerprint()
        self.op_counts = Counter()
        self._lock = threading.Lock()
        self._rng = np.random.default_rng(seed)

    # -- bookkeeping ---------------------------------------------------

    def _count(self, name: str):
        with self._lock:
            self.op_counts[name] += 1

    def reset_counts(self):
        with self._lock:
            self.op_counts.clear()

    def _check_fp(self, obj):
        if obj.fingerprint != self.fingerprint:
            raise FingerprintError("object belongs to a different parameter set")

    def _check_pair(self, a: Ciphertext, b: Ciphertext):
        self._check_fp(a)
        self._check_fp(b)
        if a.level != b.level:
            raise LevelError(f"level mismatch: {a.level} vs {b.level}")
        if abs(a.scale - b.scale) > 1e-9 * max(abs(a.scale), 1.0):
            raise LevelError(f"scale mismatch: {a.scale} vs {b.scale}")
        if a.layout != b.layout:
            raise LayoutError(f"layout mismatch: {a.layout} vs {b.layout}")

    def _as_encoded(self, pt, level: int, scale: float) -> EncodedPlaintext:
        """Accept a PackedPlaintext or an already-encoded plaintext."""
        if isinstance(pt, PackedPlaintext):
            return self.encode(pt, level=level, scale=scale)
        if pt.level < level:
            raise LevelError(f"encoded plaintext at level {pt.level} cannot serve level {level}")
        if abs(pt.scale - scale) > 1e-9 * max(abs(scale), 1.0):
            raise LevelError(f"encoded plaintext scale {pt.scale} does not match {scale}")
        return pt

    # -- scheme interface ----------------------------------------------

    def keygen(self) -> tuple[PublicKey, SecretKey]:
        raise NotImplementedError

    def encode(self, pt: PackedPlaintext, level=None, scale=None) -> EncodedPlaintext:
        raise NotImplementedError

    def decode(self, ept: EncodedPlaintext) -> PackedPlaintext:
        raise NotImplementedError

    def encrypt(self, pk: PublicKey, pt: PackedPlaintext) -> Ciphertext:
        raise NotImplementedError

    def decrypt(self, sk: SecretKey, ct: Ciphertext) -> PackedPlaintext:
        raise NotImplementedError

    def add_ct(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        raise NotImplementedError

    def add_pt(self, ct: Ciphertext, pt) -> Ciphertext:
        raise NotImplementedError

    def mul_pt(self, ct: Ciphertext, pt) -> Ciphertext:
        """Plaintext multiply; for ckks_lite this rescales and drops a level."""
        raise NotImplementedError

    # -- serialization -------------------------------------------------

    def _ct_header(self, ct: Ciphertext) -> bytes:
        return _CT_HEADER.pack(
            SCHEME_IDS[self.scheme],
            WIRE_VERSION,
            ct.layout.d,
            ct.layout.g,
            ct.level,
            ct.scale,
        )

    def _parse_ct_header(self, data: bytes):
        if len(data) < CT_HEADER_SIZE:
            raise FrameError("truncated ciphertext")
        sid, ver, d, g, level, scale = _CT_HEADER.unpack_from(data, 0)
        if ver != WIRE_VERSION:
            raise FrameError(f"unsupported ciphertext version {ver}")
        if sid != SCHEME_IDS[self.scheme]:
            raise FrameError(f"ciphertext scheme id {sid} does not match backend {self.scheme}")
        return Layout(d, g), level, scale

    def serialize_ct(self, ct: Ciphertext) -> bytes:
        raise NotImplementedError

    def deserialize_ct(self, data: bytes) -> Ciphertext:
        raise NotImplementedError

    def serialize_pk(self, pk: PublicKey) -> bytes:
        raise NotImplementedError

    def deserialize_pk(self, data: bytes) -> PublicKey:
        raise NotImplementedError

    def ct_size(self, level: int) -> int:
        """Serialized ciphertext size in bytes at the given level."""
        raise NotImplementedError

    def serialized_size(self, ct: Ciphertext) -> int:
        """Exact wire length of this ciphertext."""
        return self.ct_size(ct.level)


def make_backend(params: HEParams, seed=None) -> HEBackend:
    """Instantiate the backend for a parameter set."""
    if params.scheme == "clear":
        from .clear import ClearBackend

        return ClearBackend(params, seed=seed)
    if params.scheme == "ckks_lite":
        from .ckks import CkksBackend

        return CkksBackend(params, seed=seed)
    raise ParamsError(f"unknown scheme {params.scheme!r}")  # pragma: no cover
