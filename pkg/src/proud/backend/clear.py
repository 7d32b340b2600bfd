"""Debug backend: ciphertext payloads are just the slot vector plus a nonce.

Arithmetic is exact float64, but level/scale metadata moves exactly like the
real scheme so protocol code paths are identical.  The nonce keeps distinct
encryptions of equal plaintexts from serializing identically.
"""

from __future__ import annotations

import numpy as np

from ..errors import CapacityError, FrameError, LevelError
from ..packing import PackedPlaintext
from . import (
    CT_HEADER_SIZE,
    Ciphertext,
    EncodedPlaintext,
    HEBackend,
    PublicKey,
    SecretKey,
    WIRE_VERSION,
)

_NONCE = 16


class ClearBackend(HEBackend):
    scheme = "clear"

    def keygen(self):
        self._count("keygen")
        token = self._rng.bytes(16)
        return PublicKey(self.fingerprint, token), SecretKey(self.fingerprint, token)

    def encode(self, pt: PackedPlaintext, level=None, scale=None) -> EncodedPlaintext:
        if pt.slot_count != self.params.slot_count:
            raise CapacityError(
                f"plaintext has {pt.slot_count} slots, backend expects {self.params.slot_count}"
            )
        lvl = self.params.depth if level is None else int(level)
        return EncodedPlaintext(pt.slots.copy(), lvl, 1.0, pt.layout)

    def decode(self, ept: EncodedPlaintext) -> PackedPlaintext:
        return PackedPlaintext(np.asarray(ept.payload, dtype=np.float64).copy(), ept.layout)

    def encrypt(self, pk, pt: PackedPlaintext) -> Ciphertext:
        self._check_fp(pk)
        ept = self.encode(pt)
        self._count("encrypt")
        nonce = self._rng.bytes(_NONCE)
        return Ciphertext((nonce, ept.payload), self.params.depth, 1.0, pt.layout, self.fingerprint)

    def decrypt(self, sk, ct: Ciphertext) -> PackedPlaintext:
        self._check_fp(sk)
        self._check_fp(ct)
        self._count("decrypt")
        return PackedPlaintext(ct.payload[1].copy(), ct.layout)

    def add_ct(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        self._check_pair(a, b)
        self._count("add_ct")
        nonce = a.payload[0]
        return Ciphertext((nonce, a.payload[1] + b.payload[1]), a.level, a.scale, a.layout, self.fingerprint)

    def add_pt(self, ct: Ciphertext, pt) -> Ciphertext:
        self._check_fp(ct)
        ept = self._as_encoded(pt, ct.level, ct.scale)
        self._count("add_pt")
        return Ciphertext(
            (ct.payload[0], ct.payload[1] + ept.payload), ct.level, ct.scale, ct.layout, self.fingerprint
        )

    def mul_pt(self, ct: Ciphertext, pt) -> Ciphertext:
        self._check_fp(ct)
        if ct.level < 1:
            raise LevelError("multiplicative budget exhausted")
        ept = self._as_encoded(pt, ct.level, 1.0)
        self._count("mul_pt")
        return Ciphertext(
            (ct.payload[0], ct.payload[1] * ept.payload), ct.level - 1, ct.scale, ct.layout, self.fingerprint
        )

    def serialize_ct(self, ct: Ciphertext) -> bytes:
        self._check_fp(ct)
        nonce, slots = ct.payload
        return self._ct_header(ct) + nonce + slots.astype("<f8").tobytes()

    def deserialize_ct(self, data: bytes) -> Ciphertext:
        layout, level, scale = self._parse_ct_header(data)
        body = data[CT_HEADER_SIZE:]
        if len(body) != _NONCE + 8 * self.params.slot_count:
            raise FrameError(f"clear ciphertext payload has wrong size {len(body)}")
        nonce = body[:_NONCE]
        slots = np.frombuffer(body[_NONCE:], dtype="<f8").astype(np.float64)
        return Ciphertext((nonce, slots), level, scale, layout, self.fingerprint)

    def serialize_pk(self, pk: PublicKey) -> bytes:
        self._check_fp(pk)
        return bytes([1, WIRE_VERSION]) + pk.fingerprint + pk.material

    def deserialize_pk(self, data: bytes) -> PublicKey:
        if len(data) != 2 + 16 + 16 or data[0] != 1 or data[1] != WIRE_VERSION:
            raise FrameError("malformed clear public key")
        fp = data[2:18]
        if fp != self.fingerprint:
            raise FrameError("public key fingerprint does not match session parameters")
        return PublicKey(fp, data[18:])

    def ct_size(self, level: int) -> int:
        return CT_HEADER_SIZE + _NONCE + 8 * self.params.slot_count
