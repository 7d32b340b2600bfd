"""Approximate slot-wise HE scheme (RLWE, RNS chain, plaintext-only muls).

Supports exactly the operations the inference protocol needs: public-key
encryption of slot vectors, ciphertext addition, plaintext addition and
multiplication with an automatic rescale.  There is no ciphertext-by-
ciphertext multiply and no rotation machinery; the evaluating party holds
its own operand in clear, and every interactive round starts from a fresh
encryption, so depth 1 suffices.

Ciphertext payloads are pairs of RNS residue matrices, evaluation domain,
shape (level + 1, ring_dim).  Randomness per encryption is drawn in a fixed
order (mask, then two noise polynomials) so seeded runs are reproducible.
"""

from __future__ import annotations

import numpy as np

from ...errors import CapacityError, FrameError, LevelError
from ...packing import PackedPlaintext
from .. import (
    CT_HEADER_SIZE,
    Ciphertext,
    EncodedPlaintext,
    HEBackend,
    PublicKey,
    SecretKey,
    WIRE_VERSION,
)
from .encoding import decode_coeffs, encode_coeffs
from .ntt import add_mod, mul_mod, ntt_forward, ntt_inverse, scalar_mul_mod, sub_mod
from .ring import Chain, RingElement

_chains: dict[tuple, Chain] = {}


def shared_chain(moduli, n: int) -> Chain:
    """Chains are immutable; cache them so repeated backends reuse tables."""
    key = (n, tuple(moduli))
    if key not in _chains:
        _chains[key] = Chain(moduli, n)
    return _chains[key]


class CkksBackend(HEBackend):
    scheme = "ckks_lite"

    def __init__(self, params, seed=None):
        super().__init__(params, seed=seed)
        self.n = params.ring_dim
        self.chain = shared_chain(params.moduli, self.n)

    # -- sampling ------------------------------------------------------

    def _ternary(self) -> np.ndarray:
        return self._rng.integers(-1, 2, self.n).astype(np.int64)

    def _noise(self) -> np.ndarray:
        return np.rint(self._rng.normal(0.0, self.params.sigma, self.n)).astype(np.int64)

    def _uniform_rows(self, active: int) -> np.ndarray:
        rows = np.empty((active, self.n), dtype=np.uint64)
        for i in range(active):
            rows[i] = self._rng.integers(0, self.chain.moduli[i], self.n, dtype=np.uint64)
        return rows

    def _small_eval(self, coeffs: np.ndarray, active: int) -> RingElement:
        return self.chain.to_eval(self.chain.from_signed(coeffs, active))

    # -- keys ----------------------------------------------------------

    def keygen(self):
        self._count("keygen")
        full = self.params.depth + 1
        s = self._small_eval(self._ternary(), full)
        e = self._small_eval(self._noise(), full)
        a = RingElement(self._uniform_rows(full), evaluation=True)
        pk0 = self.chain.neg(self.chain.add(self.chain.mul(a, s), e))
        pk = PublicKey(self.fingerprint, {"pk0": pk0.residues, "pk1": a.residues})
        sk = SecretKey(self.fingerprint, {"s": s.residues})
        return pk, sk

    # -- encoding ------------------------------------------------------

    def encode(self, pt: PackedPlaintext, level=None, scale=None) -> EncodedPlaintext:
        if pt.slot_count != self.params.slot_count:
            raise CapacityError(
                f"plaintext has {pt.slot_count} slots, backend expects {self.params.slot_count}"
            )
        lvl = self.params.depth if level is None else int(level)
        if not 0 <= lvl <= self.params.depth:
            raise LevelError(f"level {lvl} outside chain of depth {self.params.depth}")
        sc = self.params.scale if scale is None else float(scale)
        coeffs = encode_coeffs(pt.slots, sc, self.n)
        rows = self._small_eval(coeffs, lvl + 1).residues
        return EncodedPlaintext(rows, lvl, sc, pt.layout)

    def decode(self, ept: EncodedPlaintext) -> PackedPlaintext:
        re = RingElement(ept.payload.copy(), evaluation=True)
        centered = self.chain.lift_centered(self.chain.to_coeff(re))
        slots = decode_coeffs(centered, ept.scale, self.n)
        return PackedPlaintext(slots, ept.layout)

    # -- encryption ----------------------------------------------------

    def encrypt(self, pk, pt: PackedPlaintext) -> Ciphertext:
        self._check_fp(pk)
        full = self.params.depth + 1
        m = self.encode(pt)
        u = self._small_eval(self._ternary(), full)
        e1 = self._small_eval(self._noise(), full)
        e2 = self._small_eval(self._noise(), full)
        pk0 = RingElement(pk.material["pk0"], evaluation=True)
        pk1 = RingElement(pk.material["pk1"], evaluation=True)
        me = RingElement(m.payload, evaluation=True)
        c0 = self.chain.add(self.chain.add(self.chain.mul(pk0, u), e1), me)
        c1 = self.chain.add(self.chain.mul(pk1, u), e2)
        self._count("encrypt")
        return Ciphertext(
            (c0.residues, c1.residues),
            self.params.depth,
            self.params.scale,
            pt.layout,
            self.fingerprint,
        )

    def decrypt(self, sk, ct: Ciphertext) -> PackedPlaintext:
        self._check_fp(sk)
        self._check_fp(ct)
        active = ct.level + 1
        c0, c1 = ct.payload
        s = RingElement(sk.material["s"][:active], evaluation=True)
        m = self.chain.add(
            RingElement(c0, evaluation=True),
            self.chain.mul(RingElement(c1, evaluation=True), s),
        )
        centered = self.chain.lift_centered(self.chain.to_coeff(m))
        slots = decode_coeffs(centered, ct.scale, self.n)
        self._count("decrypt")
        return PackedPlaintext(slots, ct.layout)

    # -- homomorphic ops -----------------------------------------------

    def add_ct(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        self._check_pair(a, b)
        active = a.level + 1
        rows = []
        for pa, pb in zip(a.payload, b.payload):
            out = np.empty_like(pa)
            for i in range(active):
                out[i] = add_mod(pa[i], pb[i], self.chain.tables[i].qu)
            rows.append(out)
        self._count("add_ct")
        return Ciphertext(tuple(rows), a.level, a.scale, a.layout, self.fingerprint)

    def add_pt(self, ct: Ciphertext, pt) -> Ciphertext:
        self._check_fp(ct)
        ept = self._as_encoded(pt, ct.level, ct.scale)
        active = ct.level + 1
        c0, c1 = ct.payload
        out = np.empty_like(c0)
        for i in range(active):
            out[i] = add_mod(c0[i], ept.payload[i], self.chain.tables[i].qu)
        self._count("add_pt")
        return Ciphertext((out, c1), ct.level, ct.scale, ct.layout, self.fingerprint)

    def mul_pt(self, ct: Ciphertext, pt) -> Ciphertext:
        self._check_fp(ct)
        if ct.level < 1:
            raise LevelError("multiplicative budget exhausted")
        ept = self._as_encoded(pt, ct.level, self.params.scale)
        active = ct.level + 1
        prod = []
        for poly in ct.payload:
            out = np.empty_like(poly)
            for i in range(active):
                out[i] = mul_mod(poly[i], ept.payload[i], self.chain.tables[i])
            prod.append(out)
        polys, level, scale = self._rescale(prod, ct.level, ct.scale * ept.scale)
        self._count("mul_pt")
        return Ciphertext(tuple(polys), level, scale, ct.layout, self.fingerprint)

    def rescale(self, ct: Ciphertext) -> Ciphertext:
        """Drop one chain level, dividing the scale by the dropped prime.

        ``mul_pt`` already does this implicitly; the standalone form exists
        for callers managing scales by hand.
        """
        self._check_fp(ct)
        if ct.level < 1:
            raise LevelError("cannot modulus-switch at level 0")
        polys, level, scale = self._rescale(list(ct.payload), ct.level, ct.scale)
        self._count("rescale")
        return Ciphertext(tuple(polys), level, scale, ct.layout, self.fingerprint)

    def _rescale(self, polys, level: int, scale: float):
        """Divide by the last active prime, dropping one chain level."""
        drop = level
        q_drop = self.chain.moduli[drop]
        t_drop = self.chain.tables[drop]
        half = q_drop // 2
        out_polys = []
        for poly in polys:
            last = poly[drop].copy()
            ntt_inverse(last, t_drop)
            r = last.astype(np.int64)
            x = r - q_drop * (r > half)  # centered mod q_drop
            keep = np.empty((level, self.n), dtype=np.uint64)
            for i in range(level):
                qi = self.chain.moduli[i]
                ti = self.chain.tables[i]
                lift = (x % qi).astype(np.uint64)
                ntt_forward(lift, ti)
                diff = sub_mod(poly[i], lift, ti.qu)
                keep[i] = scalar_mul_mod(diff, pow(q_drop, -1, qi), ti)
            out_polys.append(keep)
        return out_polys, level - 1, scale / q_drop

    # -- serialization -------------------------------------------------

    def serialize_ct(self, ct: Ciphertext) -> bytes:
        self._check_fp(ct)
        c0, c1 = ct.payload
        return self._ct_header(ct) + c0.astype("<u8").tobytes() + c1.astype("<u8").tobytes()

    def deserialize_ct(self, data: bytes) -> Ciphertext:
        layout, level, scale = self._parse_ct_header(data)
        if not 0 <= level <= self.params.depth:
            raise FrameError(f"ciphertext level {level} outside chain")
        active = level + 1
        body = data[CT_HEADER_SIZE:]
        poly_bytes = active * self.n * 8
        if len(body) != 2 * poly_bytes:
            raise FrameError(f"ckks ciphertext payload has wrong size {len(body)}")
        mats = []
        for k in range(2):
            flat = np.frombuffer(body[k * poly_bytes : (k + 1) * poly_bytes], dtype="<u8")
            rows = flat.reshape(active, self.n).astype(np.uint64)
            for i in range(active):
                if rows[i].max(initial=0) >= self.chain.moduli[i]:
                    raise FrameError("residue out of range for chain prime")
            mats.append(rows)
        return Ciphertext((mats[0], mats[1]), level, scale, layout, self.fingerprint)

    def serialize_pk(self, pk: PublicKey) -> bytes:
        self._check_fp(pk)
        body = pk.material["pk0"].astype("<u8").tobytes() + pk.material["pk1"].astype("<u8").tobytes()
        return bytes([2, WIRE_VERSION]) + pk.fingerprint + body

    def deserialize_pk(self, data: bytes) -> PublicKey:
        full = self.params.depth + 1
        poly_bytes = full * self.n * 8
        if len(data) != 2 + 16 + 2 * poly_bytes or data[0] != 2 or data[1] != WIRE_VERSION:
            raise FrameError("malformed ckks public key")
        fp = data[2:18]
        if fp != self.fingerprint:
            raise FrameError("public key fingerprint does not match session parameters")
        body = data[18:]
        mats = []
        for k in range(2):
            flat = np.frombuffer(body[k * poly_bytes : (k + 1) * poly_bytes], dtype="<u8")
            mats.append(flat.reshape(full, self.n).astype(np.uint64))
        return PublicKey(fp, {"pk0": mats[0], "pk1": mats[1]})

    def ct_size(self, level: int) -> int:
        return CT_HEADER_SIZE + 2 * (level + 1) * self.n * 8
