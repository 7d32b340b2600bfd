"""Residue-number-system polynomial arithmetic over a modulus chain."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ...errors import DomainError, ParamsError
from .ntt import PrimeTables, add_mod, mul_mod, neg_mod, ntt_forward, ntt_inverse, sub_mod


@dataclass
class RingElement:
    """Residues per chain prime, shape (active_primes, N); domain-flagged."""

    residues: np.ndarray
    evaluation: bool

    @property
    def active(self) -> int:
        return self.residues.shape[0]


class Chain:
    """Twiddle tables plus whole-chain helpers for a fixed modulus chain."""

    def __init__(self, moduli, n: int):
        self.moduli = tuple(int(q) for q in moduli)
        self.n = n
        self.tables = [PrimeTables(q, n) for q in self.moduli]
        self._crt_cache: dict[int, tuple[int, list[int]]] = {}

    def _check(self, re: RingElement, evaluation: bool | None = None):
        if re.residues.ndim != 2 or re.residues.shape[1] != self.n:
            raise ParamsError(f"bad residue shape {re.residues.shape}")
        if re.active > len(self.moduli):
            raise ParamsError("more residue rows than chain primes")
        if evaluation is not None and re.evaluation != evaluation:
            want = "evaluation" if evaluation else "coefficient"
            raise DomainError(f"ring element must be in {want} domain")

    def from_signed(self, coeffs: np.ndarray, active: int) -> RingElement:
        """Reduce signed int64 coefficients into the first `active` primes."""
        c = np.asarray(coeffs, dtype=np.int64)
        rows = np.empty((active, self.n), dtype=np.uint64)
        for i in range(active):
            rows[i] = (c % self.moduli[i]).astype(np.uint64)
        return RingElement(rows, evaluation=False)

    def to_eval(self, re: RingElement) -> RingElement:
        self._check(re, evaluation=False)
        rows = re.residues.copy()
        for i in range(re.active):
            ntt_forward(rows[i], self.tables[i])
        return RingElement(rows, evaluation=True)

    def to_coeff(self, re: RingElement) -> RingElement:
        self._check(re, evaluation=True)
        rows = re.residues.copy()
        for i in range(re.active):
            ntt_inverse(rows[i], self.tables[i])
        return RingElement(rows, evaluation=False)

    def _zip_check(self, a: RingElement, b: RingElement):
        self._check(a)
        self._check(b)
        if a.evaluation != b.evaluation:
            raise DomainError("operands are in different domains")
        if a.active != b.active:
            raise ParamsError(f"active prime mismatch: {a.active} vs {b.active}")

    def add(self, a: RingElement, b: RingElement) -> RingElement:
        self._zip_check(a, b)
        rows = np.empty_like(a.residues)
        for i in range(a.active):
            rows[i] = add_mod(a.residues[i], b.residues[i], self.tables[i].qu)
        return RingElement(rows, a.evaluation)

    def sub(self, a: RingElement, b: RingElement) -> RingElement:
        self._zip_check(a, b)
        rows = np.empty_like(a.residues)
        for i in range(a.active):
            rows[i] = sub_mod(a.residues[i], b.residues[i], self.tables[i].qu)
        return RingElement(rows, a.evaluation)

    def neg(self, a: RingElement) -> RingElement:
        self._check(a)
        rows = np.empty_like(a.residues)
        for i in range(a.active):
            rows[i] = neg_mod(a.residues[i], self.tables[i].qu)
        return RingElement(rows, a.evaluation)

    def mul(self, a: RingElement, b: RingElement) -> RingElement:
        """Pointwise product; polynomial product requires evaluation domain."""
        self._zip_check(a, b)
        if not a.evaluation:
            raise DomainError("polynomial multiply requires evaluation domain")
        rows = np.empty_like(a.residues)
        for i in range(a.active):
            rows[i] = mul_mod(a.residues[i], b.residues[i], self.tables[i])
        return RingElement(rows, True)

    def _crt_consts(self, active: int):
        got = self._crt_cache.get(active)
        if got is None:
            qs = self.moduli[:active]
            big_q = 1
            for q in qs:
                big_q *= q
            weights = []
            for q in qs:
                m = big_q // q
                weights.append(m * pow(m, -1, q))
            got = (big_q, weights)
            self._crt_cache[active] = got
        return got

    def lift_centered(self, re: RingElement) -> np.ndarray:
        """Centered big-int coefficients (object array) of a coeff-domain element."""
        self._check(re, evaluation=False)
        if re.active == 1:
            q = self.moduli[0]
            r = re.residues[0].astype(np.int64)
            return (r - q * (r > q // 2)).astype(object)
        big_q, weights = self._crt_consts(re.active)
        acc = np.zeros(self.n, dtype=object)
        for i in range(re.active):
            acc += re.residues[i].astype(object) * weights[i]
        acc %= big_q
        half = big_q // 2
        return np.where(acc > half, acc - big_q, acc)
