"""Negacyclic number-theoretic transform over word-sized primes.

Forward transform is decimation-in-time (natural order in, bit-reversed
out), inverse is decimation-in-frequency, with the sign-twist folded into
the twiddle tables so the transform is length-N rather than 2N.  The fast
path runs Montgomery arithmetic in jitted kernels; the fallback does the
same stages vectorized over numpy object arrays (exact big-int math).
"""

from __future__ import annotations

import numpy as np

from ...accel import njit, numba_enabled

_R = 1 << 64

MASK32 = np.uint64(0xFFFFFFFF)
U32 = np.uint64(32)
U0 = np.uint64(0)
U1 = np.uint64(1)


def bit_reverse(x: int, bits: int) -> int:
    r = 0
    for _ in range(bits):
        r = (r << 1) | (x & 1)
        x >>= 1
    return r


def primitive_root_2n(q: int, n: int) -> int:
    """A primitive 2n-th root of unity mod q (requires q = 1 mod 2n)."""
    order = (q - 1) // (2 * n)
    for g in range(2, 10000):
        c = pow(g, order, q)
        if pow(c, n, q) == q - 1:
            return c
    raise ValueError(f"no primitive 2*{n}-th root found mod {q}")  # pragma: no cover


class PrimeTables:
    """Per-prime twiddle tables in both Montgomery and plain form."""

    def __init__(self, q: int, n: int):
        self.q = q
        self.n = n
        logn = n.bit_length() - 1
        psi = primitive_root_2n(q, n)
        ipsi = pow(psi, -1, q)
        rev = [bit_reverse(i, logn) for i in range(n)]
        psi_rev = [pow(psi, r, q) for r in rev]
        ipsi_rev = [pow(ipsi, r, q) for r in rev]
        n_inv = pow(n, -1, q)

        self.qu = np.uint64(q)
        self.qinv = np.uint64(pow(-q, -1, _R))
        self.r2u = np.uint64(_R * _R % q)
        self.psi_mont = np.array([v * _R % q for v in psi_rev], dtype=np.uint64)
        self.ipsi_mont = np.array([v * _R % q for v in ipsi_rev], dtype=np.uint64)
        self.n_inv_mont = np.uint64(n_inv * _R % q)

        self.psi_obj = np.array(psi_rev, dtype=object)
        self.ipsi_obj = np.array(ipsi_rev, dtype=object)
        self.n_inv = n_inv

    def to_mont(self, x: int) -> np.uint64:
        return np.uint64(x * _R % self.q)


# -- jitted kernels ----------------------------------------------------


@njit(cache=True, nogil=True)
def _mont_mul(a, b, q, qinv):  # pragma: no cover - jitted
    a_lo = a & MASK32
    a_hi = a >> U32
    b_lo = b & MASK32
    b_hi = b >> U32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> U32) + (lh & MASK32) + (hl & MASK32)
    t_lo = (ll & MASK32) | ((mid & MASK32) << U32)
    t_hi = hh + (lh >> U32) + (hl >> U32) + (mid >> U32)
    m = t_lo * qinv
    m_lo = m & MASK32
    m_hi = m >> U32
    q_lo = q & MASK32
    q_hi = q >> U32
    ll2 = m_lo * q_lo
    lh2 = m_lo * q_hi
    hl2 = m_hi * q_lo
    hh2 = m_hi * q_hi
    mid2 = (ll2 >> U32) + (lh2 & MASK32) + (hl2 & MASK32)
    mq_hi = hh2 + (lh2 >> U32) + (hl2 >> U32) + (mid2 >> U32)
    carry = U1 if t_lo != U0 else U0
    r = t_hi + mq_hi + carry
    if r >= q:
        r -= q
    return r


@njit(cache=True, nogil=True)
def _ntt_fwd_nb(a, psi_mont, q, qinv):  # pragma: no cover - jitted
    n = a.shape[0]
    t = n >> 1
    m = 1
    while m < n:
        for i in range(m):
            j1 = 2 * i * t
            s = psi_mont[m + i]
            for j in range(j1, j1 + t):
                u = a[j]
                v = _mont_mul(a[j + t], s, q, qinv)
                w = u + v
                if w >= q:
                    w -= q
                a[j] = w
                if u >= v:
                    a[j + t] = u - v
                else:
                    a[j + t] = u + q - v
        m <<= 1
        t >>= 1


@njit(cache=True, nogil=True)
def _ntt_inv_nb(a, ipsi_mont, n_inv_mont, q, qinv):  # pragma: no cover - jitted
    n = a.shape[0]
    t = 1
    m = n
    while m > 1:
        h = m >> 1
        j1 = 0
        for i in range(h):
            s = ipsi_mont[h + i]
            for j in range(j1, j1 + t):
                u = a[j]
                v = a[j + t]
                w = u + v
                if w >= q:
                    w -= q
                a[j] = w
                d = u + q - v
                if d >= q:
                    d -= q
                a[j + t] = _mont_mul(d, s, q, qinv)
            j1 += 2 * t
        t <<= 1
        m = h
    for j in range(n):
        a[j] = _mont_mul(a[j], n_inv_mont, q, qinv)


@njit(cache=True, nogil=True)
def _mul_mod_nb(a, b, out, q, qinv, r2):  # pragma: no cover - jitted
    for i in range(a.shape[0]):
        out[i] = _mont_mul(_mont_mul(a[i], b[i], q, qinv), r2, q, qinv)


@njit(cache=True, nogil=True)
def _scalar_mul_nb(a, s_mont, out, q, qinv):  # pragma: no cover - jitted
    for i in range(a.shape[0]):
        out[i] = _mont_mul(a[i], s_mont, q, qinv)


# -- object-array fallback stages --------------------------------------


def _ntt_fwd_obj(a, psi_rev, q):
    n = a.shape[0]
    m, length = 1, n >> 1
    while m < n:
        view = a.reshape(m, 2, length)
        s = psi_rev[m : 2 * m].reshape(m, 1)
        u = view[:, 0, :].copy()
        v = (view[:, 1, :] * s) % q
        view[:, 0, :] = (u + v) % q
        view[:, 1, :] = (u - v) % q
        m <<= 1
        length >>= 1


def _ntt_inv_obj(a, ipsi_rev, n_inv, q):
    n = a.shape[0]
    m, length = n, 1
    while m > 1:
        h = m >> 1
        view = a.reshape(h, 2, length)
        s = ipsi_rev[h : 2 * h].reshape(h, 1)
        u = view[:, 0, :].copy()
        v = view[:, 1, :].copy()
        view[:, 0, :] = (u + v) % q
        view[:, 1, :] = ((u - v) * s) % q
        length <<= 1
        m = h
    a[:] = (a * n_inv) % q


# -- dispatching entry points ------------------------------------------


def ntt_forward(a: np.ndarray, t: PrimeTables) -> None:
    """In-place forward transform of a uint64 coefficient vector."""
    if numba_enabled():
        _ntt_fwd_nb(a, t.psi_mont, t.qu, t.qinv)
        return
    obj = np.array(a.tolist(), dtype=object)
    _ntt_fwd_obj(obj, t.psi_obj, t.q)
    a[:] = np.array(obj.tolist(), dtype=np.uint64)


def ntt_inverse(a: np.ndarray, t: PrimeTables) -> None:
    """In-place inverse transform; includes the 1/N normalization."""
    if numba_enabled():
        _ntt_inv_nb(a, t.ipsi_mont, t.n_inv_mont, t.qu, t.qinv)
        return
    obj = np.array(a.tolist(), dtype=object)
    _ntt_inv_obj(obj, t.ipsi_obj, t.n_inv, t.q)
    a[:] = np.array(obj.tolist(), dtype=np.uint64)


def mul_mod(a: np.ndarray, b: np.ndarray, t: PrimeTables) -> np.ndarray:
    """Pointwise a*b mod q for uint64 vectors."""
    if numba_enabled():
        out = np.empty_like(a)
        _mul_mod_nb(a, b, out, t.qu, t.qinv, t.r2u)
        return out
    return ((a.astype(object) * b.astype(object)) % t.q).astype(np.uint64)


def scalar_mul_mod(a: np.ndarray, s: int, t: PrimeTables) -> np.ndarray:
    """Pointwise a*s mod q for a scalar s in [0, q)."""
    if numba_enabled():
        out = np.empty_like(a)
        _scalar_mul_nb(a, t.to_mont(s), out, t.qu, t.qinv)
        return out
    return ((a.astype(object) * s) % t.q).astype(np.uint64)


def add_mod(a: np.ndarray, b: np.ndarray, qu: np.uint64) -> np.ndarray:
    s = a + b  # both < q < 2**60, no wraparound
    return np.where(s >= qu, s - qu, s)


def sub_mod(a: np.ndarray, b: np.ndarray, qu: np.uint64) -> np.ndarray:
    return np.where(a >= b, a - b, a + qu - b)


def neg_mod(a: np.ndarray, qu: np.uint64) -> np.ndarray:
    return np.where(a == 0, a, qu - a)
