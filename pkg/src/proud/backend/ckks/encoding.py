"""Slot vector <-> scaled integer coefficients via the half-size embedding.

N/2 real slots are treated as evaluations of a real polynomial at the odd
primitive 2N-th roots of unity; the conjugate half is implied.  The twist
by exp(i*pi*k/N) folds the odd-root evaluation into a plain length-N FFT.
"""

from __future__ import annotations

import numpy as np

from ...errors import CapacityError

_INT64_LIMIT = 1 << 62


def _twist(n: int) -> np.ndarray:
    return np.exp(1j * np.pi * np.arange(n) / n)


def embed(slots: np.ndarray, n: int) -> np.ndarray:
    """Real polynomial coefficients (unscaled) whose evaluations are `slots`."""
    half = n // 2
    e = np.empty(n, dtype=np.complex128)
    e[:half] = slots
    e[half:] = np.conj(slots[::-1])
    return (np.fft.fft(e) / n * np.conj(_twist(n))).real


def unembed(coeffs: np.ndarray, n: int) -> np.ndarray:
    """Inverse of embed: evaluate the coefficients back to slot values."""
    evals = n * np.fft.ifft(coeffs * _twist(n))
    return np.ascontiguousarray(evals[: n // 2].real)


def encode_coeffs(slots: np.ndarray, delta: float, n: int) -> np.ndarray:
    """Round the scaled embedding to int64; raises if out of exact range."""
    p = embed(slots, n) * delta
    m = np.abs(p).max() if p.size else 0.0
    if not np.isfinite(m) or m >= _INT64_LIMIT:
        raise CapacityError(f"encoded magnitude {m:.3g} exceeds the integer range")
    return np.rint(p).astype(np.int64)


def decode_coeffs(centered: np.ndarray, delta: float, n: int) -> np.ndarray:
    """Slot values from centered big-int coefficients at the given scale."""
    return unembed(centered.astype(np.float64) / delta, n)
