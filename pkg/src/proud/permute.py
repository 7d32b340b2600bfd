"""Square-matrix shears, cyclic shifts, and the shifted-product matmul.

A product W @ V of n x n matrices can be written as an elementwise sum

    sum_k phi_k(sigma(W), k) * psi_k(tau(V), k)

where sigma shears each row left by its row index, tau shears each column
up by its column index, and phi_k / psi_k cyclically shift columns left /
rows up by k.  All index arithmetic is modular, so entries wrap around.
This module provides those primitives plus a naive triple-loop reference
multiply used as an independent oracle.
"""

from __future__ import annotations

import numpy as np

from .accel import njit, numba_enabled
from .errors import DimensionError


def as_square(a) -> np.ndarray:
    """Validate and return `a` as a contiguous float64 square matrix."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] == 0:
        raise DimensionError("empty matrix")
    if not np.isfinite(m).all():
        raise DimensionError("matrix contains non-finite entries")
    return m


def sigma(a) -> np.ndarray:
    """Shear rows: out[i, j] = a[i, (i + j) mod n]."""
    m = as_square(a)
    n = m.shape[0]
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    return m[i, (i + j) % n]


def tau(a) -> np.ndarray:
    """Shear columns: out[i, j] = a[(i + j) mod n, j]."""
    m = as_square(a)
    n = m.shape[0]
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    return m[(i + j) % n, j]


def phi_k(a, k: int) -> np.ndarray:
    """Cyclically shift all columns left by k (entries wrap around)."""
    return np.roll(as_square(a), -int(k), axis=1)


def psi_k(a, k: int) -> np.ndarray:
    """Cyclically shift all rows up by k (entries wrap around)."""
    return np.roll(as_square(a), -int(k), axis=0)


def permut_weights(w) -> np.ndarray:
    """Stack of the n left-operand permutations: out[k] = phi_k(sigma(w), k)."""
    base = sigma(w)
    n = base.shape[0]
    return np.stack([np.roll(base, -k, axis=1) for k in range(n)])


def permut_input(v) -> np.ndarray:
    """Stack of the n right-operand permutations: out[k] = psi_k(tau(v), k)."""
    base = tau(v)
    n = base.shape[0]
    return np.stack([np.roll(base, -k, axis=0) for k in range(n)])


def permuted_matmul(w, v) -> np.ndarray:
    """Multiply via the shifted-product identity.

    Accumulates the k-th elementwise product in ascending k order, matching
    the order used by the encrypted evaluation path, so clear-backend runs
    are bit-identical to this function.
    """
    wk = permut_weights(w)
    vk = permut_input(v)
    if wk.shape != vk.shape:
        raise DimensionError(f"operand orders differ: {wk.shape[1]} vs {vk.shape[1]}")
    acc = wk[0] * vk[0]
    for k in range(1, wk.shape[0]):
        acc = acc + wk[k] * vk[k]
    return acc


@njit(cache=True)
def _matmul_kernel(w, v, out):  # pragma: no cover - jitted
    n = w.shape[0]
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(n):
                s += w[i, k] * v[k, j]
            out[i, j] = s


def naive_matmul(w, v) -> np.ndarray:
    """Textbook triple-loop multiply; independent oracle for the identity."""
    wm = as_square(w)
    vm = as_square(v)
    if wm.shape != vm.shape:
        raise DimensionError(f"operand orders differ: {wm.shape[0]} vs {vm.shape[0]}")
    out = np.empty_like(wm)
    if numba_enabled():
        _matmul_kernel(wm, vm, out)
        return out
    n = wm.shape[0]
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(n):
                s += wm[i, k] * vm[k, j]
            out[i, j] = s
    return out
