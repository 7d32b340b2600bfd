import os

import numpy as np
import pytest

from proud.errors import DimensionError
from proud.permute import (
    naive_matmul,
    permut_input,
    permut_weights,
    permuted_matmul,
    phi_k,
    psi_k,
    sigma,
    tau,
)


def test_sigma_2x2_frozen():
    a = np.array([["a", "b"], ["c", "d"]], dtype=object)
    # sigma keeps row 0, rotates row 1 left by one
    out = np.empty((2, 2), dtype=object)
    for i in range(2):
        for j in range(2):
            out[i, j] = a[i, (i + j) % 2]
    assert out.tolist() == [["a", "b"], ["d", "c"]]
    num = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert sigma(num).tolist() == [[1.0, 2.0], [4.0, 3.0]]


def test_tau_2x2_frozen():
    num = np.array([[1.0, 2.0], [3.0, 4.0]])
    # columns rotate upward with increasing column index
    assert tau(num).tolist() == [[1.0, 4.0], [3.0, 2.0]]


def test_permut_weights_2x2_frozen():
    w = np.array([[1.0, 2.0], [3.0, 4.0]])
    wk = permut_weights(w)
    assert wk.shape == (2, 2, 2)
    assert wk[0].tolist() == [[1.0, 2.0], [4.0, 3.0]]
    assert wk[1].tolist() == [[2.0, 1.0], [3.0, 4.0]]


def test_naive_matmul_2x2_frozen():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[5.0, 6.0], [7.0, 8.0]])
    assert naive_matmul(a, b).tolist() == [[19.0, 22.0], [43.0, 50.0]]


def test_identity_matches_naive_float():
    rng = np.random.default_rng(7)
    for n in range(1, 17):
        for _ in range(5):
            w = rng.uniform(-1, 1, (n, n))
            v = rng.uniform(-1, 1, (n, n))
            got = permuted_matmul(w, v)
            ref = naive_matmul(w, v)
            scale = max(np.abs(ref).max(), 1.0)
            assert np.abs(got - ref).max() / scale < 1e-12, f"n={n}"


def test_identity_exact_on_integers():
    """Integer entries make every float op exact, so the two routes must
    agree bit for bit."""
    rng = np.random.default_rng(11)
    for n in (1, 2, 3, 5, 8, 13, 16):
        w = rng.integers(-8, 9, (n, n)).astype(np.float64)
        v = rng.integers(-8, 9, (n, n)).astype(np.float64)
        assert np.array_equal(permuted_matmul(w, v), naive_matmul(w, v))


def test_shift_term_structure():
    # k-th summand is phi^k(sigma(W)) * psi^k(tau(V)) elementwise
    rng = np.random.default_rng(3)
    n = 6
    w = rng.uniform(-1, 1, (n, n))
    v = rng.uniform(-1, 1, (n, n))
    wk = permut_weights(w)
    vk = permut_input(v)
    for k in range(n):
        assert np.array_equal(wk[k], phi_k(sigma(w), k))
        assert np.array_equal(vk[k], psi_k(tau(v), k))
    total = sum(wk[k] * vk[k] for k in range(n))
    assert np.allclose(total, w @ v, atol=1e-12)


def test_phi_psi_are_cyclic_groups():
    rng = np.random.default_rng(5)
    a = rng.uniform(-1, 1, (7, 7))
    assert np.array_equal(phi_k(a, 7), a)
    assert np.array_equal(psi_k(a, 7), a)
    assert np.array_equal(phi_k(phi_k(a, 2), 3), phi_k(a, 5))
    assert np.array_equal(psi_k(psi_k(a, 4), 4), psi_k(a, 1))


def test_sigma_tau_preserve_multisets():
    rng = np.random.default_rng(9)
    a = rng.uniform(-1, 1, (5, 5))
    for f in (sigma, tau):
        b = f(a)
        assert sorted(a.ravel()) == sorted(b.ravel())
    # sigma permutes within rows, tau within columns
    for i in range(5):
        assert sorted(sigma(a)[i]) == sorted(a[i])
    for j in range(5):
        assert sorted(tau(a)[:, j]) == sorted(a[:, j])


def test_n1_trivial():
    one = np.array([[3.5]])
    assert sigma(one).tolist() == [[3.5]]
    assert tau(one).tolist() == [[3.5]]
    assert permuted_matmul(one, np.array([[2.0]])).tolist() == [[7.0]]


def test_rejects_bad_shapes():
    with pytest.raises(DimensionError):
        sigma(np.zeros((2, 3)))
    with pytest.raises(DimensionError):
        naive_matmul(np.zeros((2, 2)), np.zeros((3, 3)))
    with pytest.raises(DimensionError):
        tau(np.array([1.0, 2.0]))
    with pytest.raises(DimensionError):
        sigma(np.array([[1.0, np.inf], [0.0, 0.0]]))


def test_naive_matmul_fallback_matches(monkeypatch):
    monkeypatch.setenv("PROUD_NO_NUMBA", "1")
    rng = np.random.default_rng(21)
    w = rng.integers(-8, 9, (9, 9)).astype(np.float64)
    v = rng.integers(-8, 9, (9, 9)).astype(np.float64)
    slow = naive_matmul(w, v)
    monkeypatch.delenv("PROUD_NO_NUMBA")
    assert np.array_equal(slow, naive_matmul(w, v))
    assert os.environ.get("PROUD_NO_NUMBA") is None
