import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from secrecy_an.linalg import (
    NotHermitianError,
    hermitian,
    hermitian_eig,
    is_psd,
    numerical_rank,
    random_hermitian,
    random_psd,
    real_collapse,
    real_embed,
)


def test_eig_identity():
    w, V = hermitian_eig(np.eye(3))
    assert np.allclose(w, [1, 1, 1])
    assert np.allclose(V.conj().T @ V, np.eye(3))


def test_eig_diagonal_sorted_descending():
    w, _ = hermitian_eig(np.diag([2.0, -1.0]))
    assert np.allclose(w, [2, -1])


def test_eig_pauli_y():
    w, _ = hermitian_eig(np.array([[0, 1j], [-1j, 0]]))
    assert np.allclose(w, [1, -1])


def test_construction_symmetrizes_small_asymmetry():
    A = np.array([[1.0, 2.0 + 1e-14], [2.0, 3.0]])
    H = hermitian(A)
    assert np.array_equal(H, H.conj().T)


def test_construction_rejects_asymmetry():
    with pytest.raises(NotHermitianError):
        hermitian(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NotHermitianError):
        hermitian(np.ones((2, 3)))


def test_is_psd_examples():
    assert is_psd(np.zeros((2, 2)), 0.0)
    assert not is_psd(np.diag([1.0, -1e-3]), 0.0)
    assert is_psd(np.diag([1.0, -1e-3]), 1e-2)


def test_numerical_rank_examples():
    v = np.array([1, 2j])
    assert numerical_rank(np.outer(v, v.conj())) == 1
    assert numerical_rank(np.eye(4), 1e-6) == 4
    assert numerical_rank(np.diag([1.0, 1e-9]), 1e-6) == 1
    assert numerical_rank(np.zeros((3, 3))) == 0


def test_real_embed_examples():
    A = np.diag([1.0, 2.0])
    assert np.array_equal(real_embed(A), np.block([[A, 0 * A], [0 * A, A]]))
    w = np.linalg.eigvalsh(real_embed(np.array([[0, 1j], [-1j, 0]])))
    assert np.allclose(w, [-1, -1, 1, 1])
    assert np.array_equal(real_embed(np.zeros((3, 3))), np.zeros((6, 6)))


def test_real_collapse_inverts_embed(rng):
    A = random_hermitian(rng, 4)
    assert np.allclose(real_collapse(real_embed(A)), A)


def test_eig_reconstruction_and_embedding_spectrum(rng):
    for _ in range(1000):
        n = rng.integers(1, 7)
        A = random_hermitian(rng, n)
        w, V = hermitian_eig(A)
        err = np.linalg.norm(V @ np.diag(w) @ V.conj().T - A)
        assert err <= 1e-10 * np.linalg.norm(A)
        we = np.sort(np.linalg.eigvalsh(real_embed(A)))
        assert np.allclose(we, np.sort(np.repeat(w, 2)), atol=1e-10 * np.linalg.norm(A))


def test_embedding_trace_identity(rng):
    for _ in range(50):
        A, B = random_hermitian(rng, 3), random_hermitian(rng, 3)
        lhs = np.trace(real_embed(A) @ real_embed(B))
        assert np.isclose(lhs, 2 * np.trace(A @ B).real)


@given(st.floats(-10, 10), st.integers(0, 2**31))
def test_embedding_is_linear(a, seed):
    r = np.random.default_rng(seed)
    A, B = random_hermitian(r, 3), random_hermitian(r, 3)
    assert np.allclose(real_embed(a * A + B), a * real_embed(A) + real_embed(B), atol=1e-12)


@given(st.integers(1, 5), st.integers(0, 2**31))
def test_embedding_preserves_psd(n, seed):
    r = np.random.default_rng(seed)
    A = random_psd(r, n)
    assert is_psd(real_embed(A), 1e-12)
    B = A - 2 * np.linalg.eigvalsh(A)[-1] * np.eye(n)
    assert not is_psd(real_embed(B), 1e-12)


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31))
def test_det_bound(n, r, seed):
    gen = np.random.default_rng(seed)
    A = random_psd(gen, n, min(r, n))
    det = np.linalg.det(np.eye(n) + A).real
    assert det >= (1 + np.trace(A).real) * (1 - 1e-12)
    if numerical_rank(A) <= 1:
        assert det == pytest.approx(1 + np.trace(A).real, rel=1e-9)
    else:
        assert det > 1 + np.trace(A).real
