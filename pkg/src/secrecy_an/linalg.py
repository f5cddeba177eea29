"""Hermitian matrix primitives shared by the solver and the design code.

Matrices are plain ``numpy`` complex arrays (row-major, interleaved real and
imaginary parts).  Everything here is dense; the largest matrix the pipeline
touches is a few tens of rows.
"""

from __future__ import annotations

import numpy as np

HERMITIAN_RTOL = 1e-12


class NotHermitianError(ValueError):
    pass


def hermitian(A, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Validate and symmetrize a square matrix.

    Asymmetry up to ``rtol`` (relative to the Frobenius norm) is absorbed by
    returning ``(A + A^H) / 2``; anything larger raises NotHermitianError.
    """
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotHermitianError(f"expected a square matrix, got shape {A.shape}")
    scale = max(np.linalg.norm(A), 1.0)
    asym = np.linalg.norm(A - A.conj().T)
    if asym > rtol * scale:
        raise NotHermitianError(f"matrix is not Hermitian (asymmetry {asym:.3e})")
    return 0.5 * (A + A.conj().T)


def hermitian_eig(A):
    """Eigenvalues (descending) and unitary eigenvectors of a Hermitian matrix."""
    A = hermitian(A)
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"Hermitian eigensolver failed: {exc}") from exc
    return w[::-1].copy(), V[:, ::-1].copy()


def is_psd(A, tol: float = 0.0) -> bool:
    A = hermitian(A)
    if A.size == 0:
        return True
    lam_min = np.linalg.eigvalsh(A)[0]
    return bool(lam_min >= -tol * max(1.0, np.linalg.norm(A)))


def numerical_rank(A, rel_tol: float = 1e-6) -> int:
    """Number of eigenvalues at or above ``rel_tol * lambda_max``."""
    w = np.linalg.eigvalsh(hermitian(A))
    lam_max = w[-1] if w.size else 0.0
    if lam_max <= 0.0:
        return 0
    return int(np.count_nonzero(w >= rel_tol * lam_max))


def real_embed(A) -> np.ndarray:
    """Map Hermitian A to the real symmetric matrix [[Re A, -Im A], [Im A, Re A]]."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    re, im = A.real, A.imag
    return np.block([[re, -im], [im, re]])


def real_collapse(Y) -> np.ndarray:
    """Left inverse of :func:`real_embed` that maps PSD matrices to PSD matrices.

    For an arbitrary real symmetric Y of size 2n this averages the two diagonal
    blocks; ``real_collapse(real_embed(A)) == A``.
    """
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0] // 2
    Y11, Y12 = Y[:n, :n], Y[:n, n:]
    Y21, Y22 = Y[n:, :n], Y[n:, n:]
    return 0.5 * ((Y11 + Y22) + 1j * (Y21 - Y12))


def psd_sqrt(A) -> np.ndarray:
    w, V = np.linalg.eigh(hermitian(A))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T


def principal_vector(A) -> np.ndarray:
    """Vector v with v v^H equal to the best rank-one approximation of PSD A."""
    w, V = np.linalg.eigh(hermitian(A))
    return V[:, -1] * np.sqrt(max(w[-1], 0.0))


def random_hermitian(rng, n: int) -> np.ndarray:
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (X + X.conj().T)


def random_psd(rng, n: int, rank: int | None = None) -> np.ndarray:
    r = n if rank is None else rank
    X = (rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))) / np.sqrt(2)
    return X @ X.conj().T


def random_unitary(rng, n: int) -> np.ndarray:
    X = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    Q, R = np.linalg.qr(X)
    d = np.diagonal(R)
    return Q * (d / np.abs(d))
