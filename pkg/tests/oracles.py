"""Brute-force reference solutions shared by the unit and acceptance suites."""

import numpy as np

from secrecy_an.linalg import random_hermitian, random_psd

PAULI = [np.array([[0, 1], [1, 0]], dtype=complex),
         np.array([[0, -1j], [1j, 0]]),
         np.array([[1, 0], [0, -1]], dtype=complex)]


def bloch_instance(seed):
    """min tr(CX) over 2x2 density matrices with one extra trace inequality."""
    r = np.random.default_rng(seed)
    C = random_hermitian(r, 2)
    A = random_psd(r, 2)
    c = np.array([np.trace(C @ s).real / 2 for s in PAULI])
    a = np.array([np.trace(A @ s).real / 2 for s in PAULI])
    c0, a0 = np.trace(C).real / 2, np.trace(A).real / 2
    b = a0 - r.uniform(0.0, 0.9) * np.linalg.norm(a)  # cuts the Bloch ball but keeps it feasible
    return C, A, b, (c0, c, a0, a)


def bloch_oracle(c0, c, a0, a, b, n=1200):
    """Dense grid over the Bloch sphere plus the cap where the cut meets the ball."""
    th = np.linspace(0, np.pi, n)
    ph = np.linspace(0, 2 * np.pi, 2 * n)
    T, P = np.meshgrid(th, ph, indexing="ij")
    pts = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1).reshape(-1, 3)
    best = np.inf
    ok = a0 + pts @ a <= b
    if ok.any():
        best = (c0 + pts[ok] @ c).min()
    # disc {r : a.r = b - a0, |r| <= 1}
    an = np.linalg.norm(a)
    u = a / an
    d = (b - a0) / an
    rad = np.sqrt(max(1 - d * d, 0.0))
    e1 = np.cross(u, [1.0, 0, 0] if abs(u[0]) < 0.9 else [0, 1.0, 0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(u, e1)
    ang = np.linspace(0, 2 * np.pi, 20000)
    rr = np.linspace(0, rad, 400)
    Rr, Aa = np.meshgrid(rr, ang, indexing="ij")
    disc = d * u + Rr[..., None] * (np.cos(Aa)[..., None] * e1 + np.sin(Aa)[..., None] * e2)
    best = min(best, (c0 + disc.reshape(-1, 3) @ c).min())
    return best
