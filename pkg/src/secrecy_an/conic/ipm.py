"""Primal-dual path-following interior-point method for dense real SDPs.

Standard form::

    primal   min c.x   s.t. A x = b, x in K
    dual     max b.y   s.t. c - A^T y = z, z in K

with K a product of a nonnegative orthant and real symmetric PSD cones
(blocks in scaled ``svec`` coordinates).  Search direction is HKM with a
Mehrotra predictor-corrector, started from an infeasible interior point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .program import smat, svec


@dataclass
class SolverSettings:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-7
    max_iter: int = 200
    infeas_ratio: float = 1e6
    infeas_patience: int = 10
    stall_window: int = 25


@dataclass
class IPMOutput:
    status: str
    x_lp: np.ndarray
    X: list
    y: np.ndarray
    z_lp: np.ndarray
    Z: list
    iterations: int
    primal_res: float
    dual_res: float
    gap: float
    pobj: float
    dobj: float
    history: list = field(default_factory=list)


class _Blocks:
    """Same-size SDP blocks stacked for batched linear algebra."""

    def __init__(self, A, c, lp_dim, sizes):
        self.lp_dim = lp_dim
        self.sizes = list(sizes)
        m = A.shape[0]
        self.A_lp = A[:, :lp_dim]
        self.c_lp = c[:lp_dim]
        offsets = []
        col = lp_dim
        for n in self.sizes:
            d = n * (n + 1) // 2
            offsets.append((col, col + d))
            col += d
        self.offsets = offsets
        self.groups = {}
        for j, n in enumerate(self.sizes):
            self.groups.setdefault(n, []).append(j)
        self.Amat = {}
        self.Aflat = {}
        self.Cmat = {}
        for n, idx in self.groups.items():
            As = np.stack([smat(A[:, offsets[j][0]:offsets[j][1]], n) for j in idx])  # g,m,n,n
            self.Amat[n] = As
            self.Aflat[n] = As.reshape(len(idx), m, n * n)
            self.Cmat[n] = np.stack([smat(c[offsets[j][0]:offsets[j][1]], n) for j in idx])
        # (g*n*n, m) and (m, g*n*n) layouts for fast A / A^T products
        self.AflatT = {n: np.ascontiguousarray(Af.transpose(0, 2, 1).reshape(-1, m))
                       for n, Af in self.Aflat.items()}
        self.Astack = {n: np.ascontiguousarray(Af.transpose(1, 0, 2).reshape(m, -1))
                       for n, Af in self.Aflat.items()}
        self.shapes = {n: (len(idx), n, n) for n, idx in self.groups.items()}
        self.m = m

    def apply_A(self, v_lp, V):
        out = self.A_lp @ v_lp
        for n, Af in self.AflatT.items():
            out = out + (V[n].reshape(1, -1) @ Af)[0]
        return out

    def apply_At(self, y):
        lp = y @ self.A_lp
        mats = {n: (y @ Af).reshape(self.shapes[n]) for n, Af in self.Astack.items()}
        return lp, mats

    def inner(self, u_lp, U, v_lp, V):
        s = float(u_lp @ v_lp)
        for n in U:
            s += float(np.sum(U[n] * V[n]))
        return s


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _max_step_lp(x, dx):
    neg = dx < 0
    if not np.any(neg):
        return math.inf
    return float(np.min(-x[neg] / dx[neg]))


def _inv_chol(X):
    """Inverse Cholesky factors of a stack of PD matrices (None if not PD)."""
    try:
        return np.linalg.inv(np.linalg.cholesky(X))
    except np.linalg.LinAlgError:
        return None


def _max_step_sdp(Li, dX):
    """Largest a with X + a dX PSD, given Li = inv(chol(X))."""
    if Li is None:
        return 0.0
    M = Li @ dX @ np.swapaxes(Li, -1, -2)
    lam = np.linalg.eigvalsh(_sym(M))[:, 0]
    lo = float(np.min(lam))
    return math.inf if lo >= 0 else -1.0 / lo


def solve_standard(c, A, b, lp_dim, sdp_sizes, settings=None) -> IPMOutput:
    s = settings or SolverSettings()
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m = A.shape[0]
    blk = _Blocks(A, c, lp_dim, sdp_sizes)
    nu = lp_dim + sum(sdp_sizes)

    if nu == 0:
        return IPMOutput("optimal", np.zeros(0), [], np.zeros(m), np.zeros(0), [], 0,
                         float(np.linalg.norm(b)), 0.0, 0.0, 0.0, 0.0)

    # infeasible starting point in the spirit of SDPT3
    normA = max(1.0, float(np.max(np.linalg.norm(A, axis=1)))) if m else 1.0
    normb = float(np.max(np.abs(b))) if m else 0.0
    normc = float(np.linalg.norm(c))
    dim = max(sdp_sizes + [1])
    zeta = max(10.0, math.sqrt(dim), dim * (1.0 + normb) / (1.0 + normA))
    eta = max(10.0, math.sqrt(dim), normA, normc)

    x = np.full(lp_dim, zeta)
    z = np.full(lp_dim, eta)
    X = {n: np.tile(zeta * np.eye(n), (len(idx), 1, 1)) for n, idx in blk.groups.items()}
    Z = {n: np.tile(eta * np.eye(n), (len(idx), 1, 1)) for n, idx in blk.groups.items()}
    y = np.zeros(m)
    C = blk.Cmat

    history = []
    status = "numerical-failure"
    pinf_count = dinf_count = 0
    best = None
    it = 0

    def residuals():
        rp = b - blk.apply_A(x, X)
        At_lp, At = blk.apply_At(y)
        rd_lp = blk.c_lp - At_lp - z
        Rd = {n: C[n] - At[n] - Z[n] for n in X}
        return rp, rd_lp, Rd

    # The problem solved by callers sits on the dual side, so the dual
    # residual is held to the absolute tolerance.  The primal residual carries
    # the caller's multipliers and is measured as a normwise backward error,
    # |b - A x| / (1 + |b| + |A| |x|): near the optimum x grows along the
    # directions where z vanishes and the absolute residual stalls at a level
    # set by the conditioning of the Schur system, not by the iterate's quality.
    normb = float(np.linalg.norm(b))
    normA2 = float(np.linalg.norm(A, 2)) if m else 0.0
    for it in range(s.max_iter + 1):
        rp, rd_lp, Rd = residuals()
        xnorm = math.sqrt(float(x @ x) + sum(float(np.sum(Xn * Xn)) for Xn in X.values()))
        pres = float(np.linalg.norm(rp)) / (1.0 + normb + normA2 * xnorm)
        dres = math.sqrt(float(rd_lp @ rd_lp) + sum(float(np.sum(R * R)) for R in Rd.values()))
        comp = blk.inner(x, X, z, Z)
        mu = comp / nu
        pobj = blk.inner(blk.c_lp, C, x, X)
        dobj = float(b @ y)
        gap = max(abs(pobj - dobj), comp)
        history.append((pres, dres, gap))

        if pres <= s.feas_tol and dres <= s.feas_tol and gap <= s.gap_tol * (1.0 + abs(pobj)):
            status = "optimal"
            break

        score = max(pres / s.feas_tol, dres / s.feas_tol, gap / (s.gap_tol * (1.0 + abs(pobj))))
        if best is None or score < best[0]:
            best = (score, it, x, X, y, z, Z, len(history))
        elif it - best[1] > s.stall_window:
            break

        # infeasibility certificates: dual ray (b.y unbounded) or primal ray (c.x unbounded)
        At_lp, At = blk.apply_At(y)
        ray_d = math.sqrt(float(np.sum((At_lp + z) ** 2)) + sum(float(np.sum((At[n] + Z[n]) ** 2)) for n in X))
        if dobj > s.infeas_ratio * (1.0 + ray_d):
            pinf_count += 1
        else:
            pinf_count = 0
        ray_p = float(np.linalg.norm(b - rp))
        if -pobj > s.infeas_ratio * (1.0 + ray_p):
            dinf_count += 1
        else:
            dinf_count = 0
        if pinf_count >= s.infeas_patience:
            status = "infeasible"
            break
        if dinf_count >= s.infeas_patience:
            status = "unbounded"
            break
        if it == s.max_iter:
            break

        # Schur complement  M_ij = <A_i, X A_j Z^-1> (+ LP part)
        LXi = {n: _inv_chol(X[n]) for n in X}
        LZi = {n: _inv_chol(Z[n]) for n in Z}
        if any(L is None for L in LXi.values()) or any(L is None for L in LZi.values()):
            break
        Zinv = {n: np.swapaxes(L, -1, -2) @ L for n, L in LZi.items()}
        zinv = 1.0 / z
        M = (blk.A_lp * (x * zinv)) @ blk.A_lp.T
        for n, Am in blk.Amat.items():
            T = X[n][:, None] @ Am @ Zinv[n][:, None]
            M = M + T.transpose(1, 0, 2, 3).reshape(m, -1) @ blk.Astack[n].T
        M = 0.5 * (M + M.T)
        try:
            factor = scipy.linalg.cho_factor(M, check_finite=False)
            solve_M = lambda r: scipy.linalg.cho_solve(factor, r, check_finite=False)  # noqa: E731
        except (np.linalg.LinAlgError, ValueError):
            try:
                lu = scipy.linalg.lu_factor(M + 1e-14 * np.trace(M) * np.eye(m), check_finite=False)
                solve_M = lambda r: scipy.linalg.lu_solve(lu, r, check_finite=False)  # noqa: E731
            except (np.linalg.LinAlgError, ValueError):
                break

        XRdZ = {n: X[n] @ Rd[n] @ Zinv[n] for n in X}
        base_lp = x * rd_lp * zinv

        def direction(rc_lp, Rc):
            rhs = rp - blk.apply_A(rc_lp, Rc) + blk.apply_A(base_lp, XRdZ)
            dy = solve_M(rhs)
            dy = dy + solve_M(rhs - M @ dy)  # one refinement step
            At_lp, At = blk.apply_At(dy)
            dz = rd_lp - At_lp
            dZ = {n: Rd[n] - At[n] for n in X}
            dx = rc_lp - x * dz * zinv
            dX = {n: Rc[n] - _sym(X[n] @ dZ[n] @ Zinv[n]) for n in X}
            return dx, dX, dy, dz, dZ

        def steps(dx, dX, dz, dZ):
            ap = _max_step_lp(x, dx)
            ad = _max_step_lp(z, dz)
            for n in X:
                ap = min(ap, _max_step_sdp(LXi[n], dX[n]))
                ad = min(ad, _max_step_sdp(LZi[n], dZ[n]))
            return ap, ad

        # predictor
        dx, dX, dy, dz, dZ = direction(-x, {n: -X[n] for n in X})
        ap, ad = steps(dx, dX, dz, dZ)
        ap, ad = min(1.0, ap), min(1.0, ad)
        comp_aff = blk.inner(x + ap * dx, {n: X[n] + ap * dX[n] for n in X},
                             z + ad * dz, {n: Z[n] + ad * dZ[n] for n in X})
        sigma = min(1.0, max(0.0, (comp_aff / comp) ** 3)) if comp > 0 else 0.0
        # corrector
        smu = sigma * mu
        rc_lp = (smu - x * z - dx * dz) * zinv
        Rc = {n: smu * Zinv[n] - X[n] - _sym(dX[n] @ dZ[n] @ Zinv[n]) for n in X}
        dx, dX, dy, dz, dZ = direction(rc_lp, Rc)
        ap, ad = steps(dx, dX, dz, dZ)
        gamma = 0.9 + 0.09 * min(ap, ad, 1.0)
        ap, ad = min(1.0, gamma * ap), min(1.0, gamma * ad)
        if ap < 1e-12 and ad < 1e-12:
            break

        x = x + ap * dx
        X = {n: _sym(X[n] + ap * dX[n]) for n in X}
        y = y + ad * dy
        z = z + ad * dz
        Z = {n: _sym(Z[n] + ad * dZ[n]) for n in Z}

    # a stalled run hands back its best iterate rather than the last one
    if status == "numerical-failure" and best is not None and best[-1] != len(history):
        _, _, x, X, y, z, Z, keep = best
        history.append(history[keep - 1])

    # unstack blocks back to the caller's order
    Xl = [None] * len(blk.sizes)
    Zl = [None] * len(blk.sizes)
    for n, idx in blk.groups.items():
        for g, j in enumerate(idx):
            Xl[j] = X[n][g]
            Zl[j] = Z[n][g]
    pres, dres, gap = history[-1]
    return IPMOutput(status, x, Xl, y, z, Zl, it, pres, dres, gap,
                     blk.inner(blk.c_lp, C, x, X), float(b @ y), history)


def stack_primal(out: IPMOutput) -> np.ndarray:
    """Primal point as one standard-form vector."""
    return np.concatenate([out.x_lp] + [svec(Xj) for Xj in out.X])
