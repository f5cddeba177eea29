"""Worst-case robust design against norm-bounded Eve channel errors.

Eve k's channel is G_k = Gbar_k + D with |D|_F <= eps_k.  By the S-lemma the
semi-infinite Eve constraint becomes one LMI T_k(beta, W, Sigma, t_k) >= 0
with a multiplier t_k >= 0, exact when rank(W) <= 1.  The design problem is
then handled by the same alpha line search as the perfect-CSI case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, PowerConstraints, TransmitDesign, as_generator, bob_mutual_info
from .conic import ConicProgram, SolverSettings, solve
from .linalg import hermitian, numerical_rank
from .srm import (
    GOLDEN,
    RANK_TOL,
    USABLE,
    CCSolution,
    LineSearchSettings,
    _reconstruct,
    alpha_interval,
    search_alpha,
    snap_rank_one,
    usable_status,
)


@dataclass(frozen=True)
class UncertaintyModel:
    """Nominal Eve channels and the Frobenius-norm radius of each error ball."""

    eves: tuple
    radii: tuple

    def __post_init__(self):
        eves = tuple(np.asarray(G, dtype=complex).reshape(np.shape(G)[0], -1) for G in self.eves)
        radii = tuple(float(e) for e in np.broadcast_to(np.asarray(self.radii, dtype=float), (len(eves),)))
        if not eves:
            raise ValueError("at least one eavesdropper is required")
        if any(not e > 0 for e in radii):
            raise ValueError(f"every radius must be positive, got {radii}")
        object.__setattr__(self, "eves", eves)
        object.__setattr__(self, "radii", radii)

    @classmethod
    def around(cls, channels: ChannelSet, eps) -> "UncertaintyModel":
        return cls(channels.eves, eps)

    @property
    def K(self) -> int:
        return len(self.eves)


def _stack(Gbar):
    """B = [Gbar, I] so that B^H M B = [[Gbar^H M Gbar, Gbar^H M], [M Gbar, M]]."""
    return np.hstack([Gbar, np.eye(Gbar.shape[0])])


def build_Tk(beta: float, W, Sigma, t: float, Gbar, eps: float) -> np.ndarray:
    W = np.asarray(W, dtype=complex)
    Sigma = np.asarray(Sigma, dtype=complex)
    Gbar = np.asarray(Gbar, dtype=complex)
    if Gbar.ndim == 1:
        Gbar = Gbar[:, None]
    nt, ne = Gbar.shape
    if W.shape != (nt, nt) or Sigma.shape != (nt, nt):
        raise ValueError(f"W {W.shape} and Sigma {Sigma.shape} must be {nt}x{nt} to match Gbar {Gbar.shape}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    M = (beta - 1.0) * Sigma - W
    B = _stack(Gbar)
    T = B.conj().T @ M @ B
    T[:ne, :ne] += (beta - 1.0 - t) * np.eye(ne)
    T[ne:, ne:] += (t / eps**2) * np.eye(nt)
    return 0.5 * (T + T.conj().T)


# --------------------------------------------------------------------------
# robust Charnes-Cooper SDP and line search
# --------------------------------------------------------------------------

def build_wcr_cc_program(alpha: float, h, uncertainty: UncertaintyModel,
                         constraints: PowerConstraints) -> ConicProgram:
    h = np.asarray(h, dtype=complex).reshape(-1)
    nt = h.size
    prog = ConicProgram(f"wcr-cc-sdp(alpha={alpha!r})")
    Q = prog.hermitian("Q", nt)
    Gm = prog.hermitian("Gamma", nt)
    xi = prog.scalar("xi")
    prog.maximize(xi.expr + Q.quad(h) + Gm.quad(h))
    prog.add_eq(xi.expr + Gm.quad(h), alpha, name="normalization")
    for k, (Gbar, eps) in enumerate(zip(uncertainty.eves, uncertainty.radii)):
        ne = Gbar.shape[1]
        # tau = lambda / eps^2 keeps the coefficients O(1) for tiny and large balls
        tau = prog.scalar(f"tau_{k}")
        B = _stack(Gbar)
        top = np.zeros((ne + nt, ne + nt))
        top[:ne, :ne] = np.eye(ne)
        bottom = np.zeros((ne + nt, ne + nt))
        bottom[ne:, ne:] = np.eye(nt)
        T = (Gm.congruence(B, 1.0 - alpha) - Q.congruence(B, alpha)
             + xi.times((1.0 - alpha) * top) + tau.times(alpha * (bottom - eps**2 * top)))
        prog.add_lmi(T, name=f"eve-{k}")
    prog.add_le(Q.trace() + Gm.trace() - constraints.P * xi, 0.0, name="sum-power")
    for l, (Phi, rho) in enumerate(constraints.shaping):
        prog.add_le(Q.trace_with(Phi) + Gm.trace_with(Phi) - rho * xi, 0.0, name=f"shaping-{l}")
    return prog


def solve_wcr_cc_sdp(alpha: float, h, uncertainty: UncertaintyModel, constraints: PowerConstraints,
                     settings: SolverSettings | None = None) -> CCSolution:
    """phi(alpha) of the robust problem; ``lambdas`` holds t_k = lambda_k / xi."""
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    nt = np.size(h)
    if alpha == 1.0:
        # beta = 1 forces Q = 0 and lambda_k = 0 (the top-left blocks become
        # -lambda I - Gbar^H Q Gbar), so phi(1) = 1 with the zero design
        z = np.zeros((nt, nt), dtype=complex)
        return CCSolution(1.0, "optimal", z, z.copy(), 1.0, 1.0, [0.0] * uncertainty.K)
    res = solve(build_wcr_cc_program(alpha, h, uncertainty, constraints), settings)
    status = usable_status(res, settings)
    if status not in USABLE:
        return CCSolution(alpha, status)
    xi = res["xi"]
    ts = [eps**2 * res[f"tau_{k}"] / xi for k, eps in enumerate(uncertainty.radii)]
    return CCSolution(alpha, status, res["Q"], res["Gamma"], xi, res.objective, ts)


def wcr_line_search(channels: ChannelSet, uncertainty: UncertaintyModel, constraints: PowerConstraints,
                    settings: LineSearchSettings | None = None) -> TransmitDesign:
    """Worst-case robust relaxation maximized over alpha; Bob's channel is channels.h."""
    settings = settings or LineSearchSettings()
    constraints.check_size(channels.nt)
    lo, hi = alpha_interval(channels, constraints)
    best, sols = search_alpha(
        lambda a: solve_wcr_cc_sdp(a, channels.h, uncertainty, constraints, settings.solver), lo, hi, settings)
    design = best.design()
    design.achieved_rate_bits = max(best.rate_bits, 0.0)
    design.info.update(alpha=best.alpha, t=best.lambdas, evaluations=len(sols),
                       failed=sum(1 for s in sols.values() if not s.ok))
    return design


def _robust_eve_lmis(uncertainty, beta, scale=1.0):
    def add(prog, W, S):
        r = math.sqrt(scale)
        for k, (Gbar, eps) in enumerate(zip(uncertainty.eves, uncertainty.radii)):
            Gbar, eps = r * Gbar, r * eps
            ne, nt = Gbar.shape[1], Gbar.shape[0]
            tau = prog.scalar(f"tau_{k}")  # t / eps^2
            B = _stack(Gbar)
            top = np.zeros((ne + nt, ne + nt))
            top[:ne, :ne] = np.eye(ne)
            bottom = np.zeros((ne + nt, ne + nt))
            bottom[ne:, ne:] = np.eye(nt)
            prog.add_lmi(S.congruence(B, beta - 1.0) - W.congruence(B) + (beta - 1.0) * top
                         + tau.times(bottom - eps**2 * top), name=f"eve-{k}")
    return add


def wcr_rank_one_reconstruct(design: TransmitDesign, channels: ChannelSet, uncertainty: UncertaintyModel,
                             constraints: PowerConstraints, achieved_rate_bits: float | None = None,
                             settings: SolverSettings | None = None) -> TransmitDesign:
    """Power-minimization with the robust LMIs; rank <= 1 inputs pass through."""
    if achieved_rate_bits is None:
        achieved_rate_bits = design.achieved_rate_bits
    return _reconstruct(design, channels, constraints,
                        lambda beta, scale: _robust_eve_lmis(uncertainty, beta, scale),
                        achieved_rate_bits, settings)


def wcr_srm(channels: ChannelSet, uncertainty: UncertaintyModel, constraints: PowerConstraints,
            settings: LineSearchSettings | None = None) -> TransmitDesign:
    settings = settings or LineSearchSettings()
    d = wcr_line_search(channels, uncertainty, constraints, settings)
    d = wcr_rank_one_reconstruct(d, channels, uncertainty, constraints, d.achieved_rate_bits, settings.solver)
    return snap_rank_one(d)


# --------------------------------------------------------------------------
# worst-case evaluation of a fixed design
# --------------------------------------------------------------------------

def _golden_max_unimodal(f, a, b, iters):
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    best = max(fc, fd)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
        best = max(best, fc, fd)
        if best >= 0.0 or b - a < 1e-10:
            break
    return best


def tk_certifiable(beta: float, W, Sigma, Gbar, eps: float, tol: float = 0.0):
    """Is there t >= 0 with T_k(beta, W, Sigma, t) PSD?  Returns (feasible, t).

    With s = t/eps^2 and M = (beta-1) Sigma - W = U diag(m) U^H, the Schur
    complement of the bottom-right block is
        S(s) = (beta-1-eps^2 s) I + Gbar^H U diag(m s/(m+s)) U^H Gbar,
    which is matrix-concave in s on s > -min(m).  lambda_min(S(s)) is
    therefore unimodal and is maximized by golden section in log(s - s_lo).
    """
    ne = Gbar.shape[1]
    M = hermitian((beta - 1.0) * Sigma - W, rtol=1e-8)
    m, U = np.linalg.eigh(M)
    if m[0] >= 0.0:
        return True, 0.0
    V = U.conj().T @ Gbar  # rows indexed like m
    s_lo = -m[0]

    def f(u):
        r = math.exp(u)  # s - s_lo, kept separate so m + s never cancels to zero
        s = s_lo + r
        d = m * s / ((m - m[0]) + r)
        S = (V.conj().T * d) @ V
        S = 0.5 * (S + S.conj().T) + (beta - 1.0 - eps**2 * s) * np.eye(ne)
        return float(np.linalg.eigvalsh(S)[0])

    # beyond s_hi the -eps^2 s term alone makes S negative definite
    gpos = (V.conj().T * np.maximum(m, 0.0)) @ V
    s_hi = (beta - 1.0 + float(np.linalg.eigvalsh(0.5 * (gpos + gpos.conj().T))[-1])) / eps**2
    if s_hi <= s_lo:
        return False, math.nan
    top = math.log(s_hi - s_lo)
    fmax = _golden_max_unimodal(f, top - 80.0, top, 200)
    return fmax >= -tol, math.nan


def worst_case_beta(W, Sigma, Gbar, eps: float, rel_tol: float = 1e-12) -> float:
    """Smallest beta >= 1 (to rel_tol) whose T_k LMI is certifiable; an upper end of the bracket."""
    W = np.asarray(W, dtype=complex)
    Sigma = np.asarray(Sigma, dtype=complex)
    Gbar = np.asarray(Gbar, dtype=complex)
    if Gbar.ndim == 1:
        Gbar = Gbar[:, None]
    feasible = lambda b: tk_certifiable(b, W, Sigma, Gbar, eps)[0]  # noqa: E731
    if feasible(1.0):
        return 1.0
    lo, hi = 1.0, 2.0
    while not feasible(hi):
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise ArithmeticError("could not bracket the worst-case Eve information")
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def worst_case_rate(design: TransmitDesign, h, uncertainty: UncertaintyModel) -> float:
    """C_b - log2(max_k beta_k) over the error balls; needs rank(W) <= 1."""
    if numerical_rank(design.W, RANK_TOL) > 1:
        raise ValueError("worst-case evaluation needs rank(W) <= 1; a higher-rank W only gives a bound")
    cb = bob_mutual_info(design, ChannelSet(h, uncertainty.eves))
    betas = [worst_case_beta(design.W, design.Sigma, G, e) for G, e in zip(uncertainty.eves, uncertainty.radii)]
    return cb - math.log2(max(betas))


# --------------------------------------------------------------------------
# sampling oracles
# --------------------------------------------------------------------------

def sample_ball(rng, shape, eps: float, n: int, boundary_fraction: float = 0.5) -> np.ndarray:
    """n complex matrices with Frobenius norm <= eps.

    The first ``n - n_boundary`` are uniform in the ball (Gaussian direction,
    radius eps u^(1/dim) with dim = 2 * entries), the rest lie on the sphere.
    """
    shape = tuple(shape)
    dim = 2 * int(np.prod(shape))
    z = rng.standard_normal((n,) + shape + (2,))
    D = z[..., 0] + 1j * z[..., 1]
    norms = np.sqrt(np.sum(np.abs(D) ** 2, axis=tuple(range(1, D.ndim))))
    n_boundary = int(round(boundary_fraction * n))
    radius = eps * rng.random(n) ** (1.0 / dim)
    radius[n - n_boundary:] = eps
    scale = (radius / norms).reshape((n,) + (1,) * len(shape))
    return D * scale


def verify_prop2_sampling(beta: float, W, Sigma, uncertainty: UncertaintyModel, n_samples: int,
                          seed=0, slack: float = 1e-8, boundary_fraction: float = 0.5) -> int:
    """Count ball samples where (beta-1)(I + G^H S G) - G^H W G has lambda_min < -slack."""
    rng = as_generator(seed, "prop2")
    W = np.asarray(W, dtype=complex)
    Sigma = np.asarray(Sigma, dtype=complex)
    M = (beta - 1.0) * Sigma - W
    violations = 0
    for Gbar, eps in zip(uncertainty.eves, uncertainty.radii):
        ne = Gbar.shape[1]
        G = Gbar[None] + sample_ball(rng, Gbar.shape, eps, n_samples, boundary_fraction)
        A = np.conj(np.swapaxes(G, 1, 2)) @ M @ G + (beta - 1.0) * np.eye(ne)
        lam = np.linalg.eigvalsh(0.5 * (A + np.conj(np.swapaxes(A, 1, 2))))[:, 0]
        violations += int(np.count_nonzero(lam < -slack))
    return violations


def sampled_rates(design: TransmitDesign, h, eves_samples) -> np.ndarray:
    """Secrecy rate for each joint draw; ``eves_samples[k]`` has shape (n, N_t, N_e,k)."""
    h = np.asarray(h, dtype=complex)
    cb = float(np.log2(1.0 + np.real(np.vdot(h, design.W @ h)) / (1.0 + np.real(np.vdot(h, design.Sigma @ h)))))
    ce = None
    for G in eves_samples:
        Gh = np.conj(np.swapaxes(G, 1, 2))
        ne = G.shape[2]
        N = np.eye(ne) + Gh @ design.Sigma @ G
        L = np.linalg.cholesky(0.5 * (N + np.conj(np.swapaxes(N, 1, 2))))
        S = Gh @ design.W @ G
        B = np.linalg.solve(L, S)
        B = np.conj(np.swapaxes(np.linalg.solve(L, np.conj(np.swapaxes(B, 1, 2))), 1, 2))
        lam = np.linalg.eigvalsh(0.5 * (B + np.conj(np.swapaxes(B, 1, 2))))
        c = np.sum(np.log2(1.0 + np.maximum(lam, 0.0)), axis=1)
        ce = c if ce is None else np.maximum(ce, c)
    return cb - ce


def sampled_worst_rate(design: TransmitDesign, h, uncertainty: UncertaintyModel, n_samples: int,
                       seed=0, boundary_fraction: float = 0.5) -> float:
    """Minimum secrecy rate over ball samples, taken Eve by Eve (the worst case is per Eve)."""
    rng = as_generator(seed, "ball")
    worst = math.inf
    for Gbar, eps in zip(uncertainty.eves, uncertainty.radii):
        G = Gbar[None] + sample_ball(rng, Gbar.shape, eps, n_samples, boundary_fraction)
        worst = min(worst, float(np.min(sampled_rates(design, h, [G]))))
    return worst
