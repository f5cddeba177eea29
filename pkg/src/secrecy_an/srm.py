"""Perfect-CSI secrecy rate maximization with artificial noise.

For a fixed ``alpha = 1/beta`` the relaxed problem is a linear-fractional
SDP; the Charnes-Cooper substitution W = Q/xi, Sigma = Gamma/xi makes it a
plain SDP whose value is phi(alpha).  The rate is then maximized over alpha
by a grid scan followed by golden-section refinement, and a power
minimization SDP turns a higher-rank optimum into a beamforming one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet, PowerConstraints, TransmitDesign
from .conic import ConicProgram, SolverSettings, near_optimal, solve
from .linalg import hermitian, numerical_rank

RANK_TOL = 1e-6
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class SolverFailure(RuntimeError):
    """An SDP that should be solvable came back without an optimal status."""


# "near-optimal": the solver stalled just short of its gap target with both
# residuals met (see conic.near_optimal); the value is good to ~1e-5 relative
USABLE = ("optimal", "near-optimal")


def usable_status(res, settings=None) -> str:
    if res.ok:
        return "optimal"
    return "near-optimal" if near_optimal(res, settings) else res.status


@dataclass
class LineSearchSettings:
    grid_points: int = 200
    refinement: str = "golden"  # or "none"
    tol: float = 1e-4
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.grid_points < 2:
            raise ValueError("grid_points must be at least 2")
        if self.refinement not in ("golden", "none"):
            raise ValueError(f"unknown refinement {self.refinement!r}")


@dataclass
class CCSolution:
    alpha: float
    status: str
    Q: np.ndarray | None = None
    Gamma: np.ndarray | None = None
    xi: float = math.nan
    phi: float = -math.inf
    lambdas: list | None = None  # robust problem only

    @property
    def ok(self) -> bool:
        return self.status in USABLE and self.xi > 0

    @property
    def rate_bits(self) -> float:
        return math.log2(self.phi) if self.ok and self.phi > 0 else -math.inf

    def design(self) -> TransmitDesign:
        return TransmitDesign(_clip_psd(self.Q / self.xi), _clip_psd(self.Gamma / self.xi),
                              beta=1.0 / self.alpha, achieved_rate_bits=self.rate_bits)


def _clip_psd(A) -> np.ndarray:
    """Drop the tiny negative eigenvalues an interior-point solution can carry."""
    A = hermitian(A, rtol=1e-8)
    lam, V = np.linalg.eigh(A)
    if lam[0] >= 0:
        return A
    return hermitian((V * np.maximum(lam, 0.0)) @ V.conj().T)


def alpha_interval(channels: ChannelSet, constraints: PowerConstraints) -> tuple:
    """Admissible range of alpha = 1/beta: [(1 + P |h|^2)^-1, 1]."""
    hh = float(np.vdot(channels.h, channels.h).real)
    return 1.0 / (1.0 + constraints.P * hh), 1.0


def _add_power(prog, S, xi, constraints):
    """tr(S) <= P xi and tr(Phi_l S) <= rho_l xi, S = Q + Gamma as an affine expression."""
    prog.add_le(S["trace"] - constraints.P * xi, 0.0, name="sum-power")
    for l, (Phi, rho) in enumerate(constraints.shaping):
        prog.add_le(S["shaped"][l] - rho * xi, 0.0, name=f"shaping-{l}")


def _power_terms(blocks, constraints):
    tr = sum(B.trace() for B in blocks)
    shaped = [sum(B.trace_with(Phi) for B in blocks) for Phi, _ in constraints.shaping]
    return {"trace": tr, "shaped": shaped}


def build_cc_program(alpha: float, channels: ChannelSet, constraints: PowerConstraints,
                     with_an: bool = True) -> ConicProgram:
    h = channels.h
    prog = ConicProgram(f"cc-sdp(alpha={alpha!r})")
    Q = prog.hermitian("Q", channels.nt)
    xi = prog.scalar("xi")
    if with_an:
        Gm = prog.hermitian("Gamma", channels.nt)
        prog.maximize(xi.expr + Q.quad(h) + Gm.quad(h))
        prog.add_eq(xi.expr + Gm.quad(h), alpha, name="normalization")
    else:
        prog.maximize(xi.expr + Q.quad(h))
        prog.add_eq(xi.expr, alpha, name="normalization")
    for k, G in enumerate(channels.eves):
        lhs = xi.times((1.0 - alpha) * np.eye(G.shape[1])) - Q.congruence(G, alpha)
        if with_an:
            lhs = lhs + Gm.congruence(G, 1.0 - alpha)
        prog.add_lmi(lhs, name=f"eve-{k}")
    _add_power(prog, _power_terms([Q, Gm] if with_an else [Q], constraints), xi, constraints)
    return prog


def solve_cc_sdp(alpha: float, channels: ChannelSet, constraints: PowerConstraints,
                 settings: SolverSettings | None = None, with_an: bool = True) -> CCSolution:
    """phi(alpha) and the scaled variables; a non-optimal status is returned, not raised."""
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if alpha == 1.0:
        return _solve_cc_alpha_one(channels, constraints, settings, with_an)
    prog = build_cc_program(alpha, channels, constraints, with_an)
    res = solve(prog, settings)
    status = usable_status(res, settings)
    if status not in USABLE:
        return CCSolution(alpha, status)
    Gamma = res["Gamma"] if with_an else np.zeros((channels.nt, channels.nt), dtype=complex)
    return CCSolution(alpha, status, res["Q"], Gamma, res["xi"], res.objective)


def common_nullspace(eves, rtol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of the vectors orthogonal to every Eve channel (N_t x d)."""
    Gall = np.hstack(eves)
    U, sv, _ = np.linalg.svd(Gall, full_matrices=True)
    rank = int(np.count_nonzero(sv > rtol * (sv[0] if sv.size else 0.0)))
    return U[:, rank:]


def _solve_cc_alpha_one(channels, constraints, settings, with_an) -> CCSolution:
    """alpha = 1 (beta = 1): the Eve LMIs collapse to G_k^H Q G_k = 0.

    That set has no interior, so Q is parametrized on the common nullspace
    of the Eve channels instead, Q = N Q' N^H, and the LMIs drop out.
    """
    h = channels.h
    nt = channels.nt
    N = common_nullspace(channels.eves)
    d = N.shape[1]
    prog = ConicProgram("cc-sdp(alpha=1)")
    xi = prog.scalar("xi")
    obj = xi.expr
    norm = xi.expr
    blocks = []
    if d:
        Qn = prog.hermitian("Qn", d)
        obj = obj + Qn.quad(N.conj().T @ h)
        blocks.append(("Qn", Qn))
    if with_an:
        Gm = prog.hermitian("Gamma", nt)
        obj = obj + Gm.quad(h)
        norm = norm + Gm.quad(h)
        blocks.append(("Gamma", Gm))
    prog.maximize(obj)
    prog.add_eq(norm, 1.0, name="normalization")

    def lifted(Phi):
        out = 0.0
        for name, B in blocks:
            out = out + B.trace_with(N.conj().T @ Phi @ N if name == "Qn" else Phi)
        return out

    prog.add_le(lifted(np.eye(nt)) - constraints.P * xi, 0.0, name="sum-power")
    for l, (Phi, rho) in enumerate(constraints.shaping):
        prog.add_le(lifted(Phi) - rho * xi, 0.0, name=f"shaping-{l}")
    res = solve(prog, settings)
    status = usable_status(res, settings)
    if status not in USABLE:
        return CCSolution(1.0, status)
    Q = N @ res["Qn"] @ N.conj().T if d else np.zeros((nt, nt), dtype=complex)
    Gamma = res["Gamma"] if with_an else np.zeros((nt, nt), dtype=complex)
    return CCSolution(1.0, status, Q, Gamma, res["xi"], res.objective)


# --------------------------------------------------------------------------
# one-dimensional search
# --------------------------------------------------------------------------

def golden_section_max(f, a: float, b: float, tol: float, cache: dict | None = None):
    """Maximize f on [a, b] by golden-section search down to an interval of width tol.

    Returns (x, f(x)) for the best point evaluated.  ``f`` may return -inf.
    """
    cache = {} if cache is None else cache

    def F(x):
        if x not in cache:
            cache[x] = f(x)
        return cache[x]

    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = F(c), F(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = F(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = F(d)
    best = max(cache, key=lambda x: cache[x])
    return best, cache[best]


def search_alpha(evaluate, lo: float, hi: float, settings: LineSearchSettings):
    """Grid scan of ``evaluate(alpha) -> CCSolution`` then golden refinement around the best point."""
    sols = {}

    def score(a):
        if a not in sols:
            sols[a] = evaluate(a)
        return sols[a].rate_bits

    grid = np.linspace(lo, hi, settings.grid_points)
    scores = [score(float(a)) for a in grid]
    i = int(np.argmax(scores))
    if not np.isfinite(scores[i]):
        raise SolverFailure("no grid point produced a feasible CC SDP; the all-zero design should always be feasible")
    if settings.refinement == "golden":
        a = float(grid[max(i - 1, 0)])
        b = float(grid[min(i + 1, len(grid) - 1)])
        if b - a > settings.tol:
            golden_section_max(score, a, b, settings.tol, cache={})
    best = max(sols, key=lambda x: sols[x].rate_bits)
    return sols[best], sols


def line_search_srm(channels: ChannelSet, constraints: PowerConstraints,
                    settings: LineSearchSettings | None = None, with_an: bool = True) -> TransmitDesign:
    settings = settings or LineSearchSettings()
    constraints.check_size(channels.nt)
    lo, hi = alpha_interval(channels, constraints)
    best, sols = search_alpha(
        lambda a: solve_cc_sdp(a, channels, constraints, settings.solver, with_an), lo, hi, settings)
    design = best.design()
    design.achieved_rate_bits = max(best.rate_bits, 0.0)
    design.info.update(alpha=best.alpha, evaluations=len(sols),
                       failed=sum(1 for s in sols.values() if not s.ok))
    if not with_an:
        design.Sigma = np.zeros_like(design.Sigma)
    return design


def no_an_srm(channels: ChannelSet, constraints: PowerConstraints,
              settings: LineSearchSettings | None = None) -> TransmitDesign:
    """The same pipeline with the AN covariance removed (Sigma = 0).

    Without AN the relaxation can return a higher-rank W once shaping
    constraints are present, so the no-AN power-minimization step is run too.
    """
    settings = settings or LineSearchSettings()
    d = line_search_srm(channels, constraints, settings, with_an=False)
    d = rank_one_reconstruct(d, channels, constraints, d.achieved_rate_bits, settings.solver, with_an=False)
    return snap_rank_one(d)


# --------------------------------------------------------------------------
# rank-one reconstruction
# --------------------------------------------------------------------------

RECONSTRUCT_BACKOFF = 1e-7  # bits


def relaxed_rate(design: TransmitDesign, h) -> float:
    """log2((1 + h^H(W+S)h) / (beta (1 + h^H S h))), the relaxation's own objective."""
    num = 1.0 + float(np.real(np.vdot(h, (design.W + design.Sigma) @ h)))
    den = design.beta * (1.0 + float(np.real(np.vdot(h, design.Sigma @ h))))
    return math.log2(num / den)


def power_min_program(beta: float, rate_bits: float, channels: ChannelSet,
                      constraints: PowerConstraints, eve_lmis, with_an: bool = True) -> tuple:
    """min tr(W+S) s.t. h^H(W + mu S)h + mu >= 0, Eve LMIs, shaping; mu = 1 - beta 2^R.

    With ``with_an=False`` the Sigma block is left out (S = 0).
    """
    h = channels.h
    mu = 1.0 - beta * 2.0 ** rate_bits
    prog = ConicProgram("power-min")
    W = prog.hermitian("W", channels.nt)
    S = prog.hermitian("Sigma", channels.nt) if with_an else None
    if with_an:
        prog.minimize(W.trace() + S.trace())
        prog.add_ge(W.quad(h) + mu * S.quad(h), -mu, name="rate")
    else:
        prog.minimize(W.trace())
        prog.add_ge(W.quad(h), -mu, name="rate")
    eve_lmis(prog, W, S)
    for l, (Phi, rho) in enumerate(constraints.shaping):
        lhs = W.trace_with(Phi) + S.trace_with(Phi) if with_an else W.trace_with(Phi)
        prog.add_le(lhs, rho, name=f"shaping-{l}")
    return prog, mu


def _perfect_eve_lmis(channels, beta, scale=1.0):
    def add(prog, W, S):
        for k, G in enumerate(channels.eves):
            G = math.sqrt(scale) * G
            ne = G.shape[1]
            lhs = W.congruence(G, -1.0) + (beta - 1.0) * np.eye(ne)
            if S is not None:
                lhs = S.congruence(G, beta - 1.0) + lhs
            prog.add_lmi(lhs, name=f"eve-{k}")
    return add


def _reconstruct(design, channels, constraints, eve_lmis, achieved_rate_bits, settings, with_an=True):
    if numerical_rank(design.W, RANK_TOL) <= 1:
        return design
    if design.beta is None:
        raise ValueError("rank-one reconstruction needs the design's beta")
    # target the rate the relaxed point itself certifies, minus a hair so the
    # power-minimization problem keeps an interior
    own = relaxed_rate(design, channels.h)
    target = min(own, achieved_rate_bits) if achieved_rate_bits is not None else own
    target -= RECONSTRUCT_BACKOFF
    # rates are invariant under (h, G, W, S) -> (sqrt(s) h, sqrt(s) G, W/s, S/s);
    # solving in units of P keeps the absolute solver tolerances meaningful
    s = constraints.P
    scaled = ChannelSet(math.sqrt(s) * channels.h, tuple(math.sqrt(s) * G for G in channels.eves))
    shaping = PowerConstraints(1.0, tuple((Phi, rho / s) for Phi, rho in constraints.shaping))
    prog, mu = power_min_program(design.beta, target, scaled, shaping, eve_lmis(design.beta, s), with_an)
    res = solve(prog, settings)
    if usable_status(res, settings) not in USABLE:
        raise SolverFailure(f"power-minimization SDP returned {res.status}: {res.diagnostic}")
    Sigma = _clip_psd(s * res["Sigma"]) if with_an else np.zeros_like(design.Sigma)
    out = TransmitDesign(_clip_psd(s * res["W"]), Sigma, beta=design.beta,
                         achieved_rate_bits=achieved_rate_bits, info=dict(design.info))
    out.info.update(reconstructed=True, mu=mu, rank_before=numerical_rank(design.W, RANK_TOL))
    return out


def rank_one_reconstruct(design: TransmitDesign, channels: ChannelSet, constraints: PowerConstraints,
                         achieved_rate_bits: float | None = None,
                         settings: SolverSettings | None = None, with_an: bool = True) -> TransmitDesign:
    """Return a rank-one W with the same rate; a rank <= 1 input passes through unchanged."""
    if achieved_rate_bits is None:
        achieved_rate_bits = design.achieved_rate_bits
    return _reconstruct(design, channels, constraints,
                        lambda beta, scale: _perfect_eve_lmis(channels, beta, scale),
                        achieved_rate_bits, settings, with_an)


def snap_rank_one(design: TransmitDesign) -> TransmitDesign:
    """Replace a numerically rank-one W by its exact principal part lambda_1 v v^H.

    Interior-point solutions carry eigenvalues around 1e-9 relative in the
    other directions; they are far below the rank threshold but still leak
    ~1e-6 bits into log-det rate formulas.  Dropping them only lowers power.
    """
    if numerical_rank(design.W, RANK_TOL) > 1:
        raise ValueError("W is not numerically rank one")
    lam, V = np.linalg.eigh(design.W)
    W = max(lam[-1], 0.0) * np.outer(V[:, -1], V[:, -1].conj())
    return design.replace(W=hermitian(W), info=dict(design.info))


def an_srm(channels: ChannelSet, constraints: PowerConstraints,
           settings: LineSearchSettings | None = None) -> TransmitDesign:
    """Line search, rank-one reconstruction, then an exact beamformer W = w w^H."""
    settings = settings or LineSearchSettings()
    d = line_search_srm(channels, constraints, settings)
    d = rank_one_reconstruct(d, channels, constraints, d.achieved_rate_bits, settings.solver)
    return snap_rank_one(d)


# --------------------------------------------------------------------------
# relaxation check
# --------------------------------------------------------------------------

def verify_prop1(W, Sigma, beta: float, G, tol: float = 1e-8) -> tuple:
    """(log-det bound holds, matrix inequality holds) for one eavesdropper.

    Both tests run on the whitened matrix B = L^-1 G^H W G L^-H with
    L L^H = I + G^H Sigma G:  det(I + B) <= beta (1 + tol)  versus
    lambda_max(B) <= beta - 1 + beta tol.  With rank-one W, det(I + B) is
    1 + lambda_max(B), so the two tests coincide exactly.
    """
    W = hermitian(W)
    Sigma = hermitian(Sigma)
    G = np.asarray(G, dtype=complex)
    if G.ndim == 1:
        G = G[:, None]
    Gh = G.conj().T
    A = np.eye(G.shape[1]) + Gh @ Sigma @ G
    L = np.linalg.cholesky(0.5 * (A + A.conj().T))
    B = np.linalg.solve(L, Gh @ W @ G)
    B = np.linalg.solve(L, B.conj().T).conj().T
    lam = np.maximum(np.linalg.eigvalsh(0.5 * (B + B.conj().T)), 0.0)
    lhs = float(np.prod(1.0 + lam)) <= beta * (1.0 + tol)
    rhs = float(lam[-1]) <= beta - 1.0 + beta * tol
    return bool(lhs), bool(rhs)
