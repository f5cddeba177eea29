"""Solve a :class:`ConicProgram` and audit the answer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..linalg import real_collapse
from .ipm import SolverSettings, solve_standard
from .program import ConicProgram, hmat, smat, svec

STATUSES = ("optimal", "infeasible", "unbounded", "numerical-failure")


@dataclass
class SolverResult:
    status: str
    primal: dict
    objective: float
    residuals: tuple  # (primal feasibility, dual feasibility, duality gap)
    duals: list = field(default_factory=list)
    iterations: int = 0
    diagnostic: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def __getitem__(self, name):
        return self.primal[name]


def _unpack(program, low, y) -> dict:
    primal = {}
    for v in program.variables:
        seg = y[low.offsets[v.name]]
        primal[v.name] = float(seg[0]) if v.kind == "scalar" else hmat(seg, v.n)
    return primal


def _solve_fixed(program, low, settings) -> SolverResult:
    """Equalities pin every coordinate: only cone membership is left to check."""
    primal = _unpack(program, low, low.y0)
    worst = 0.0
    if low.lp_dim:
        worst = max(worst, float(np.max(-low.c[:low.lp_dim])))
    col = low.lp_dim
    for n in low.sdp_sizes:
        d = n * (n + 1) // 2
        worst = max(worst, -float(np.linalg.eigvalsh(smat(low.c[col:col + d], n))[0]))
        col += d
    objective = program.objective.value(primal) if program.variables else program.objective.const
    if worst > settings.feas_tol:
        return SolverResult("infeasible", primal, objective, (worst, 0.0, 0.0),
                            diagnostic=f"the only point allowed by the equalities violates a cone by {worst:.3e}")
    nu = np.linalg.lstsq(low.E.T, low.g, rcond=None)[0] if low.E.shape[0] else np.zeros(0)
    duals, ieq = [], 0
    for k in program.constraints:
        if k.kind == "eq":
            duals.append(float(nu[ieq]))
            ieq += 1
        elif k.kind == "le":
            duals.append(0.0)
        else:
            duals.append(np.zeros((k.expr.m, k.expr.m), dtype=complex))
    return SolverResult("optimal", primal, objective, (max(worst, 0.0), 0.0, 0.0), duals)


def solve(program: ConicProgram, settings: SolverSettings | None = None) -> SolverResult:
    settings = settings or SolverSettings()
    low = program.lower()
    if not low.consistent:
        return SolverResult("infeasible", {}, math.nan, (math.inf, 0.0, math.inf),
                            diagnostic="linear equalities are inconsistent")

    if low.A.shape[0] == 0:
        return _solve_fixed(program, low, settings)
    out = solve_standard(low.c, low.A, low.b, low.lp_dim, low.sdp_sizes, settings)
    # the program is the dual side of the core problem, so rays swap meaning
    status = {"infeasible": "unbounded", "unbounded": "infeasible"}.get(out.status, out.status)
    y = low.coordinates(out.y)
    primal = _unpack(program, low, y)

    # cone multipliers, in program terms
    x = np.concatenate([out.x_lp] + [svec(Xj) for Xj in out.X])
    resid = low.g - low.F.T @ x
    nu = np.linalg.lstsq(low.E.T, resid, rcond=None)[0] if low.E.shape[0] else np.zeros(0)
    by_con = {}
    for (kind, who), val in zip(low.lp_owner, out.x_lp):
        if kind == "con":
            by_con[who] = float(val)
    for (kind, who), Xj in zip(low.sdp_owner, out.X):
        if kind == "con":
            by_con[who] = 2.0 * real_collapse(Xj)
    duals, ieq = [], 0
    for i, k in enumerate(program.constraints):
        if k.kind == "eq":
            duals.append(float(nu[ieq]))
            ieq += 1
        else:
            duals.append(by_con[i])

    objective = program.objective.value(primal) if program.variables else program.objective.const
    diagnostic = ""
    if status == "unbounded":
        diagnostic = f"improving ray: objective moved by {out.dobj:.3e} with bounded cone slack"
    elif status == "infeasible":
        diagnostic = f"Farkas ray: certificate value {out.pobj:.3e} with bounded residual"
    elif status == "numerical-failure":
        diagnostic = f"stopped after {out.iterations} iterations"
    # core residual naming: its dual residual is our primal (cone) residual
    return SolverResult(status, primal, objective, (out.dual_res, out.primal_res, out.gap),
                        duals, out.iterations, diagnostic)


def near_optimal(result: SolverResult, settings: SolverSettings | None = None, factor: float = 100.0) -> bool:
    """Optimal, or a stalled run whose best point is feasible with a gap within ``factor`` x gap_tol.

    Degenerate instances sometimes stop a little short of the gap target while
    both residuals sit at rounding level; callers that only need the optimal
    value to ~1e-5 relative can use such points.  The status is left as is.
    """
    if result.ok:
        return True
    if result.status != "numerical-failure" or not result.primal:
        return False
    s = settings or SolverSettings()
    pres, dres, gap = result.residuals
    return (pres <= s.feas_tol and dres <= s.feas_tol
            and gap <= factor * s.gap_tol * (1.0 + abs(result.objective)))


@dataclass
class KKTReport:
    primal_feasibility: float
    dual_feasibility: float
    gap: float
    ok: bool


def _neg_part_eig(A) -> float:
    if np.ndim(A) == 0:
        return max(0.0, -float(A))
    w = np.linalg.eigvalsh(0.5 * (A + np.conj(A).T))
    return max(0.0, -float(w[0])) if w.size else 0.0


def check_kkt(program: ConicProgram, result: SolverResult, tol: float = 1e-7) -> KKTReport:
    """Recompute residuals directly from the program's expressions.

    Works in the original Hermitian variables (no standard form involved):
    constraint violations, cone membership of the multipliers and of the
    stationarity residual Z = grad f - sum(multiplier * grad constraint), and
    the gap between primal and dual objectives.
    """
    vals = result.primal
    sign = 1.0 if program.sense == "minimize" else -1.0

    pviol = []
    for v in program.variables:
        pviol.append(_neg_part_eig(vals[v.name]))
    for k in program.constraints:
        if k.kind == "eq":
            pviol.append(abs(k.expr.value(vals) - k.rhs))
        elif k.kind == "le":
            pviol.append(max(0.0, k.expr.value(vals) - k.rhs))
        else:
            pviol.append(_neg_part_eig(k.expr.value(vals)))
    pfeas = float(np.linalg.norm(pviol)) if pviol else 0.0

    # stationarity residual per variable
    Zs = {}
    for v in program.variables:
        c = program.objective.terms.get(v)
        if c is None:
            Zs[v] = 0.0 if v.kind == "scalar" else np.zeros((v.n, v.n), dtype=complex)
        else:
            Zs[v] = sign * (c if v.kind == "scalar" else np.array(c, dtype=complex))
    dviol = []
    dual_obj = sign * program.objective.const
    for k, lam in zip(program.constraints, result.duals):
        if k.kind == "lmi":
            dviol.append(_neg_part_eig(lam))
            for v, g in k.expr.adjoint(lam).items():
                Zs[v] = Zs[v] - g
            dual_obj -= float(np.real(np.vdot(lam, k.expr.const)))
            continue
        rhs = k.rhs - k.expr.const
        if k.kind == "eq":
            for v, g in k.expr.terms.items():
                Zs[v] = Zs[v] - lam * g
            dual_obj += lam * rhs
        else:
            dviol.append(max(0.0, -lam))
            for v, g in k.expr.terms.items():
                Zs[v] = Zs[v] + lam * g
            dual_obj -= lam * rhs
    for v, Zv in Zs.items():
        dviol.append(_neg_part_eig(Zv))
    dfeas = float(np.linalg.norm(dviol)) if dviol else 0.0

    pobj = sign * (program.objective.value(vals) if program.variables else program.objective.const)
    gap = abs(pobj - dual_obj)
    ok = pfeas <= tol and dfeas <= tol and gap <= tol * (1.0 + abs(pobj))
    return KKTReport(pfeas, dfeas, gap, bool(ok))
