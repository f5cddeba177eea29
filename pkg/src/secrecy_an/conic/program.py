"""Problem builder for small dense SDPs over Hermitian PSD blocks.

A program has Hermitian PSD matrix variables and nonnegative scalar
variables.  Affine scalar expressions are stored as ``{var: coefficient}``
with a Hermitian coefficient C standing for ``Re tr(C X)``.  Affine matrix
expressions store, per Hermitian variable, a list of congruences
``c * B^H X B`` and, per scalar variable, a Hermitian matrix F standing for
``t * F``.  That covers every LMI the secrecy-rate pipeline needs.

For solving, every Hermitian quantity that must be PSD (a matrix variable
or an LMI) passes through ``real_embed`` and becomes one block of a real
symmetric cone; see :meth:`ConicProgram.lower`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from numbers import Real

import numpy as np

from ..linalg import hermitian

SQRT2 = math.sqrt(2.0)


# --------------------------------------------------------------------------
# vectorisations
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _triu(n):
    return np.triu_indices(n, 1)


def hvec(A) -> np.ndarray:
    """Isometric real coordinates of a Hermitian matrix (length n^2)."""
    A = np.asarray(A)
    n = A.shape[-1]
    iu, ju = _triu(n)
    off = A[..., iu, ju]
    return np.concatenate(
        [np.real(np.diagonal(A, axis1=-2, axis2=-1)), SQRT2 * off.real, SQRT2 * off.imag],
        axis=-1,
    )


def hmat(v, n: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    iu, ju = _triu(n)
    k = len(iu)
    A = np.zeros(v.shape[:-1] + (n, n), dtype=complex)
    idx = np.arange(n)
    A[..., idx, idx] = v[..., :n]
    off = (v[..., n:n + k] + 1j * v[..., n + k:]) / SQRT2
    A[..., iu, ju] = off
    A[..., ju, iu] = off.conj()
    return A


def svec(S) -> np.ndarray:
    """Isometric coordinates of a real symmetric matrix (length n(n+1)/2)."""
    S = np.asarray(S, dtype=float)
    n = S.shape[-1]
    iu, ju = _triu(n)
    return np.concatenate([np.diagonal(S, axis1=-2, axis2=-1), SQRT2 * S[..., iu, ju]], axis=-1)


def smat(v, n: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    iu, ju = _triu(n)
    S = np.zeros(v.shape[:-1] + (n, n))
    idx = np.arange(n)
    S[..., idx, idx] = v[..., :n]
    off = v[..., n:] / SQRT2
    S[..., iu, ju] = off
    S[..., ju, iu] = off
    return S


@lru_cache(maxsize=None)
def hermitian_basis(n: int) -> np.ndarray:
    """Stack of n^2 Hermitian matrices with ``hvec(basis[j]) = e_j``."""
    return hmat(np.eye(n * n), n)


@lru_cache(maxsize=None)
def collapse_matrix(n: int) -> np.ndarray:
    """Matrix mapping svec(Y) (Y real 2n x 2n) to hvec(real_collapse(Y))."""
    B = hermitian_basis(n)
    emb = np.concatenate(
        [np.concatenate([B.real, -B.imag], axis=2), np.concatenate([B.imag, B.real], axis=2)],
        axis=1,
    )
    C = np.ascontiguousarray(0.5 * svec(emb))  # svec(embed(H)) = 2 C^T hvec(H)
    C.setflags(write=False)
    return C


@lru_cache(maxsize=None)
def embed_matrix(n: int) -> np.ndarray:
    """Matrix E with svec(real_embed(H)) = E hvec(H)."""
    E = 2.0 * collapse_matrix(n).T
    E.setflags(write=False)
    return E


def congruence_hvec_matrix(B, n: int) -> np.ndarray:
    """Matrix of X -> B^H X B in hvec coordinates (m^2 x n^2)."""
    basis = hermitian_basis(n)
    out = np.einsum("ia,kij,jb->kab", B.conj(), basis, B, optimize=True)
    return hvec(out).T


# --------------------------------------------------------------------------
# variables and expressions
# --------------------------------------------------------------------------

class Variable:
    __slots__ = ("program", "name", "kind", "n", "index")

    def __init__(self, program, name, kind, n, index):
        self.program = program
        self.name = name
        self.kind = kind
        self.n = n
        self.index = index

    def __repr__(self):
        return f"Variable({self.name!r}, {self.kind}, n={self.n})"

    # scalar-variable conveniences
    @property
    def expr(self) -> "Affine":
        if self.kind != "scalar":
            raise TypeError(f"{self.name} is a matrix variable; use trace_with/quad/congruence")
        return Affine({self: 1.0})

    def __add__(self, other):
        return self.expr + other

    __radd__ = __add__

    def __sub__(self, other):
        return self.expr - other

    def __rsub__(self, other):
        return (-1.0) * self.expr + other

    def __mul__(self, c):
        return self.expr * c

    __rmul__ = __mul__

    def __neg__(self):
        return -self.expr

    def times(self, F) -> "MatAffine":
        """Scalar variable times a constant Hermitian matrix."""
        if self.kind != "scalar":
            raise TypeError("times() is for scalar variables")
        F = hermitian(F)
        return MatAffine(F.shape[0], {self: [F]})

    # matrix-variable conveniences
    def trace_with(self, C) -> "Affine":
        """Re tr(C X)."""
        if self.kind != "hermitian":
            raise TypeError("trace_with() is for matrix variables")
        C = hermitian(C)
        if C.shape[0] != self.n:
            raise ValueError(f"coefficient of size {C.shape[0]} for {self.name} of size {self.n}")
        return Affine({self: C})

    def trace(self) -> "Affine":
        return self.trace_with(np.eye(self.n))

    def quad(self, v) -> "Affine":
        """v^H X v."""
        v = np.asarray(v, dtype=complex).reshape(-1)
        return self.trace_with(np.outer(v, v.conj()))

    def congruence(self, B, c: float = 1.0) -> "MatAffine":
        """c * B^H X B as a matrix expression."""
        if self.kind != "hermitian":
            raise TypeError("congruence() is for matrix variables")
        B = np.asarray(B, dtype=complex)
        if B.ndim == 1:
            B = B[:, None]
        if B.shape[0] != self.n:
            raise ValueError(f"congruence factor has {B.shape[0]} rows, {self.name} is {self.n}x{self.n}")
        return MatAffine(B.shape[1], {self: [(float(c), B)]})

    def as_matrix(self) -> "MatAffine":
        return self.congruence(np.eye(self.n))


class Affine:
    """Real affine functional of the program variables."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms = dict(terms or {})
        self.const = float(const)

    def _combine(self, other, sign):
        if isinstance(other, Variable):
            other = other.expr
        if isinstance(other, Real):
            return Affine(self.terms, self.const + sign * float(other))
        if not isinstance(other, Affine):
            return NotImplemented
        terms = dict(self.terms)
        for v, c in other.terms.items():
            terms[v] = terms[v] + sign * c if v in terms else sign * c
        return Affine(terms, self.const + sign * other.const)

    def __add__(self, other):
        return self._combine(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return (-1.0 * self)._combine(other, 1.0)

    def __mul__(self, c):
        if not isinstance(c, Real):
            return NotImplemented
        c = float(c)
        return Affine({v: c * k for v, k in self.terms.items()}, c * self.const)

    __rmul__ = __mul__

    def __neg__(self):
        return -1.0 * self

    def value(self, values) -> float:
        total = self.const
        for v, c in self.terms.items():
            x = values[v.name]
            total += float(c) * float(x) if v.kind == "scalar" else float(np.real(np.vdot(c, x)))
        return total

    def variables(self):
        return set(self.terms)


class MatAffine:
    """Hermitian-matrix-valued affine map of the program variables."""

    __slots__ = ("m", "terms", "const")

    def __init__(self, m, terms=None, const=None):
        self.m = int(m)
        self.terms = {v: list(t) for v, t in (terms or {}).items()}
        self.const = np.zeros((self.m, self.m), dtype=complex) if const is None else const

    def _combine(self, other, sign):
        if isinstance(other, np.ndarray):
            other = MatAffine(self.m, const=hermitian(other))
        if not isinstance(other, MatAffine):
            return NotImplemented
        if other.m != self.m:
            raise ValueError(f"size mismatch in matrix expression: {self.m} vs {other.m}")
        terms = {v: list(t) for v, t in self.terms.items()}
        for v, items in other.terms.items():
            scaled = [_scale_term(v, it, sign) for it in items]
            terms.setdefault(v, []).extend(scaled)
        return MatAffine(self.m, terms, self.const + sign * other.const)

    def __add__(self, other):
        return self._combine(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return (-1.0 * self)._combine(other, 1.0)

    def __mul__(self, c):
        if not isinstance(c, Real):
            return NotImplemented
        c = float(c)
        terms = {v: [_scale_term(v, it, c) for it in items] for v, items in self.terms.items()}
        return MatAffine(self.m, terms, c * self.const)

    __rmul__ = __mul__

    def __neg__(self):
        return -1.0 * self

    def congruence(self, B) -> "MatAffine":
        """B^H (expr) B, composing the congruences."""
        B = np.asarray(B, dtype=complex)
        terms = {}
        for v, items in self.terms.items():
            if v.kind == "hermitian":
                terms[v] = [(c, Bv @ B) for c, Bv in items]
            else:
                terms[v] = [B.conj().T @ F @ B for F in items]
        return MatAffine(B.shape[1], terms, B.conj().T @ self.const @ B)

    def value(self, values) -> np.ndarray:
        out = np.array(self.const, dtype=complex)
        for v, items in self.terms.items():
            x = values[v.name]
            for it in items:
                if v.kind == "hermitian":
                    c, B = it
                    out = out + c * (B.conj().T @ x @ B)
                else:
                    out = out + float(x) * it
        return 0.5 * (out + out.conj().T)

    def adjoint(self, Lam):
        """Gradient of Re tr(Lam F(x)) with respect to each variable."""
        grads = {}
        for v, items in self.terms.items():
            if v.kind == "hermitian":
                g = np.zeros((v.n, v.n), dtype=complex)
                for c, B in items:
                    g = g + c * (B @ Lam @ B.conj().T)
                grads[v] = 0.5 * (g + g.conj().T)
            else:
                grads[v] = float(sum(np.real(np.vdot(F, Lam)) for F in items))
        return grads

    def hvec_matrix(self, v) -> np.ndarray:
        """Matrix of the linear part in variable v, hvec(output) per unit of v."""
        items = self.terms[v]
        if v.kind == "scalar":
            return hvec(sum(items))[:, None]
        return sum(c * congruence_hvec_matrix(B, v.n) for c, B in items)


def _scale_term(v, item, c):
    if v.kind == "hermitian":
        return (c * item[0], item[1])
    return c * item


def hermitian_const(A) -> MatAffine:
    A = hermitian(A)
    return MatAffine(A.shape[0], const=A)


# --------------------------------------------------------------------------
# program
# --------------------------------------------------------------------------

@dataclass
class Constraint:
    kind: str  # "eq", "le", "lmi"
    expr: object
    rhs: float = 0.0
    name: str = ""


@dataclass
class Lowered:
    """Core standard-form data plus the maps back to program variables."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lp_dim: int
    sdp_sizes: list
    obj_shift: float
    sign: float
    y0: np.ndarray
    N: np.ndarray
    offsets: dict
    E: np.ndarray
    f: np.ndarray
    consistent: bool
    lp_owner: list
    sdp_owner: list
    g: np.ndarray
    F: np.ndarray

    def coordinates(self, w) -> np.ndarray:
        return self.y0 + self.N @ w


class ConicProgram:
    """Builder for an SDP in Hermitian PSD blocks and nonnegative scalars."""

    def __init__(self, name: str = "program"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective = Affine()
        self.sense = "minimize"
        self._names = set()

    # declarations -------------------------------------------------------
    def _declare(self, name, kind, n):
        if name in self._names:
            raise ValueError(f"duplicate variable name {name!r}")
        self._names.add(name)
        v = Variable(self, name, kind, n, len(self.variables))
        self.variables.append(v)
        return v

    def hermitian(self, name: str, n: int) -> Variable:
        if n < 1:
            raise ValueError("matrix variables need n >= 1")
        return self._declare(name, "hermitian", int(n))

    def scalar(self, name: str) -> Variable:
        return self._declare(name, "scalar", 1)

    # objective and constraints ----------------------------------------------
    def _own(self, expr):
        for v in expr.terms:
            if v.program is not self:
                raise ValueError(f"variable {v.name!r} is not declared in program {self.name!r}")
        return expr

    @staticmethod
    def _as_affine(expr):
        if isinstance(expr, Variable):
            return expr.expr
        if isinstance(expr, Real):
            return Affine(const=float(expr))
        return expr

    def minimize(self, expr):
        self.objective, self.sense = self._own(self._as_affine(expr)), "minimize"

    def maximize(self, expr):
        self.objective, self.sense = self._own(self._as_affine(expr)), "maximize"

    def add_eq(self, expr, rhs: float = 0.0, name: str = ""):
        expr = self._own(self._as_affine(expr))
        self.constraints.append(Constraint("eq", expr, float(rhs), name))

    def add_le(self, expr, rhs: float = 0.0, name: str = ""):
        """expr <= rhs."""
        expr = self._own(self._as_affine(expr))
        self.constraints.append(Constraint("le", expr, float(rhs), name))

    def add_ge(self, expr, rhs: float = 0.0, name: str = ""):
        self.add_le(-1.0 * self._as_affine(expr), -float(rhs), name)

    def add_lmi(self, expr: MatAffine, name: str = ""):
        """Require expr to be PSD."""
        self._own(expr)
        self._check_hermitian_map(expr)
        self.constraints.append(Constraint("lmi", expr, 0.0, name))

    def _check_hermitian_map(self, expr, seed=0):
        rng = np.random.default_rng(seed)
        vals = {}
        for v in self.variables:
            if v.kind == "scalar":
                vals[v.name] = float(rng.random())
            else:
                X = rng.standard_normal((v.n, v.n)) + 1j * rng.standard_normal((v.n, v.n))
                vals[v.name] = X + X.conj().T
        raw = np.array(expr.const, dtype=complex)
        for v, items in expr.terms.items():
            for it in items:
                if v.kind == "hermitian":
                    c, B = it
                    raw = raw + c * (B.conj().T @ vals[v.name] @ B)
                else:
                    raw = raw + vals[v.name] * it
        scale = max(1.0, np.linalg.norm(raw))
        if np.linalg.norm(raw - raw.conj().T) > 1e-9 * scale:
            raise ValueError("LMI expression does not map Hermitian inputs to Hermitian outputs")

    # evaluation ---------------------------------------------------------
    def objective_value(self, values) -> float:
        return self.objective.value(values)

    # lowering -----------------------------------------------------------
    def lower(self) -> "Lowered":
        """Lower to the interior-point core's standard form.

        Every variable coordinate becomes a free real ``y``; equalities are
        eliminated through ``y = y0 + N w``.  Each cone condition (variable
        PSD / nonnegative, scalar inequality slack, LMI) is one block
        ``c_j - A_j^T w`` of the real cone, so the program is the *dual* of
        the core's standard form and the Schur system has size ``len(w)``.
        """
        sign = 1.0 if self.sense == "minimize" else -1.0
        offs, ny = {}, 0
        for v in self.variables:
            d = 1 if v.kind == "scalar" else v.n * v.n
            offs[v.name] = slice(ny, ny + d)
            ny += d

        def row_of(expr):
            row = np.zeros(ny)
            for v, coef in expr.terms.items():
                row[offs[v.name]] += coef if v.kind == "scalar" else hvec(coef)
            return row

        eqs = [k for k in self.constraints if k.kind == "eq"]
        if eqs:
            E = np.vstack([row_of(k.expr) for k in eqs])
            f = np.array([k.rhs - k.expr.const for k in eqs])
            U, sv, Vt = np.linalg.svd(E, full_matrices=True)
            tol = max(E.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
            rank = int(np.count_nonzero(sv > tol))
            y0 = Vt[:rank].T @ ((U[:, :rank].T @ f) / sv[:rank])
            N = Vt[rank:].T
            consistent = np.linalg.norm(E @ y0 - f) <= 1e-9 * (1.0 + np.linalg.norm(f))
        else:
            E, f = np.zeros((0, ny)), np.zeros(0)
            y0, N, consistent = np.zeros(ny), np.eye(ny), True

        # cone blocks: constant part (in cone coordinates) and coefficients on y
        lp_c, lp_F, blocks = [], [], []
        lp_owner, sdp_owner = [], []
        for v in self.variables:
            sl = offs[v.name]
            if v.kind == "scalar":
                row = np.zeros(ny)
                row[sl] = 1.0
                lp_c.append(0.0)
                lp_F.append(row)
                lp_owner.append(("var", v))
            else:
                F = np.zeros((v.n * (2 * v.n + 1), ny))
                F[:, sl] = embed_matrix(v.n)
                blocks.append((2 * v.n, np.zeros(F.shape[0]), F))
                sdp_owner.append(("var", v))
        for i, k in enumerate(self.constraints):
            if k.kind == "le":
                lp_c.append(k.rhs - k.expr.const)
                lp_F.append(-row_of(k.expr))
                lp_owner.append(("con", i))
            elif k.kind == "lmi":
                expr = k.expr
                H = np.zeros((expr.m * expr.m, ny))
                for v in expr.terms:
                    H[:, offs[v.name]] += expr.hvec_matrix(v)
                Em = embed_matrix(expr.m)
                blocks.append((2 * expr.m, Em @ hvec(expr.const), Em @ H))
                sdp_owner.append(("con", i))

        consts = [np.array(lp_c)] + [c for _, c, _ in blocks]
        coefs = [np.array(lp_F) if lp_F else np.zeros((0, ny))] + [F for _, _, F in blocks]
        F = np.concatenate(coefs)
        cvec = np.concatenate(consts) + F @ y0
        Fw = F @ N
        g = sign * row_of(self.objective)
        return Lowered(
            c=cvec, A=-Fw.T, b=-(N.T @ g), lp_dim=len(lp_c), sdp_sizes=[n for n, _, _ in blocks],
            obj_shift=sign * self.objective.const + float(g @ y0), sign=sign,
            y0=y0, N=N, offsets=offs, E=E, f=f, consistent=bool(consistent),
            lp_owner=lp_owner, sdp_owner=sdp_owner, g=g, F=F,
        )

    # debug dump ---------------------------------------------------------
    def dump(self, path):
        """Write one JSON record per variable, objective and constraint."""

        def mat(A):
            A = np.asarray(A, dtype=complex)
            return [[[repr(float(z.real)), repr(float(z.imag))] for z in row] for row in A]

        def affine(expr):
            return {
                "const": repr(expr.const),
                "terms": [
                    {"var": v.name, "coef": repr(float(c)) if v.kind == "scalar" else mat(c)}
                    for v, c in expr.terms.items()
                ],
            }

        def mataffine(expr):
            terms = []
            for v, items in expr.terms.items():
                for it in items:
                    if v.kind == "hermitian":
                        terms.append({"var": v.name, "scale": repr(it[0]), "B": mat(it[1])})
                    else:
                        terms.append({"var": v.name, "F": mat(it)})
            return {"size": expr.m, "const": mat(expr.const), "terms": terms}

        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"record": "program", "name": self.name, "sense": self.sense}) + "\n")
            for v in self.variables:
                fh.write(json.dumps({"record": "variable", "name": v.name, "kind": v.kind, "n": v.n}) + "\n")
            fh.write(json.dumps({"record": "objective", **affine(self.objective)}) + "\n")
            for k in self.constraints:
                body = mataffine(k.expr) if k.kind == "lmi" else affine(k.expr)
                rec = {"record": "constraint", "kind": k.kind, "name": k.name, "rhs": repr(k.rhs), **body}
                fh.write(json.dumps(rec) + "\n")
