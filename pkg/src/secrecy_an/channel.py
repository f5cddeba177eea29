"""MISO wiretap channel model: channels, rates, power budgets, baselines.

Noise at every receiver has unit variance, so ``P`` acts as an SNR.  All
rates are in bits per channel use.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .linalg import hermitian, is_psd


# --------------------------------------------------------------------------
# random streams
# --------------------------------------------------------------------------

def _tag_key(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag)
    return zlib.crc32(str(tag).encode("utf-8"))


def substream(master_seed: int, *keys) -> np.random.Generator:
    """Counter-based generator for the substream named by ``keys``.

    The stream depends only on (master_seed, keys), never on how many other
    streams were drawn before, so trials can run in any order or in parallel.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(_tag_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(seed, *default_keys) -> np.random.Generator:
    """A Generator passes through, a tuple names a substream, an int gets ``default_keys``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, tuple):
        return substream(*seed)
    return substream(seed, *default_keys)


def complex_normal(rng: np.random.Generator, shape, scale: float = 1.0) -> np.ndarray:
    """i.i.d. CN(0, scale^2) entries (real and imaginary parts have variance scale^2/2)."""
    z = rng.standard_normal(tuple(np.atleast_1d(shape)) + (2,))
    return (scale / np.sqrt(2.0)) * (z[..., 0] + 1j * z[..., 1])


# --------------------------------------------------------------------------
# data types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelSet:
    """Bob's channel ``h`` (N_t,) and the eavesdropper matrices ``G_k`` (N_t, N_e,k)."""

    h: np.ndarray
    eves: tuple

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex).reshape(-1)
        if h.size < 1:
            raise ValueError("N_t must be at least 1")
        if not np.linalg.norm(h) > 0:
            raise ValueError("Bob's channel is identically zero")
        eves = []
        for k, G in enumerate(self.eves):
            G = np.asarray(G, dtype=complex)
            if G.ndim == 1:
                G = G[:, None]
            if G.ndim != 2 or G.shape[0] != h.size or G.shape[1] < 1:
                raise ValueError(f"eavesdropper {k}: expected shape ({h.size}, N_e), got {G.shape}")
            eves.append(G)
        if not eves:
            raise ValueError("at least one eavesdropper is required")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "eves", tuple(eves))

    @property
    def nt(self) -> int:
        return self.h.size

    @property
    def K(self) -> int:
        return len(self.eves)

    @property
    def ne(self) -> list:
        return [G.shape[1] for G in self.eves]

    def with_eves(self, eves) -> "ChannelSet":
        return ChannelSet(self.h, tuple(eves))

    # serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": "channel-set/1",
            "nt": self.nt,
            "ne": self.ne,
            "h": _encode_complex(self.h),
            "eves": [_encode_complex(G) for G in self.eves],
        }

    @classmethod
    def from_dict(cls, d) -> "ChannelSet":
        if d.get("format") != "channel-set/1":
            raise ValueError(f"unknown channel file format {d.get('format')!r}")
        h = _decode_complex(d["h"])
        eves = [_decode_complex(G) for G in d["eves"]]
        cs = cls(h, tuple(eves))
        if cs.nt != d["nt"] or cs.ne != list(d["ne"]):
            raise ValueError("channel file header does not match its data")
        return cs

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ChannelSet":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _encode_complex(A):
    A = np.asarray(A, dtype=complex)
    return {"shape": list(A.shape),
            "re": [repr(float(x)) for x in A.real.ravel()],
            "im": [repr(float(x)) for x in A.imag.ravel()]}


def _decode_complex(d):
    re = np.array([float(x) for x in d["re"]])
    im = np.array([float(x) for x in d["im"]])
    return (re + 1j * im).reshape(d["shape"])


@dataclass(frozen=True)
class PowerConstraints:
    """Sum power ``P`` plus shaping pairs tr(Phi_l (W + Sigma)) <= rho_l."""

    P: float
    shaping: tuple = ()

    def __post_init__(self):
        if not self.P > 0:
            raise ValueError(f"sum power must be positive, got {self.P}")
        pairs = []
        for l, (Phi, rho) in enumerate(self.shaping):
            Phi = hermitian(Phi)
            if not is_psd(Phi, 1e-10):
                raise ValueError(f"shaping matrix {l} is not PSD")
            if rho < 0:
                raise ValueError(f"shaping level {l} is negative")
            pairs.append((Phi, float(rho)))
        object.__setattr__(self, "P", float(self.P))
        object.__setattr__(self, "shaping", tuple(pairs))

    @classmethod
    def per_antenna(cls, P: float, caps) -> "PowerConstraints":
        """Per-antenna caps: Phi_l = e_l e_l^H."""
        caps = np.asarray(caps, dtype=float).reshape(-1)
        n = caps.size
        shaping = []
        for l in range(n):
            Phi = np.zeros((n, n), dtype=complex)
            Phi[l, l] = 1.0
            shaping.append((Phi, caps[l]))
        return cls(P, tuple(shaping))

    @classmethod
    def interference(cls, P: float, R_list, rho) -> "PowerConstraints":
        """Interference temperature caps: Phi_l = R_l R_l^H for primary-user channels R_l."""
        rhos = np.broadcast_to(np.asarray(rho, dtype=float), (len(R_list),))
        shaping = []
        for R, r in zip(R_list, rhos):
            R = np.asarray(R, dtype=complex)
            if R.ndim == 1:
                R = R[:, None]
            shaping.append((R @ R.conj().T, float(r)))
        return cls(P, tuple(shaping))

    def check_size(self, nt: int):
        for l, (Phi, _) in enumerate(self.shaping):
            if Phi.shape[0] != nt:
                raise ValueError(f"shaping matrix {l} has size {Phi.shape[0]}, expected {nt}")


@dataclass
class TransmitDesign:
    W: np.ndarray
    Sigma: np.ndarray
    beta: float | None = None
    achieved_rate_bits: float | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.W = hermitian(self.W)
        self.Sigma = hermitian(self.Sigma)
        if self.W.shape != self.Sigma.shape:
            raise ValueError(f"W is {self.W.shape} but Sigma is {self.Sigma.shape}")
        for name, A in (("W", self.W), ("Sigma", self.Sigma)):
            if not is_psd(A, 1e-8):
                raise ValueError(f"{name} is not PSD (tolerance 1e-8)")

    @property
    def nt(self) -> int:
        return self.W.shape[0]

    def replace(self, **kw) -> "TransmitDesign":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "format": "transmit-design/1",
            "W": _encode_complex(self.W),
            "Sigma": _encode_complex(self.Sigma),
            "beta": None if self.beta is None else repr(float(self.beta)),
            "achieved_rate_bits": None if self.achieved_rate_bits is None else repr(float(self.achieved_rate_bits)),
        }

    @classmethod
    def from_dict(cls, d) -> "TransmitDesign":
        if d.get("format") != "transmit-design/1":
            raise ValueError(f"unknown design file format {d.get('format')!r}")
        beta = d.get("beta")
        rate = d.get("achieved_rate_bits")
        return cls(_decode_complex(d["W"]), _decode_complex(d["Sigma"]),
                   None if beta is None else float(beta), None if rate is None else float(rate))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TransmitDesign":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# --------------------------------------------------------------------------
# rates
# --------------------------------------------------------------------------

def _check_dims(design: TransmitDesign, nt: int):
    if design.nt != nt:
        raise ValueError(f"design is for {design.nt} antennas, channel has {nt}")


def bob_mutual_info(design: TransmitDesign, channels: ChannelSet) -> float:
    h = channels.h
    _check_dims(design, h.size)
    s = float(np.real(np.vdot(h, design.W @ h)))
    n = float(np.real(np.vdot(h, design.Sigma @ h)))
    return max(0.0, float(np.log2(1.0 + max(s, 0.0) / (1.0 + max(n, 0.0)))))


def eve_mutual_info(design: TransmitDesign, G) -> float:
    """log2 det(I + (I + G^H S G)^{-1} G^H W G), whitened by the Cholesky factor of I + G^H S G."""
    G = np.asarray(G, dtype=complex)
    if G.ndim == 1:
        G = G[:, None]
    _check_dims(design, G.shape[0])
    Gh = G.conj().T
    noise = np.eye(G.shape[1]) + Gh @ design.Sigma @ G
    L = np.linalg.cholesky(0.5 * (noise + noise.conj().T))
    B = np.linalg.solve(L, Gh @ design.W @ G)
    B = np.linalg.solve(L, B.conj().T).conj().T  # L^{-1} G^H W G L^{-H}
    lam = np.linalg.eigvalsh(0.5 * (B + B.conj().T))
    return max(0.0, float(np.sum(np.log2(1.0 + np.maximum(lam, 0.0)))))


def secrecy_rate(design: TransmitDesign, channels: ChannelSet) -> float:
    """min_k (C_b - C_e,k); not clamped, so it can be negative."""
    cb = bob_mutual_info(design, channels)
    return min(cb - eve_mutual_info(design, G) for G in channels.eves)


# --------------------------------------------------------------------------
# generation and baselines
# --------------------------------------------------------------------------

def generate_channels(seed, nt: int, K: int, ne) -> ChannelSet:
    """i.i.d. CN(0,1) channels.  ``seed`` is an int, a tuple of substream keys, or a Generator."""
    if nt < 1 or K < 1:
        raise ValueError(f"need N_t >= 1 and K >= 1, got N_t={nt}, K={K}")
    ne = [int(ne)] * K if np.isscalar(ne) else [int(n) for n in ne]
    if len(ne) != K or min(ne) < 1:
        raise ValueError(f"need K={K} eavesdropper sizes, each >= 1, got {ne}")
    rng = as_generator(seed, "channels")
    h = complex_normal(rng, nt)
    eves = tuple(complex_normal(rng, (nt, n)) for n in ne)
    return ChannelSet(h, eves)


def isotropic_an_design(channels: ChannelSet, P: float) -> TransmitDesign:
    """Half the power beamformed along h, half spread over its orthogonal complement."""
    h = channels.h
    nt = h.size
    if nt < 2:
        raise ValueError("no nullspace available: isotropic AN needs N_t >= 2")
    hh = np.vdot(h, h).real
    W = (P / (2.0 * hh)) * np.outer(h, h.conj())
    Pi = np.eye(nt) - np.outer(h, h.conj()) / hh
    Sigma = (P / 2.0) * Pi / np.linalg.norm(Pi, "fro") ** 2
    return TransmitDesign(W, Sigma)


@dataclass
class PowerCheck:
    ok: bool
    sum_margin: float
    shaping_margins: list

    def __bool__(self):
        return self.ok


def check_power_constraints(design: TransmitDesign, constraints: PowerConstraints, tol: float = 1e-6) -> PowerCheck:
    """Margins are budget minus usage (negative means violated)."""
    constraints.check_size(design.nt)
    S = design.W + design.Sigma
    sum_margin = constraints.P - float(np.real(np.trace(S)))
    margins = [rho - float(np.real(np.vdot(Phi, S))) for Phi, rho in constraints.shaping]
    ok = sum_margin >= -tol and all(m >= -tol for m in margins)
    return PowerCheck(bool(ok), sum_margin, margins)
