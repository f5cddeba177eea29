"""Outage-constrained design under Gaussian Eve channel errors.

Each Eve error has i.i.d. CN(0, sigma_k^2) entries.  With
|D_k|_F^2 = (sigma_k^2 / 2) chi2(2 N_t N_e,k), the balls of radius

    eps_k = sqrt(sigma_k^2 / 2 * F^{-1}((1 - delta)^{1/K}; 2 N_t N_e,k))

jointly hold all K errors with probability 1 - delta, so any design that is
worst-case secure on those balls has secrecy outage at most delta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammainc, gammaincc

from .channel import ChannelSet, PowerConstraints, TransmitDesign, as_generator, substream
from .robust import UncertaintyModel, sampled_rates, wcr_srm
from .srm import LineSearchSettings


@dataclass(frozen=True)
class OutageSpec:
    sigmas: tuple
    delta: float

    def __post_init__(self):
        sig = tuple(float(s) for s in np.atleast_1d(np.asarray(self.sigmas, dtype=float)))
        if not sig or any(not s > 0 for s in sig):
            raise ValueError(f"every sigma must be positive, got {sig}")
        if not 0.0 < self.delta < 0.5:
            raise ValueError(f"delta must lie in (0, 0.5), got {self.delta}")
        object.__setattr__(self, "sigmas", sig)
        object.__setattr__(self, "delta", float(self.delta))

    def sigma_list(self, K: int) -> list:
        if len(self.sigmas) == 1:
            return [self.sigmas[0]] * K
        if len(self.sigmas) != K:
            raise ValueError(f"need 1 or {K} sigmas, got {len(self.sigmas)}")
        return list(self.sigmas)


def chi2_inv_cdf(p: float, dof: int) -> float:
    """x with P(chi2_dof <= x) = p, by Brent's method on the regularized incomplete gamma."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"p must lie in [0, 1), got {p}")
    if dof < 1 or int(dof) != dof:
        raise ValueError(f"dof must be a positive integer, got {dof}")
    if p == 0.0:
        return 0.0
    k = 0.5 * dof
    # work on the smaller tail so the target is not lost to rounding near 1
    if p <= 0.5:
        g = lambda x: gammainc(k, 0.5 * x) - p  # noqa: E731
    else:
        q = 1.0 - p
        g = lambda x: q - gammaincc(k, 0.5 * x)  # noqa: E731
    hi = max(1.0, float(dof))
    while g(hi) < 0.0:
        hi *= 2.0
    return float(brentq(g, 0.0, hi, xtol=1e-300, rtol=4.0 * np.finfo(float).eps, maxiter=500))


def ocr_radius(outage: OutageSpec, K: int, nt: int, ne) -> list:
    ne = [int(ne)] * K if np.isscalar(ne) else [int(n) for n in ne]
    if len(ne) != K:
        raise ValueError(f"need {K} eavesdropper sizes, got {len(ne)}")
    p = (1.0 - outage.delta) ** (1.0 / K)
    return [math.sqrt(0.5 * s**2 * chi2_inv_cdf(p, 2 * nt * n)) for s, n in zip(outage.sigma_list(K), ne)]


def ocr_safe_design(channels: ChannelSet, outage: OutageSpec, constraints: PowerConstraints,
                    settings: LineSearchSettings | None = None) -> TransmitDesign:
    """Worst-case design on the sphere-bounding balls; its rate is delta-outage safe."""
    radii = ocr_radius(outage, channels.K, channels.nt, channels.ne)
    d = wcr_srm(channels, UncertaintyModel(channels.eves, radii), constraints, settings)
    d.info.update(radii=radii)
    return d


@dataclass
class OutageReport:
    probability: float
    rate_quantile: float  # rate met with empirical probability 1 - delta
    n_draws: int


def monte_carlo_outage(design: TransmitDesign, h, eves, outage: OutageSpec, n_draws: int = 10000,
                       seed=0, claimed_rate: float | None = None, batch: int = 5000) -> OutageReport:
    """Fraction of Gaussian error draws whose secrecy rate falls below the claimed rate.

    ``seed`` is an int, a tuple of substream keys, or a Generator.
    """
    if n_draws < 1000:
        raise ValueError("n_draws must be at least 1000")
    rate = design.achieved_rate_bits if claimed_rate is None else claimed_rate
    if rate is None:
        raise ValueError("design carries no claimed rate")
    rng = as_generator(seed, "outage")
    eves = [np.asarray(G, dtype=complex) for G in eves]
    sigmas = outage.sigma_list(len(eves))
    # one stream per Eve, consumed draw by draw, so batching does not change the draws
    streams = [substream(int(s), "eve-error") for s in rng.integers(0, 2**63, size=len(eves))]
    rates = []
    done = 0
    while done < n_draws:
        n = min(batch, n_draws - done)
        samples = []
        for G, s, g in zip(eves, sigmas, streams):
            z = g.standard_normal((n,) + G.shape + (2,))
            samples.append(G[None] + (s / np.sqrt(2.0)) * (z[..., 0] + 1j * z[..., 1]))
        rates.append(sampled_rates(design, h, samples))
        done += n
    rates = np.concatenate(rates)
    prob = float(np.mean(rates < rate))
    return OutageReport(prob, float(np.quantile(rates, outage.delta)), n_draws)
