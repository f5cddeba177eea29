import math

import numpy as np
import pytest

from secrecy_an.channel import ChannelSet, PowerConstraints, TransmitDesign, generate_channels, secrecy_rate
from secrecy_an.linalg import is_psd, numerical_rank, random_psd
from secrecy_an.robust import (
    UncertaintyModel,
    build_Tk,
    sample_ball,
    sampled_worst_rate,
    solve_wcr_cc_sdp,
    verify_prop2_sampling,
    wcr_line_search,
    wcr_rank_one_reconstruct,
    wcr_srm,
    worst_case_beta,
    worst_case_rate,
)
from secrecy_an.srm import LineSearchSettings, an_srm, line_search_srm, solve_cc_sdp

FAST = LineSearchSettings(grid_points=20)


@pytest.fixture(scope="module")
def instance():
    ch = generate_channels(5, 3, 2, 2)
    return ch, PowerConstraints(30.0)


@pytest.fixture(scope="module")
def robust_design(instance):
    ch, c = instance
    unc = UncertaintyModel.around(ch, 0.2)
    return wcr_srm(ch, unc, c, FAST), unc


def test_uncertainty_validation():
    with pytest.raises(ValueError):
        UncertaintyModel((np.ones((2, 1)),), [0.0])
    with pytest.raises(ValueError):
        UncertaintyModel((np.ones((2, 1)),), [0.1, 0.2])


def test_tk_zero_covariances(rng):
    G = rng.standard_normal((3, 2))
    T = build_Tk(2.0, np.zeros((3, 3)), np.zeros((3, 3)), 0.5, G, 1.0)
    assert np.allclose(T, 0.5 * np.eye(5))


def test_tk_large_radius_limit(rng):
    G = rng.standard_normal((2, 1)) + 0j
    S = random_psd(rng, 2)
    W = 0.1 * random_psd(rng, 2, 1)
    beta = 3.0
    M = (beta - 1) * S - W
    T = build_Tk(beta, W, S, 0.0, G, 1e9)
    nominal = (beta - 1) * (np.eye(1) + G.conj().T @ S @ G) - G.conj().T @ W @ G
    assert is_psd(T, 1e-12) == (is_psd(M, 1e-12) and is_psd(nominal, 1e-12))
    T2 = build_Tk(beta, 50 * W, S, 0.0, G, 1e9)
    assert not is_psd(T2, 1e-12)


def test_tk_hermitian(rng):
    for _ in range(20):
        G = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
        T = build_Tk(1 + rng.random() * 3, random_psd(rng, 3), random_psd(rng, 3), rng.random(), G, 0.3)
        assert np.abs(T - T.conj().T).max() <= 1e-14


def test_tk_shape_mismatch():
    with pytest.raises(ValueError):
        build_Tk(2.0, np.eye(2), np.eye(2), 0.1, np.ones((3, 1)), 0.1)


def test_tiny_ball_matches_perfect_cc(instance):
    ch, c = instance
    unc = UncertaintyModel.around(ch, 1e-9)
    for alpha in (0.2, 0.5):
        a = solve_wcr_cc_sdp(alpha, ch.h, unc, c)
        b = solve_cc_sdp(alpha, ch, c)
        assert a.ok and b.ok
        assert a.rate_bits == pytest.approx(b.rate_bits, abs=1e-3)


def test_large_ball_kills_rate():
    ch = ChannelSet(np.array([1.0 + 0j]), (np.array([[0.5 + 0j]]),))
    unc = UncertaintyModel.around(ch, 0.6)  # the ball reaches |g| = 1.1 > |h|
    d = wcr_line_search(ch, unc, PowerConstraints(10.0), FAST)
    assert d.achieved_rate_bits <= 1e-4


def test_cc_solution_passes_sampling(instance):
    ch, c = instance
    unc = UncertaintyModel.around(ch, 0.2)
    sol = solve_wcr_cc_sdp(0.3, ch.h, unc, c)
    d = sol.design()
    assert verify_prop2_sampling(d.beta, d.W, d.Sigma, unc, 10**4, seed=1) == 0


def test_wcr_line_search_continuity(instance):
    ch, c = instance
    perfect = line_search_srm(ch, c, FAST).achieved_rate_bits
    tiny = wcr_line_search(ch, UncertaintyModel.around(ch, 1e-9), c, FAST).achieved_rate_bits
    robust = wcr_line_search(ch, UncertaintyModel.around(ch, 0.2), c, FAST).achieved_rate_bits
    assert tiny == pytest.approx(perfect, abs=1e-2)
    assert robust <= perfect + 1e-4


def test_robust_reconstruction(instance, robust_design):
    ch, c = instance
    unc = UncertaintyModel.around(ch, 0.2)
    relaxed = wcr_line_search(ch, unc, c, FAST)
    out = wcr_rank_one_reconstruct(relaxed, ch, unc, c)
    assert numerical_rank(out.W) <= 1
    assert np.trace(out.W + out.Sigma).real <= np.trace(relaxed.W + relaxed.Sigma).real + 1e-7
    d, _ = robust_design
    assert wcr_rank_one_reconstruct(d, ch, unc, c) is d


def test_robust_tightness(instance, robust_design):
    ch, _ = instance
    d, unc = robust_design
    assert numerical_rank(d.W) <= 1
    assert worst_case_rate(d, ch.h, unc) == pytest.approx(d.achieved_rate_bits, abs=1e-3)


def test_worst_case_tiny_ball(instance):
    ch, c = instance
    d = an_srm(ch, c, FAST)
    wc = worst_case_rate(d, ch.h, UncertaintyModel.around(ch, 1e-9))
    assert wc == pytest.approx(secrecy_rate(d, ch), abs=1e-6)


def test_worst_case_lower_bounds_samples(instance, robust_design):
    ch, c = instance
    for d, unc in (robust_design, (an_srm(ch, c, FAST), UncertaintyModel.around(ch, 0.2))):
        wc = worst_case_rate(d, ch.h, unc)
        assert sampled_worst_rate(d, ch.h, unc, 10**4, seed=3) >= wc - 1e-6


def test_worst_case_gap_small_on_small_instance():
    ch = generate_channels(9, 2, 1, 1)
    unc = UncertaintyModel.around(ch, 0.2)
    d = wcr_srm(ch, unc, PowerConstraints(10.0), FAST)
    wc = worst_case_rate(d, ch.h, unc)
    sampled = sampled_worst_rate(d, ch.h, unc, 10**5, seed=4, boundary_fraction=0.9)
    assert wc - 1e-6 <= sampled <= wc + 0.05


def test_worst_case_zero_signal(instance):
    ch, _ = instance
    d = TransmitDesign(np.zeros((3, 3)), random_psd(np.random.default_rng(0), 3))
    assert worst_case_rate(d, ch.h, UncertaintyModel.around(ch, 0.5)) == 0.0


def test_worst_case_rejects_higher_rank(instance):
    ch, _ = instance
    d = TransmitDesign(np.eye(3), np.zeros((3, 3)))
    with pytest.raises(ValueError, match="rank"):
        worst_case_rate(d, ch.h, UncertaintyModel.around(ch, 0.1))


def test_worst_case_beta_bisection_accuracy(rng):
    G = rng.standard_normal((2, 1)) + 0j
    W = random_psd(rng, 2, 1)
    b = worst_case_beta(W, np.zeros((2, 2)), G, 1e-12)
    # with Sigma = 0 and a vanishing ball, beta = 1 + G^H W G
    assert b == pytest.approx(1 + (G.conj().T @ W @ G).real.item(), rel=1e-9)


def test_prop2_zero_signal(instance):
    ch, _ = instance
    unc = UncertaintyModel.around(ch, 0.5)
    assert verify_prop2_sampling(1.0, np.zeros((3, 3)), np.eye(3), unc, 1000) == 0


def test_prop2_detects_shrunk_beta():
    ch = ChannelSet(np.array([1.0 + 0j]), (np.array([[0.8 + 0j]]),))
    unc = UncertaintyModel.around(ch, 0.3)
    W, S = np.array([[4.0 + 0j]]), np.zeros((1, 1))
    beta = worst_case_beta(W, S, unc.eves[0], 0.3)
    assert verify_prop2_sampling(beta, W, S, unc, 10**4, seed=2) == 0
    assert beta - 0.5 >= 1
    assert verify_prop2_sampling(beta - 0.5, W, S, unc, 10**4, seed=2) > 0


def test_sample_ball_radii(rng):
    D = sample_ball(rng, (3, 2), 0.4, 1000, boundary_fraction=0.25)
    norms = np.sqrt(np.sum(np.abs(D) ** 2, axis=(1, 2)))
    assert norms.max() <= 0.4 * (1 + 1e-12)
    assert np.sum(np.isclose(norms, 0.4)) >= 250
    assert math.isclose(np.median(norms[:750]) / 0.4, 0.5 ** (1 / 12), rel_tol=0.05)
