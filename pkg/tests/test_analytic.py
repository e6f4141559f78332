import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from hetcache import analytic as A
from hetcache.config import DomainError
from hetcache.policies import baseline_distribution, zipf
from hetcache.specfun import b_kernel


def quad_oracle(cfg, T, theta, K=1, x="sbs"):
    """Plain adaptive quadrature of the single-node u-integral."""
    tx, ty = (cfg.sbs, cfg.mbs) if x == "sbs" else (cfg.mbs, cfg.sbs)
    f = lambda u: math.exp(-b_kernel(tx, ty, T, theta, u)) * u ** (K - 1) / math.factorial(K - 1)
    return integrate.quad(f, 0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=400)[0]


def test_psi_m_small_rate_limit(cfg):
    assert A.psi_m(cfg.with_rate(1e-3)) == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("path", ["corollary", "theorem"])
def test_psi_m_closed_form(cfg, path):
    b = b_kernel(cfg.mbs, cfg.sbs, 1.0, cfg.theta_m, 1.0)
    assert A.psi_m(cfg, path=path) == pytest.approx(1 / b, rel=1e-10)


def test_psi_m_asym_matches_adaptive_quadrature(cfg_asym):
    ref = quad_oracle(cfg_asym, 1.0, cfg_asym.theta_m, x="mbs")
    assert A.psi_m(cfg_asym) == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("T", [0.01, 0.3, 1.0])
def test_psi_s1_K1_asym_matches_adaptive_quadrature(cfg_asym, T):
    assert A.psi_s1(cfg_asym, 1, T) == pytest.approx(quad_oracle(cfg_asym, T, cfg_asym.theta_s), rel=1e-9)


def test_psi_s1_K2_asym_matches_double_integral(cfg_asym):
    c = cfg_asym
    f = lambda u, t: math.exp(-b_kernel(c.sbs, c.mbs, 0.5, c.theta_s / (1 + t**-2.0), u)) * u
    ref = integrate.dblquad(f, 0, 1, 0, np.inf, epsabs=1e-13, epsrel=1e-11)[0]
    assert A.psi_s1(c, 2, 0.5) == pytest.approx(ref, rel=1e-8)


def test_psi_s1_trivial_limit(cfg):
    assert A.psi_s1(cfg.with_rate(1e-3), 1, 1.0) == pytest.approx(1.0, abs=1e-4)


@pytest.mark.parametrize("K", [1, 2, 3, 5])
def test_psi_s1_increasing(cfg, K):
    T = np.linspace(0.01, 1, 50)
    v = A.psi_s1(cfg, K, T)
    assert np.all(np.diff(v) > 0)
    assert A.psi_s1(cfg, K, 0.3) < A.psi_s1(cfg, K, 0.9)


def test_psi_s1_K1_closed_form(cfg):
    T = 0.37
    assert A.psi_s1(cfg, 1, T) == pytest.approx(1 / b_kernel(cfg.sbs, cfg.mbs, T, cfg.theta_s, 1.0), rel=1e-12)


@pytest.mark.parametrize("K", [1, 2, 3, 4])
def test_closed_form_vs_integral_psi_s1(cfg, K):
    T = np.array([0.02, 0.4, 1.0])
    a = A.psi_s1(cfg, K, T, path="corollary")
    b = A.psi_s1(cfg, K, T, path="theorem")
    np.testing.assert_allclose(a, b, rtol=1e-10)


def test_closed_form_needs_symmetry(cfg_asym):
    with pytest.raises(DomainError):
        A.psi_m(cfg_asym, path="corollary")


@pytest.mark.parametrize("bad", [0.0, -0.1, 1.1, np.nan])
def test_psi_s1_domain(cfg, bad):
    with pytest.raises(DomainError):
        A.psi_s1(cfg, 2, bad)


def test_K_bounds(cfg):
    with pytest.raises(DomainError):
        A.psi_s1(cfg, 0, 0.5)
    with pytest.raises(DomainError):
        A.psi_s1(cfg, 9, 0.5)


@pytest.mark.parametrize("K", [1, 2, 3])
def test_psi_s1_dT_finite_difference(cfg, cfg_asym, K):
    for c in (cfg, cfg_asym):
        h = 1e-5
        fd = (A.psi_s1(c, K, 0.5 + h) - A.psi_s1(c, K, 0.5 - h)) / (2 * h)
        d = A.psi_s1_dT(c, K, 0.5)
        assert d > 0
        assert d == pytest.approx(fd, rel=1e-6)


def test_psi_s1_dT_closed_form_K1(cfg):
    lc_lin = b_kernel(cfg.sbs, cfg.mbs, 1.0, cfg.theta_s, 1.0)
    # psi = T / (c1 + c2 T) with c1 + c2 = B(T=1); derivative c1 / (c1 + c2 T)^2
    from hetcache.optimizer import lemma2_constants
    c = lemma2_constants(cfg)
    assert c.c1 + c.c2 == pytest.approx(lc_lin, rel=1e-13)
    T = 0.42
    assert A.psi_s1_dT(cfg, 1, T) == pytest.approx(c.c1 / (c.c1 + c.c2 * T) ** 2, rel=1e-12)


def test_q_k1_zero_at_K(cfg):
    for K in (1, 2, 3):
        assert A.q_k1(cfg, K, K) == 0.0


@pytest.mark.parametrize("k", [0, 4])
def test_q_range(cfg, k):
    with pytest.raises(DomainError):
        A.q_k1(cfg, 3, k)
    with pytest.raises(DomainError):
        A.q_k2(cfg, 3, k)


def test_q_k2_k1_closed_form(cfg):
    b = b_kernel(cfg.sbs, cfg.mbs, 1.0, cfg.theta_s, 1.0)
    assert A.q_k2(cfg, 2, 1) == pytest.approx(b**-2, rel=1e-12)


@pytest.mark.parametrize("K", [1, 2, 3])
def test_q_k2_at_K_equals_psi_s1_at_one(cfg, cfg_asym, K):
    for c in (cfg, cfg_asym):
        assert A.q_k2(c, K, K) == pytest.approx(A.psi_s1(c, K, 1.0), rel=1e-12)


@pytest.mark.parametrize("k", [1, 2])
def test_q_dual_path(cfg, k):
    for f in (A.q_k1, A.q_k2):
        assert f(cfg, 3, k, path="corollary") == pytest.approx(f(cfg, 3, k, path="theorem"), rel=1e-10)


def test_tables_invariants(cfg):
    t = A.build_stp_tables(cfg, 3)
    assert t.psi_s2[3] == t.q2[2]
    assert t.increasing
    assert t.in_operating_region
    assert t.psi_s2[0] == t.psi_m


def test_psi_ms_examples(cfg):
    t = A.build_stp_tables(cfg, 2)
    assert A.psi_ms(t, 0.0) == pytest.approx(t.psi_m, abs=1e-15)
    assert A.psi_ms(t, 1.0) == pytest.approx(t.psi_s2[2], abs=1e-15)
    t1 = A.build_stp_tables(cfg, 1)
    assert A.psi_ms(t1, 0.5) == pytest.approx((t1.psi_m + t1.psi_s2[1]) / 2, rel=1e-14)
    assert A.psi_ms_dT(t1, 0.2) == pytest.approx(t1.psi_s2[1] - t1.psi_m, rel=1e-14)
    assert A.psi_ms_dT(t, 0.0) == pytest.approx(2 * (t.psi_s2[1] - t.psi_m), rel=1e-14)


def test_psi_ms_dT_finite_difference(cfg):
    t = A.build_stp_tables(cfg, 3)
    h = 1e-6
    fd = (A.psi_ms(t, 0.37 + h) - A.psi_ms(t, 0.37 - h)) / (2 * h)
    assert A.psi_ms_dT(t, 0.37) == pytest.approx(fd, rel=1e-8)


def test_psi_ms_bounds(cfg):
    t = A.build_stp_tables(cfg, 3)
    v = A.psi_ms(t, np.linspace(0, 1, 101))
    assert v.min() >= min(t.psi_m, t.psi_s2[1]) - 1e-15
    assert v.max() <= t.psi_s2[3] + 1e-15


def test_tables_validation():
    with pytest.raises(DomainError):
        A.StpTables(0.1, (0.1, 0.5), (0.3,), (0.5,), 2)
    with pytest.raises(DomainError):
        A.StpTables(0.1, (0.1, 0.5), (0.3,), (0.5,), 1)


def test_stp_scheme1_mpc_decomposition(cfg):
    a = zipf(10, 0.8)
    T = baseline_distribution("MPC", a, 2)
    for K in (1, 2, 3):
        expect = a.probabilities[:2].sum() * A.psi_s1(cfg, K, 1.0) + a.probabilities[2:].sum() * A.psi_m(cfg)
        assert A.stp_scheme1(cfg, K, T, a) == pytest.approx(expect, rel=1e-14)


def test_stp_scheme2_K1_linear(cfg, fig2_T, fig2_a):
    t = A.build_stp_tables(cfg, 1)
    T, a = fig2_T.probs, fig2_a.probabilities
    expect = np.sum(a * ((1 - T) * t.psi_m + T * t.psi_s2[1]))
    assert A.stp_scheme2(cfg, 1, fig2_T, fig2_a) == pytest.approx(expect, rel=1e-14)


def test_schemes_agree_on_binary_T(cfg):
    rng = np.random.default_rng(3)
    a = zipf(12, 0.6)
    for _ in range(4):
        T = np.zeros(12)
        T[rng.choice(12, 4, replace=False)] = 1.0
        d = A.CachingDistribution(T, 4)
        for K in (1, 2, 3):
            assert abs(A.stp_scheme1(cfg, K, d, a) - A.stp_scheme2(cfg, K, d, a)) <= 1e-6


def test_stp_decreasing_in_rate_increasing_in_K(cfg, fig2_T, fig2_a):
    for f in (A.stp_scheme1, A.stp_scheme2):
        grid = np.array([[f(cfg.with_rate(r * 1e6), K, fig2_T, fig2_a) for r in (0.5, 1, 2, 4)]
                         for K in (1, 2, 3)])
        assert np.all(np.diff(grid, axis=1) < 0)
        assert np.all(np.diff(grid, axis=0) > 0)


def test_length_mismatch(cfg, fig2_T):
    with pytest.raises(DomainError):
        A.stp_scheme1(cfg, 1, fig2_T, zipf(11, 0.8))


def test_zero_threshold_semantics(cfg, fig2_a):
    T = A.CachingDistribution([1.0, 1.0 - 1e-13, 1e-13] + [0.0] * 7, 2)
    expect = A.stp_scheme1(cfg, 2, A.CachingDistribution([1.0, 1.0] + [0.0] * 8, 2), fig2_a)
    assert A.stp_scheme1(cfg, 2, T, fig2_a) == pytest.approx(expect, abs=1e-10)


def test_types_validation():
    with pytest.raises(DomainError):
        A.Popularity([0.5, 0.6])
    with pytest.raises(DomainError):
        A.Popularity([0.4, 0.6])
    with pytest.raises(DomainError):
        A.CachingDistribution([0.5, 0.4], 1)
    with pytest.raises(DomainError):
        A.CachingDistribution([1.0, 1.0], 3)
    with pytest.raises(DomainError):
        A.CachingDistribution([1.2, -0.2], 1)
    A.CachingDistribution([0.5, 0.3], 1, relaxed_sum=True)


@settings(max_examples=25, deadline=None)
@given(K=st.integers(1, 4), T=st.floats(0.001, 1.0))
def test_psi_s1_in_unit_interval(cfg, K, T):
    v = A.psi_s1(cfg, K, T)
    assert 0 < v < 1
