"""Closed-form and integral expressions for the successful transmission
probability (STP) under both cooperation schemes.

Every SBS-served quantity has the same shape: an expectation over a unit-cube
of normalised serving distances ``t`` of

    int_0^inf exp(-B_{s,m}(T, theta_eff(t), u)) u^(K-1)/(K-1)! du,

where only the effective SIR threshold ``theta_eff`` depends on ``t``. The
helpers below precompute the threshold-dependent pieces once per cube node and
then evaluate the u-integral either in closed form (equal path-loss exponents,
where B is linear in u) or with a rescaled generalised Gauss-Laguerre rule.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import comb

from .config import DomainError, NetworkConfig, TierParams
from .quadrature import DEFAULT_SPEC, QuadratureSpec, cube_rule, exp_sinh_rule
from .specfun import cross_tier_coef, csc_const, hyp2f1_neg

MAX_COOP = 8
ZERO_TOL = 1e-12
PATHS = ("auto", "corollary", "theorem")


# --------------------------------------------------------------------------
# design-vector types


@dataclass(frozen=True, eq=False)
class Popularity:
    """File request probabilities a_1 >= a_2 >= ... >= a_N summing to one."""

    probabilities: np.ndarray

    def __post_init__(self):
        a = np.array(self.probabilities, dtype=float)
        if a.ndim != 1 or a.size == 0:
            raise DomainError("popularity must be a non-empty 1-D sequence")
        if np.any(a <= 0) or np.any(a > 1):
            raise DomainError("popularity entries must lie in (0, 1]")
        if abs(a.sum() - 1.0) > 1e-12 * max(1.0, a.size / 1e3):
            raise DomainError(f"popularity must sum to 1, got {a.sum()!r}")
        if np.any(np.diff(a) > 0):
            raise DomainError("popularity must be sorted non-increasing")
        a.setflags(write=False)
        object.__setattr__(self, "probabilities", a)

    @property
    def N(self) -> int:
        return self.probabilities.size

    def __len__(self):
        return self.N


@dataclass(frozen=True, eq=False)
class CachingDistribution:
    """Per-file caching probabilities T_n on the capped simplex sum T = M.

    ``relaxed_sum`` marks distributions (i.i.d. caching) whose marginals only
    satisfy sum T <= M.
    """

    probs: np.ndarray
    cache_size: int
    relaxed_sum: bool = False

    def __post_init__(self):
        T = np.array(self.probs, dtype=float)
        M = self.cache_size
        if T.ndim != 1 or T.size == 0:
            raise DomainError("caching distribution must be a non-empty 1-D sequence")
        if int(M) != M or M < 1:
            raise DomainError(f"cache size must be a positive integer, got {M!r}")
        if M > T.size:
            raise DomainError(f"cache size M={M} exceeds the number of files N={T.size}")
        if np.any(~np.isfinite(T)) or np.any(T < -1e-12) or np.any(T > 1 + 1e-12):
            raise DomainError("caching probabilities must lie in [0, 1]")
        T = np.clip(T, 0.0, 1.0)
        total = T.sum()
        if self.relaxed_sum:
            if total > M + 1e-9:
                raise DomainError(f"caching probabilities sum to {total} > M={M}")
        elif abs(total - M) > 1e-9:
            raise DomainError(f"caching probabilities must sum to M={M}, got {total!r}")
        T.setflags(write=False)
        object.__setattr__(self, "probs", T)
        object.__setattr__(self, "cache_size", int(M))

    @property
    def N(self) -> int:
        return self.probs.size

    def __len__(self):
        return self.N


# --------------------------------------------------------------------------
# per-node kernels


def _check_K(K):
    if int(K) != K or K < 1:
        raise DomainError(f"cooperation size K must be a positive integer, got {K!r}")
    if K > MAX_COOP:
        raise DomainError(f"cooperation size K={K} exceeds the supported maximum {MAX_COOP}")
    return int(K)


def _check_path(path):
    if path not in PATHS:
        raise DomainError(f"unknown evaluation path {path!r}")
    return path


@dataclass(frozen=True, eq=False)
class _Nodes:
    """Threshold-dependent parts of B_{x,y} at a set of effective thresholds."""

    weights: np.ndarray
    cross: np.ndarray   # coefficient of (u/T)^rho
    interf: np.ndarray  # (2pi/a) csc(2pi/a) theta^(2/a)
    hyp: np.ndarray     # 2F1(-2/a, 1; 1-2/a; -theta)
    rho: float


def _make_nodes(x: TierParams, y: TierParams, theta, weights) -> _Nodes:
    ax = x.pathloss_exponent
    theta = np.asarray(theta, dtype=float)
    return _Nodes(
        weights=np.asarray(weights, dtype=float),
        cross=cross_tier_coef(x, y, theta),
        interf=csc_const(ax) * theta ** (2.0 / ax),
        hyp=np.asarray(hyp2f1_neg(ax, theta), dtype=float),
        rho=ax / y.pathloss_exponent,
    )


@lru_cache(maxsize=256)
def _sbs_nodes(cfg: NetworkConfig, d: int, leading_one: bool, spec: QuadratureSpec) -> _Nodes:
    """Nodes for theta_eff = theta_s / (lead + sum_{i<=d} t_i^(-alpha_s/2)).

    ``lead`` is 1 when the farthest serving SBS is the cooperation-set boundary
    itself and 0 otherwise. d = 0 means no cube integral (a single node).
    """
    th = cfg.theta_s
    if d == 0:
        if not leading_one:
            raise DomainError("empty serving set")
        return _make_nodes(cfg.sbs, cfg.mbs, np.array([th]), np.array([1.0]))
    t, w = cube_rule(d, spec)
    with np.errstate(divide="ignore"):
        s = np.sum(t ** (-cfg.sbs.pathloss_exponent / 2.0), axis=1)
    theta_eff = th / ((1.0 if leading_one else 0.0) + s)
    return _make_nodes(cfg.sbs, cfg.mbs, theta_eff, w)


def _integral(nodes: _Nodes, T, K: int, closed: bool, spec: QuadratureSpec, deriv=False):
    """sum_j w_j int exp(-B(T, theta_j, u)) u^(K-1)/(K-1)! du for each T.

    Returns an array shaped like T; with ``deriv`` the T-derivative instead.
    """
    T = np.atleast_1d(np.asarray(T, dtype=float))
    out = np.empty(T.shape, dtype=float)
    if closed:
        # B = u * b with b = (cross + interf)/T + hyp - interf
        num = nodes.cross + nodes.interf
        base = nodes.hyp - nodes.interf
        for chunk in _chunks(T.size, nodes.weights.size):
            b = num[None, :] / T[chunk, None] + base[None, :]
            if deriv:
                vals = K * b ** (-K - 1) * num[None, :] / T[chunk, None] ** 2
            else:
                vals = b ** (-K)
            out[chunk] = vals @ nodes.weights
        return out

    # B is not linear in u when rho != 1; rescale u = s / B(u=1) and use a
    # double-exponential rule, which copes with the u^rho cusp at the origin
    s, ws = exp_sinh_rule(spec.exp_sinh_step)
    ws = ws * s ** (K - 1) / math.factorial(K - 1)
    rho = nodes.rho
    for i, Ti in enumerate(T):
        lin = (1.0 / Ti - 1.0) * nodes.interf + nodes.hyp
        cr = nodes.cross / Ti**rho
        rate = lin + cr
        u = s[None, :] / rate[:, None]
        with np.errstate(under="ignore"):
            g = np.exp(-(cr[:, None] * u**rho + lin[:, None] * u))
        if deriv:
            g = g * (rho * cr[:, None] * u**rho / Ti + u * nodes.interf[:, None] / Ti**2)
        out[i] = ((g @ ws) / rate**K) @ nodes.weights
    return out


def _chunks(n_rows, n_cols, budget=4_000_000):
    step = max(1, budget // max(n_cols, 1))
    for start in range(0, n_rows, step):
        yield slice(start, min(start + step, n_rows))


def _closed(cfg: NetworkConfig, path: str) -> bool:
    _check_path(path)
    if path == "corollary":
        if not cfg.symmetric:
            raise DomainError("closed-form path needs equal path-loss exponents")
        return True
    return path == "auto" and cfg.symmetric


def _scalar_or_array(x, like):
    return float(x[0]) if np.ndim(like) == 0 else x


# --------------------------------------------------------------------------
# single-file quantities


def psi_m(cfg: NetworkConfig, spec: QuadratureSpec = DEFAULT_SPEC, path: str = "auto") -> float:
    """STP of a file delivered by the nearest MBS."""
    nodes = _make_nodes(cfg.mbs, cfg.sbs, np.array([cfg.theta_m]), np.array([1.0]))
    return float(_integral(nodes, 1.0, 1, _closed(cfg, path), spec)[0])


def _check_T_open(T):
    Ta = np.asarray(T, dtype=float)
    if np.any(~np.isfinite(Ta)) or np.any(Ta < 0) or np.any(Ta > 1):
        raise DomainError("caching probability must lie in [0, 1]")
    if np.any(Ta == 0):
        raise DomainError("T = 0 has no SBS service; use psi_m for uncached files")
    return Ta


def psi_s1(cfg: NetworkConfig, K: int, T, spec: QuadratureSpec = DEFAULT_SPEC,
           path: str = "auto"):
    """STP of a file with caching probability T served jointly by its K nearest
    caching SBSs (Scheme 1). Vectorised over T."""
    K = _check_K(K)
    Ta = _check_T_open(T)
    nodes = _sbs_nodes(cfg, K - 1, True, spec)
    out = _integral(nodes, Ta, K, _closed(cfg, path), spec)
    return _scalar_or_array(out, T)


def psi_s1_dT(cfg: NetworkConfig, K: int, T, spec: QuadratureSpec = DEFAULT_SPEC,
              path: str = "auto"):
    """d psi_s1 / dT, differentiated under the integral sign."""
    K = _check_K(K)
    Ta = _check_T_open(T)
    nodes = _sbs_nodes(cfg, K - 1, True, spec)
    out = _integral(nodes, Ta, K, _closed(cfg, path), spec, deriv=True)
    return _scalar_or_array(out, T)


def _check_k(K, k):
    K = _check_K(K)
    if int(k) != k or not 1 <= k <= K:
        raise DomainError(f"k must lie in 1..{K}, got {k!r}")
    return K, int(k)


def q_k1(cfg: NetworkConfig, K: int, k: int, spec: QuadratureSpec = DEFAULT_SPEC,
         path: str = "auto") -> float:
    """Conditional STP given k serving SBSs, none of them the K-th nearest."""
    K, k = _check_k(K, k)
    if k == K:
        return 0.0
    nodes = _sbs_nodes(cfg, k, False, spec)
    return float(_integral(nodes, 1.0, K, _closed(cfg, path), spec)[0])


def q_k2(cfg: NetworkConfig, K: int, k: int, spec: QuadratureSpec = DEFAULT_SPEC,
         path: str = "auto") -> float:
    """Conditional STP given k serving SBSs, one of them the K-th nearest."""
    K, k = _check_k(K, k)
    nodes = _sbs_nodes(cfg, k - 1, True, spec)
    return float(_integral(nodes, 1.0, K, _closed(cfg, path), spec)[0])


# --------------------------------------------------------------------------
# Scheme 2 tables


@dataclass(frozen=True)
class StpTables:
    """Per-(config, K) constants of the Scheme-2 binomial mixture.

    ``psi_s2[0]`` is psi_m by convention; q1/q2 are indexed k = 1..K at
    positions 0..K-1.
    """

    psi_m: float
    psi_s2: tuple
    q1: tuple
    q2: tuple
    coop_size: int

    def __post_init__(self):
        K = self.coop_size
        if len(self.psi_s2) != K + 1 or len(self.q1) != K or len(self.q2) != K:
            raise DomainError("table lengths do not match the cooperation size")
        vals = np.array([self.psi_m, *self.psi_s2, *self.q1, *self.q2])
        if np.any(vals < -1e-12) or np.any(vals > 1 + 1e-12):
            raise DomainError("STP table entries must lie in [0, 1]")
        if self.q1[-1] != 0.0:
            raise DomainError("q_{K,1} must be 0")
        if self.psi_s2[0] != self.psi_m:
            raise DomainError("psi_s2[0] must equal psi_m")

    @property
    def increasing(self) -> bool:
        d = np.diff(self.psi_s2[1:])
        return bool(np.all(d > 0))

    @property
    def in_operating_region(self) -> bool:
        return self.psi_s2[1] > self.psi_m

    @property
    def coefficients(self) -> np.ndarray:
        return np.asarray(self.psi_s2, dtype=float)


def build_stp_tables(cfg: NetworkConfig, K: int, spec: QuadratureSpec = DEFAULT_SPEC,
                     path: str = "auto") -> StpTables:
    K = _check_K(K)
    pm = psi_m(cfg, spec, path)
    q1 = tuple(q_k1(cfg, K, k, spec, path) for k in range(1, K + 1))
    q2 = tuple(q_k2(cfg, K, k, spec, path) for k in range(1, K + 1))
    s2 = tuple((1.0 - k / K) * q1[k - 1] + k / K * q2[k - 1] for k in range(1, K + 1))
    tables = StpTables(psi_m=pm, psi_s2=(pm, *s2), q1=q1, q2=q2, coop_size=K)
    if not tables.increasing:
        warnings.warn("psi_s2,k is not strictly increasing in k", stacklevel=2)
    return tables


def _check_unit(T):
    Ta = np.asarray(T, dtype=float)
    if np.any(~np.isfinite(Ta)) or np.any(Ta < 0) or np.any(Ta > 1):
        raise DomainError("caching probability must lie in [0, 1]")
    return Ta


def psi_ms(tables: StpTables, T):
    """Binomial mixture sum_k C(K,k) T^k (1-T)^(K-k) psi_s2,k (psi_s2,0 = psi_m)."""
    Ta = _check_unit(T)
    K = tables.coop_size
    k = np.arange(K + 1)
    t = Ta[..., None]
    basis = comb(K, k) * t**k * (1.0 - t) ** (K - k)
    out = basis @ tables.coefficients
    return float(out) if np.ndim(T) == 0 else out


def psi_ms_dT(tables: StpTables, T):
    """Exact derivative of :func:`psi_ms` in T."""
    Ta = _check_unit(T)
    K = tables.coop_size
    diffs = np.diff(tables.coefficients)
    k = np.arange(K)
    t = Ta[..., None]
    basis = comb(K - 1, k) * t**k * (1.0 - t) ** (K - 1 - k)
    out = K * (basis @ diffs)
    return float(out) if np.ndim(T) == 0 else out


# --------------------------------------------------------------------------
# scheme-level STP


def _check_pair(T: CachingDistribution, a: Popularity):
    if T.N != a.N:
        raise DomainError(f"caching distribution has {T.N} files, popularity has {a.N}")


def stp_scheme1(cfg: NetworkConfig, K: int, T: CachingDistribution, a: Popularity,
                spec: QuadratureSpec = DEFAULT_SPEC, path: str = "auto") -> float:
    """sum_n a_n (psi_m if T_n == 0 else psi_s1(T_n))."""
    _check_pair(T, a)
    probs = T.probs
    cached = probs >= ZERO_TOL
    vals = np.full(probs.shape, psi_m(cfg, spec, path))
    if np.any(cached):
        vals[cached] = psi_s1(cfg, K, probs[cached], spec, path)
    return float(np.dot(a.probabilities, vals))


def stp_scheme2(cfg: NetworkConfig, K: int, T: CachingDistribution, a: Popularity,
                spec: QuadratureSpec = DEFAULT_SPEC, path: str = "auto",
                tables: StpTables | None = None) -> float:
    """sum_n a_n psi_ms(T_n) with one shared table build."""
    _check_pair(T, a)
    if tables is None:
        tables = build_stp_tables(cfg, K, spec, path)
    elif tables.coop_size != K:
        raise DomainError("tables were built for a different cooperation size")
    return float(np.dot(a.probabilities, psi_ms(tables, T.probs)))
