"""Caching-distribution optimisation for both cooperation schemes.

Scheme 1: the optimum caches the N_s most popular files with probabilities
above T_th and drops the rest, so we search N_s exhaustively and solve each
continuous subproblem either in closed form (K = 1, equal path-loss
exponents) or by gradient projection.

Scheme 2: the objective is separable with a polynomial per file; K = 1 is
linear (greedy), a discretely concave coefficient sequence gives a concave
problem solved by bisection on the KKT multiplier, anything else falls back to
gradient projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.optimize import brentq

from .analytic import (
    CachingDistribution,
    Popularity,
    StpTables,
    build_stp_tables,
    psi_m,
    psi_ms,
    psi_ms_dT,
    psi_s1,
    psi_s1_dT,
    stp_scheme1,
    stp_scheme2,
    _check_K,
)
from .config import DomainError, NetworkConfig
from .quadrature import DEFAULT_SPEC, QuadratureSpec
from .specfun import cross_tier_coef, csc_const, hyp2f1_neg


class RegionError(DomainError):
    """The configuration lies outside the region where SBS service can beat MBS
    service; ``sbs_value`` and ``psi_m`` hold the compared STPs."""

    def __init__(self, message, sbs_value, psi_m):
        super().__init__(message)
        self.sbs_value = sbs_value
        self.psi_m = psi_m


class InfeasibleError(DomainError):
    pass


# --------------------------------------------------------------------------
# projection and gradient projection


def project_capped_simplex(v, lo: float, hi: float, total: float) -> np.ndarray:
    """Euclidean projection of v onto {lo <= x_i <= hi, sum x = total}."""
    v = np.asarray(v, dtype=float)
    n = v.size
    if not (np.isfinite(lo) and np.isfinite(hi) and np.isfinite(total)) or lo > hi:
        raise DomainError("projection needs finite lo <= hi")
    scale = max(1.0, abs(total))
    if n * lo > total + 1e-12 * scale or n * hi < total - 1e-12 * scale:
        raise DomainError(f"no point of [{lo}, {hi}]^{n} sums to {total}")
    if not np.all(np.isfinite(v)):
        raise DomainError("projection input must be finite")
    # sum(clip(v - s)) is non-increasing in s; bracket and bisect the shift
    s_lo = np.min(v) - hi
    s_hi = np.max(v) - lo
    for _ in range(200):
        mid = 0.5 * (s_lo + s_hi)
        if np.clip(v - mid, lo, hi).sum() > total:
            s_lo = mid
        else:
            s_hi = mid
        if s_hi - s_lo <= 1e-15 * max(1.0, abs(mid)):
            break
    x = np.clip(v - 0.5 * (s_lo + s_hi), lo, hi)
    # absorb the last rounding error into the free coordinates
    r = total - x.sum()
    free = (x > lo) & (x < hi)
    if r != 0 and np.any(free):
        x[free] += r / free.sum()
        x = np.clip(x, lo, hi)
    return x


@dataclass(frozen=True)
class GPResult:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool
    pg_norm: float


def gradient_projection(fun, grad, x0, lo: float, hi: float, total: float,
                        max_iter: int = 500, tol: float = 1e-6, sigma: float = 1e-4,
                        shrink: float = 0.5) -> GPResult:
    """Maximise ``fun`` over the capped simplex by projected gradient ascent.

    Armijo backtracking along the projection arc; the first trial step is 1,
    later ones use the Barzilai-Borwein length of the previous move.
    """
    x = project_capped_simplex(x0, lo, hi, total)
    f = float(fun(x))
    g = np.asarray(grad(x), dtype=float)
    step = 1.0
    pg = np.inf
    for it in range(max_iter):
        pg = float(np.linalg.norm(project_capped_simplex(x + g, lo, hi, total) - x))
        if pg <= tol:
            return GPResult(x, f, it, True, pg)
        s = step
        while True:
            x_new = project_capped_simplex(x + s * g, lo, hi, total)
            f_new = float(fun(x_new))
            if f_new >= f + sigma * float(g @ (x_new - x)):
                break
            s *= shrink
            if s < 1e-20:
                return GPResult(x, f, it, False, pg)
        g_new = np.asarray(grad(x_new), dtype=float)
        dx, dg = x_new - x, g_new - g
        curv = -float(dx @ dg)
        step = float(np.clip(dx @ dx / curv, 1e-10, 1e10)) if curv > 0 else 1.0
        if f_new - f <= 1e-15 * max(1.0, abs(f)) and np.max(np.abs(dx)) < 1e-14:
            x, f, g = x_new, f_new, g_new
            pg = float(np.linalg.norm(project_capped_simplex(x + g, lo, hi, total) - x))
            return GPResult(x, f, it + 1, pg <= tol, pg)
        x, f, g = x_new, f_new, g_new
    pg = float(np.linalg.norm(project_capped_simplex(x + g, lo, hi, total) - x))
    return GPResult(x, f, max_iter, pg <= tol, pg)


# --------------------------------------------------------------------------
# Scheme 1


@dataclass(frozen=True)
class Lemma2Constants:
    """psi_s1(T) = T / (c1 + c2 T) for K = 1 and equal exponents; the tie
    point with MBS service is T_th = c1 / c3."""

    c1: float
    c2: float
    c3: float

    @property
    def T_th(self) -> float:
        return self.c1 / self.c3


def lemma2_constants(cfg: NetworkConfig, spec: QuadratureSpec = DEFAULT_SPEC) -> Lemma2Constants:
    if not cfg.symmetric:
        raise DomainError("closed form needs equal path-loss exponents")
    a = cfg.sbs.pathloss_exponent
    th = cfg.theta_s
    lin = csc_const(a) * th ** (2.0 / a)
    c1 = float(lin + cross_tier_coef(cfg.sbs, cfg.mbs, th))
    c2 = float(hyp2f1_neg(a, th) - lin)
    # exact root of T / (c1 + c2 T) = psi_m
    c3 = 1.0 / psi_m(cfg, spec) - c2
    return Lemma2Constants(c1, c2, c3)


def _region_scheme1(cfg, K, spec):
    top = float(psi_s1(cfg, K, 1.0, spec))
    pm = psi_m(cfg, spec)
    if not top > pm:
        raise RegionError(
            f"psi_s1(1) = {top:.6g} does not exceed psi_m = {pm:.6g}", top, pm)
    return top, pm


def find_t_th(cfg: NetworkConfig, K: int, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Root of psi_s1(T) = psi_m on (0, 1)."""
    K = _check_K(K)
    _, pm = _region_scheme1(cfg, K, spec)
    if K == 1 and cfg.symmetric:
        return lemma2_constants(cfg, spec).T_th
    # psi_s1 vanishes like T^K at the origin; bracket on a log grid first
    lo = 0.5
    while psi_s1(cfg, K, lo, spec) > pm:
        lo *= 0.5
        if lo < 1e-300:
            raise ArithmeticError("could not bracket T_th")
    return brentq(lambda t: psi_s1(cfg, K, t, spec) - pm, lo, min(2 * lo, 1.0),
                  xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)


class Psi1Curve:
    """Chebyshev interpolant of psi_s1 and its slope in log T on [T_lo, 1].

    Lets the optimiser evaluate psi_s1 cheaply; final objective values are
    recomputed with the quadrature.
    """

    def __init__(self, cfg, K, T_lo, spec=DEFAULT_SPEC, degree=64):
        self.lo = math.log(T_lo)
        x = np.cos(np.pi * (np.arange(degree + 1) + 0.5) / (degree + 1))
        T = np.exp(self._from_unit(x))
        self.val = C.chebfit(x, psi_s1(cfg, K, T, spec), degree)
        self.der = C.chebfit(x, psi_s1_dT(cfg, K, T, spec), degree)

    def _from_unit(self, x):
        return 0.5 * (x + 1.0) * (0.0 - self.lo) + self.lo

    def _to_unit(self, T):
        s = np.log(np.maximum(T, 1e-300))
        return np.clip(2.0 * (s - self.lo) / (0.0 - self.lo) - 1.0, -1.0, 1.0)

    def __call__(self, T):
        return C.chebval(self._to_unit(np.asarray(T)), self.val)

    def deriv(self, T):
        return C.chebval(self._to_unit(np.asarray(T)), self.der)


def lemma2_closed_form(a: Popularity, N_s: int, consts: Lemma2Constants, M: int) -> np.ndarray:
    """Water-filling solution of the K = 1 subproblem with N_s cached files."""
    an = a.probabilities[:N_s]
    c1, c2, tth = consts.c1, consts.c2, consts.T_th
    if not M <= N_s <= a.N:
        raise InfeasibleError(f"N_s={N_s} must lie in [M, N]")
    if N_s * tth >= M:
        raise InfeasibleError(f"N_s={N_s} files cannot all exceed T_th={tth:.6g} with M={M}")

    def alloc(log_nu):
        t = (np.sqrt(an * c1 / math.exp(log_nu)) - c1) / c2
        return np.clip(t, tth, 1.0)

    # sum(alloc) falls from N_s (all capped at 1) to N_s*T_th (all at the floor)
    lo = math.log(an[-1] * c1 / (c1 + c2) ** 2) - 1.0
    hi = math.log(an[0] * c1 / (c1 + c2 * tth) ** 2) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if alloc(mid).sum() > M:
            lo = mid
        else:
            hi = mid
    T = alloc(0.5 * (lo + hi))
    if abs(T.sum() - M) > 1e-9:
        raise InfeasibleError("water level bisection did not meet the cache budget")
    return T


@dataclass(frozen=True)
class Scheme1Solution:
    T_star: CachingDistribution
    N_s_star: int
    psi_star: float
    solver_path: str
    T_th: float
    N_s_range: tuple
    converged: bool = True
    degenerate_range: bool = False

    def lemma1_violations(self, atol: float = 1e-9) -> list:
        """Empty when T* has the ordering/threshold structure of the optimum."""
        T = self.T_star.probs
        out = []
        nz = T > 0
        if np.any(np.diff(T) > 0):
            out.append("not sorted non-increasing")
        if np.any((T[nz] <= self.T_th) | (T[nz] > 1.0)):
            out.append("non-zero entry outside (T_th, 1]")
        if int(nz.sum()) != self.N_s_star:
            out.append("non-zero count differs from N_s*")
        if abs(T.sum() - self.T_star.cache_size) > atol:
            out.append("cache budget not met")
        return out


def _starts(a_head: np.ndarray, M: int, lo: float):
    n = a_head.size
    uc = np.full(n, M / n)
    mpc = np.zeros(n)
    mpc[:M] = 1.0
    prop = M * a_head / a_head.sum()
    p = a_head / a_head.sum()
    iid = -np.expm1(M * np.log1p(-np.minimum(p, 1 - 1e-16)))
    return [project_capped_simplex(s, lo, 1.0, M) for s in (uc, mpc, prop, iid)]


def _best(results):
    # highest value; ties keep the earliest start
    best = results[0]
    for r in results[1:]:
        if r.value > best.value + 1e-15:
            best = r
    return best


def optimize_scheme1(cfg: NetworkConfig, a: Popularity, M: int, K: int,
                     spec: QuadratureSpec = DEFAULT_SPEC, max_iter: int = 500,
                     method: str = "auto") -> Scheme1Solution:
    """Exhaustive search over N_s with a continuous inner solve.

    ``method`` forces the inner solver ("closed_form" or "gradient_projection");
    "auto" uses the closed form whenever K = 1 and the exponents are equal.
    """
    K = _check_K(K)
    if method not in ("auto", "closed_form", "gradient_projection"):
        raise DomainError(f"unknown method {method!r}")
    if method == "closed_form" and not (K == 1 and cfg.symmetric):
        raise DomainError("closed form needs K = 1 and equal path-loss exponents")
    N = a.N
    if int(M) != M or not 1 <= M <= N:
        raise DomainError(f"cache size must lie in 1..N={N}, got {M!r}")
    M = int(M)
    _, pm = _region_scheme1(cfg, K, spec)
    tth = find_t_th(cfg, K, spec)
    upper = min(math.ceil(M / tth) - 1, N)
    if upper < M:
        mpc = np.zeros(N)
        mpc[:M] = 1.0
        T = CachingDistribution(mpc, M)
        return Scheme1Solution(T, M, stp_scheme1(cfg, K, T, a, spec), "closed_form",
                               tth, (M, upper), True, True)

    ap = a.probabilities
    closed = method == "closed_form" or (method == "auto" and K == 1 and cfg.symmetric)
    if closed:
        consts = lemma2_constants(cfg, spec)
        curve = None
        path = "closed_form"
    else:
        curve = Psi1Curve(cfg, K, tth, spec)
        path = "gradient_projection"

    best = None
    for Ns in range(M, upper + 1):
        head = ap[:Ns]
        tail = pm * ap[Ns:].sum()
        if Ns == M:
            x, ok = np.ones(M), True
        elif closed:
            x, ok = lemma2_closed_form(a, Ns, consts, M), True
        else:
            res = _best([
                gradient_projection(lambda t: head @ curve(t), lambda t: head * curve.deriv(t),
                                    s, tth, 1.0, M, max_iter=max_iter)
                for s in _starts(head, M, tth)
            ])
            x, ok = res.x, res.converged
        if closed:
            val = head @ (x / (consts.c1 + consts.c2 * x)) + tail
        else:
            val = head @ curve(x) + tail
        if best is None or val > best[0] + 1e-13:
            best = (val, Ns, x, ok)

    _, Ns, x, ok = best
    T = np.zeros(N)
    # the ordering holds at any optimum; sorting only removes solver noise
    T[:Ns] = np.sort(x)[::-1]
    dist = CachingDistribution(T, M)
    return Scheme1Solution(dist, Ns, stp_scheme1(cfg, K, dist, a, spec), path,
                           tth, (M, upper), ok)


# --------------------------------------------------------------------------
# Scheme 2


@dataclass(frozen=True)
class Scheme2Solution:
    T_star: CachingDistribution
    psi_star: float
    nu_star: float | None
    solver_path: str
    tables: StpTables = field(repr=False)
    converged: bool = True


def check_discrete_concavity(tables: StpTables) -> bool:
    """True iff psi_s2,k+1 - psi_s2,k is non-increasing in k (psi_s2,0 = psi_m)."""
    d = np.diff(tables.coefficients)
    return bool(np.all(np.diff(d) <= 0))


def kkt_residual(tables: StpTables, a: Popularity, T, nu: float) -> float:
    """Largest violation of the three-case stationarity conditions."""
    T = np.asarray(T, dtype=float)
    g = a.probabilities * psi_ms_dT(tables, T)
    at0 = T <= 0.0
    at1 = T >= 1.0
    mid = ~(at0 | at1)
    viol = np.zeros_like(T)
    viol[at0] = np.maximum(g[at0] - nu, 0.0)
    viol[at1] = np.maximum(nu - g[at1], 0.0)
    viol[mid] = np.abs(g[mid] - nu)
    return float(viol.max(initial=0.0))


def _invert_slope(tables, a, nu, iters=100):
    """T_n(nu): solution of a_n psi_ms'(T) = nu clamped to [0, 1] (slope decreasing)."""
    ap = a.probabilities
    g0 = ap * psi_ms_dT(tables, 0.0)
    g1 = ap * psi_ms_dT(tables, 1.0)
    lo = np.zeros_like(ap)
    hi = np.ones_like(ap)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        above = ap * psi_ms_dT(tables, mid) > nu
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    T = 0.5 * (lo + hi)
    T = np.where(g0 <= nu, 0.0, T)
    T = np.where(g1 >= nu, 1.0, T)
    return T


def _kkt_bisection(tables, a, M, iters=200):
    grid = np.linspace(0.0, 1.0, 100)
    slopes = np.outer(a.probabilities, psi_ms_dT(tables, grid))
    lo, hi = float(slopes.min()), float(slopes.max())
    for _ in range(iters):
        nu = 0.5 * (lo + hi)
        if _invert_slope(tables, a, nu).sum() > M:
            lo = nu
        else:
            hi = nu
        if hi - lo <= 1e-17 * max(1.0, abs(nu)):
            break
    nu = 0.5 * (lo + hi)
    T = _invert_slope(tables, a, nu)
    r = M - T.sum()
    free = (T > 0) & (T < 1)
    if abs(r) > 0 and np.any(free):
        T[free] += r / free.sum()
        T = np.clip(T, 0.0, 1.0)
    return T, nu


def optimize_scheme2(cfg: NetworkConfig, a: Popularity, M: int, K: int,
                     spec: QuadratureSpec = DEFAULT_SPEC,
                     tables: StpTables | None = None, max_iter: int = 500) -> Scheme2Solution:
    K = _check_K(K)
    N = a.N
    if int(M) != M or not 1 <= M <= N:
        raise DomainError(f"cache size must lie in 1..N={N}, got {M!r}")
    M = int(M)
    if tables is None:
        tables = build_stp_tables(cfg, K, spec)
    if not tables.in_operating_region:
        raise RegionError(
            f"psi_s2,1 = {tables.psi_s2[1]:.6g} does not exceed psi_m = {tables.psi_m:.6g}",
            tables.psi_s2[1], tables.psi_m)

    nu = None
    ok = True
    if K == 1:
        T = np.zeros(N)
        T[:M] = 1.0
        path = "linear_greedy"
    elif check_discrete_concavity(tables):
        T, nu = _kkt_bisection(tables, a, M)
        path = "kkt_bisection"
    else:
        ap = a.probabilities
        res = _best([
            gradient_projection(lambda t: ap @ psi_ms(tables, t),
                                lambda t: ap * psi_ms_dT(tables, t),
                                s, 0.0, 1.0, M, max_iter=max_iter)
            for s in _starts(ap, M, 0.0)
        ])
        T, ok = res.x, res.converged
        path = "gradient_projection"
    dist = CachingDistribution(T, M)
    return Scheme2Solution(dist, stp_scheme2(cfg, K, dist, a, spec, tables=tables),
                           nu, path, tables, ok)
