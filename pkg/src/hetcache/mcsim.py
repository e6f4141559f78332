"""Monte Carlo oracle: sample PPP worlds and count successful deliveries.

Each realization draws its own counter-based RNG stream keyed by
(master_seed, realization_index), so estimates do not depend on how
realizations are spread over workers. Within a realization every file, every
cooperation size and both schemes share one geometry and fading draw (common
random numbers); SIRs are computed once and thresholded for each target rate.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analytic import MAX_COOP, ZERO_TOL, CachingDistribution, Popularity
from .config import DomainError, NetworkConfig

SCHEMES = ("scheme1", "scheme2")
PREFIX = 256      # nearest SBSs examined before falling back to a full scan
CHUNK = 50        # realizations per work unit; fixed so the reduction order is too


@dataclass(frozen=True)
class SimParams:
    window_side: float = 1e4
    realizations: int = 10_000
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.window_side) and self.window_side > 0):
            raise DomainError("window_side must be positive")
        if int(self.realizations) != self.realizations or self.realizations < 1:
            raise DomainError("realizations must be a positive integer")
        if int(self.master_seed) != self.master_seed or not 0 <= self.master_seed < 2**64:
            raise DomainError("master_seed must be an unsigned 64-bit integer")
        if int(self.workers) != self.workers or self.workers < 1:
            raise DomainError("workers must be a positive integer")


def realization_rng(master_seed: int, realization_index: int) -> np.random.Generator:
    """Independent Philox stream for one realization."""
    key = (int(master_seed) << 64) | int(realization_index)
    return np.random.Generator(np.random.Philox(key=key))


def sample_ppp(density: float, window_side: float, rng: np.random.Generator) -> np.ndarray:
    """Homogeneous PPP on the square window centred at the origin; shape (n, 2)."""
    if density < 0:
        raise DomainError("density must be non-negative")
    n = rng.poisson(density * window_side**2) if density > 0 else 0
    return rng.uniform(-0.5 * window_side, 0.5 * window_side, size=(n, 2))


@dataclass(frozen=True, eq=False)
class NetworkRealization:
    """One sampled world. The typical user sits at the origin.

    ``sbs_caches`` holds M file indices (0-based) per SBS; under i.i.d.
    caching an index may repeat, which is the same as storing the set.
    """

    mbs_points: np.ndarray
    sbs_points: np.ndarray
    sbs_caches: np.ndarray
    sbs_fading: np.ndarray   # complex, unit variance
    mbs_fading: np.ndarray   # power gains, unit-mean exponential
    num_files: int
    typical_user: tuple = field(default=(0.0, 0.0))

    def holds(self) -> np.ndarray:
        """Boolean (num_sbs, N) cache-membership matrix."""
        h = np.zeros((len(self.sbs_points), self.num_files), dtype=bool)
        rows = np.repeat(np.arange(len(self.sbs_points)), self.sbs_caches.shape[1])
        h[rows, self.sbs_caches.ravel()] = True
        return h


def _strip_caches(T: np.ndarray, M: int, n: int, rng) -> np.ndarray:
    cum = np.cumsum(T)
    cum *= M / cum[-1]
    eta = rng.random(n)
    pts = eta[:, None] + np.arange(M)[None, :]
    idx = np.searchsorted(cum, pts, side="right")
    return np.minimum(idx, len(T) - 1)


def _iid_caches(T: np.ndarray, M: int, n: int, rng) -> np.ndarray:
    # per-draw probabilities are recovered from the marginals 1 - (1 - p)^M
    p = -np.expm1(np.log1p(-np.minimum(T, 1.0)) / M)
    p = p / p.sum()
    return rng.choice(len(T), size=(n, M), p=p)


def realize(cfg: NetworkConfig, T: CachingDistribution, sim: SimParams,
            realization_index: int, rng: np.random.Generator | None = None) -> NetworkRealization:
    """Sample one world. Draw order: MBSs, SBSs, caches, SBS fading, MBS fading."""
    if rng is None:
        rng = realization_rng(sim.master_seed, realization_index)
    mbs = sample_ppp(cfg.mbs.density, sim.window_side, rng)
    sbs = sample_ppp(cfg.sbs.density, sim.window_side, rng)
    M = T.cache_size
    if T.relaxed_sum:
        caches = _iid_caches(T.probs, M, len(sbs), rng)
    else:
        caches = _strip_caches(T.probs, M, len(sbs), rng)
    z = rng.standard_normal((len(sbs), 2))
    h = (z[:, 0] + 1j * z[:, 1]) / math.sqrt(2.0)
    g = rng.standard_exponential(len(mbs))
    return NetworkRealization(mbs, sbs, caches, h, g, T.N)


@dataclass
class _SirTable:
    """SIRs of one realization: sir[K_idx, scheme_idx, n] and the serving tier."""

    sir: np.ndarray
    by_sbs: np.ndarray
    under_populated: int


def _sir_table(real: NetworkRealization, cfg: NetworkConfig, T: np.ndarray, Ks) -> _SirTable:
    N = real.num_files
    nK = len(Ks)
    sir = np.zeros((nK, 2, N))
    by_sbs = np.zeros((nK, 2, N), dtype=bool)

    Ps, as_ = cfg.sbs.power, cfg.sbs.pathloss_exponent
    Pm, am = cfg.mbs.power, cfg.mbs.pathloss_exponent
    ds = np.hypot(real.sbs_points[:, 0], real.sbs_points[:, 1])
    dm = np.hypot(real.mbs_points[:, 0], real.mbs_points[:, 1])
    amp = math.sqrt(Ps) * real.sbs_fading * ds ** (-as_ / 2.0)
    pw = np.abs(amp) ** 2
    pwm = Pm * real.mbs_fading * dm ** (-am)
    I_s, I_m = pw.sum(), pwm.sum()

    if len(dm):
        j0 = np.argmin(dm)
        sir_m = pwm[j0] / (I_m - pwm[j0] + I_s)
    else:
        sir_m = 0.0
    sir[:] = sir_m

    n_s = len(ds)
    if n_s == 0:
        return _SirTable(sir, by_sbs, sum(int(np.sum(T >= ZERO_TOL)) for _ in Ks))
    L = min(PREFIX, n_s)
    near = np.argpartition(ds, L - 1)[:L] if L < n_s else np.arange(n_s)
    near = near[np.argsort(ds[near], kind="stable")]
    holds = real.holds()
    hp = holds[near]
    cnt = np.cumsum(hp, axis=0)
    cached = T >= ZERO_TOL
    under = 0

    for i, K in enumerate(Ks):
        # scheme 2: K nearest SBSs; holders transmit, the rest are muted
        k = min(K, n_s)
        m2 = hp[:k]
        sig = np.abs(amp[near[:k]] @ m2) ** 2
        interf = I_s - pw[near[:k]].sum() + I_m
        served = m2.any(axis=0)
        sir[i, 1, served] = sig[served] / interf
        by_sbs[i, 1] = served

        # scheme 1: K nearest holders of each cached file
        m1 = hp & (cnt <= K)
        sig = np.abs(amp[near] @ m1) ** 2
        sub = pw[near] @ m1
        short = cached & (cnt[-1] < K)
        if L < n_s:
            for n in np.flatnonzero(short):
                idx = np.flatnonzero(holds[:, n])
                idx = idx[np.argsort(ds[idx], kind="stable")[:K]]
                sig[n] = np.abs(amp[idx].sum()) ** 2
                sub[n] = pw[idx].sum()
                short[n] = len(idx) < K
        under += int(short.sum())
        ok = cached & (sub > 0)
        sir[i, 0, ok] = sig[ok] / (I_s - sub[ok] + I_m)
        by_sbs[i, 0] = ok
    return _SirTable(sir, by_sbs, under)


def sir_indicator(real: NetworkRealization, cfg: NetworkConfig, K: int, file: int,
                  scheme: str, T: CachingDistribution) -> bool:
    """Whether ``file`` (1-based) is delivered at the target rate in this world."""
    if scheme not in SCHEMES:
        raise DomainError(f"unknown scheme {scheme!r}")
    if not 1 <= file <= real.num_files:
        raise DomainError(f"file index must lie in 1..{real.num_files}")
    tab = _sir_table(real, cfg, T.probs, [int(K)])
    j = SCHEMES.index(scheme)
    n = file - 1
    th = cfg.theta_s if tab.by_sbs[0, j, n] else cfg.theta_m
    return bool(tab.sir[0, j, n] > th)


# --------------------------------------------------------------------------
# estimators


@dataclass(frozen=True)
class StpEstimate:
    estimate: float
    stderr: float
    under_populated: int = 0


def _run_chunk(args):
    cfg, T, a, Ks, theta_s, theta_m, sim, start, stop = args
    out = np.empty((stop - start, len(theta_s), len(Ks), 2))
    under = 0
    for r in range(start, stop):
        real = realize(cfg, T, sim, r)
        tab = _sir_table(real, cfg, T.probs, Ks)
        under += tab.under_populated
        for j, (ts, tm) in enumerate(zip(theta_s, theta_m)):
            ok = np.where(tab.by_sbs, tab.sir > ts, tab.sir > tm)
            out[r - start, j] = ok @ a
    return out, under


def simulate_values(cfg: NetworkConfig, T: CachingDistribution, a: Popularity, Ks,
                    sim: SimParams, target_rates=None):
    """Per-realization STP samples, shape (R, n_rates, n_K, 2) for (scheme1, scheme2).

    ``target_rates`` (bps) defaults to the rate in ``cfg``; all rates share the
    same worlds. Returns the samples and the under-population count.
    """
    if T.N != a.N:
        raise DomainError(f"caching distribution has {T.N} files, popularity has {a.N}")
    Ks = [int(k) for k in Ks]
    if any(k < 1 or k > MAX_COOP for k in Ks):
        raise DomainError(f"cooperation sizes must lie in 1..{MAX_COOP}")
    rates = [cfg.target_rate] if target_rates is None else list(target_rates)
    theta_s = [cfg.with_rate(t).theta_s for t in rates]
    theta_m = [cfg.with_rate(t).theta_m for t in rates]
    R = sim.realizations
    jobs = [(cfg, T, a.probabilities, Ks, theta_s, theta_m, sim, s, min(s + CHUNK, R))
            for s in range(0, R, CHUNK)]
    if sim.workers == 1 or len(jobs) == 1:
        parts = [_run_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=sim.workers) as ex:
            parts = list(ex.map(_run_chunk, jobs))
    values = np.concatenate([p[0] for p in parts], axis=0)
    return values, sum(p[1] for p in parts)


def summarize(values: np.ndarray, axis: int = 0):
    """Mean and standard error (population std / sqrt(R)) along ``axis``."""
    R = values.shape[axis]
    return values.mean(axis=axis), values.std(axis=axis) / math.sqrt(R)


def estimate_stp(cfg: NetworkConfig, T: CachingDistribution, a: Popularity, K: int,
                 scheme: str, sim: SimParams) -> StpEstimate:
    """Monte Carlo STP of one scheme at the rate in ``cfg``."""
    if scheme not in SCHEMES:
        raise DomainError(f"unknown scheme {scheme!r}")
    values, under = simulate_values(cfg, T, a, [K], sim)
    v = values[:, 0, 0, SCHEMES.index(scheme)]
    mean, se = summarize(v)
    return StpEstimate(float(mean), float(se), under)
