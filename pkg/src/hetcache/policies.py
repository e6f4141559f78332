"""Zipf popularity and the three baseline caching distributions."""

from __future__ import annotations

import numpy as np

from .analytic import CachingDistribution, Popularity
from .config import DomainError

BASELINES = ("MPC", "UC", "IIDC")


def zipf(N: int, gamma: float) -> Popularity:
    """a_n proportional to n^-gamma, n = 1..N."""
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N!r}")
    if not np.isfinite(gamma) or gamma < 0:
        raise DomainError(f"Zipf exponent must be >= 0, got {gamma!r}")
    w = np.arange(1, int(N) + 1, dtype=float) ** (-float(gamma))
    a = w / np.sum(w)
    # renormalise once more so the float sum is 1 to within a few ulps
    return Popularity(a / np.sum(a))


def baseline_distribution(kind: str, a: Popularity, M: int) -> CachingDistribution:
    """MPC, UC or IIDC caching probabilities for popularity ``a`` and cache size M."""
    N = a.N
    if int(M) != M or M < 1:
        raise DomainError(f"cache size must be a positive integer, got {M!r}")
    if M > N:
        raise DomainError(f"cache size M={M} exceeds the number of files N={N}")
    kind = kind.upper()
    if kind == "MPC":
        T = np.zeros(N)
        T[:M] = 1.0
        return CachingDistribution(T, M)
    if kind == "UC":
        return CachingDistribution(np.full(N, M / N), M)
    if kind == "IIDC":
        # chance file n shows up among M independent popularity draws
        T = -np.expm1(M * np.log1p(-a.probabilities)) if N > 1 else np.ones(1)
        return CachingDistribution(T, M, relaxed_sum=M > 1)
    raise DomainError(f"unknown baseline {kind!r}; expected one of {BASELINES}")
