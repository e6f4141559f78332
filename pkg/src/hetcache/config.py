"""Physical-layer parameters of the two-tier network."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def density_from_radius(radius: float) -> float:
    """Density 1/(pi r^2): one point per disc of radius ``radius`` metres."""
    return 1.0 / (math.pi * radius * radius)


@dataclass(frozen=True)
class TierParams:
    """One tier of base stations. SI units throughout (m^-2, W, Hz)."""

    density: float
    power: float
    pathloss_exponent: float
    bandwidth: float

    def __post_init__(self):
        for name in ("density", "power", "pathloss_exponent", "bandwidth"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"{name} must be finite, got {v!r}")
        if self.density <= 0 or self.power <= 0 or self.bandwidth <= 0:
            raise DomainError("density, power and bandwidth must be positive")
        if self.pathloss_exponent <= 2:
            raise DomainError(
                f"pathloss_exponent must exceed 2, got {self.pathloss_exponent}"
            )


@dataclass(frozen=True)
class NetworkConfig:
    """SBS and MBS tiers plus the per-file target rate ``target_rate`` (bps).

    The SIR thresholds ``theta_s``/``theta_m`` are derived and recomputed by
    :meth:`with_rate` / :func:`dataclasses.replace`.
    """

    sbs: TierParams
    mbs: TierParams
    target_rate: float
    theta_s: float = field(init=False)
    theta_m: float = field(init=False)

    def __post_init__(self):
        if not (math.isfinite(self.target_rate) and self.target_rate > 0):
            raise DomainError(f"target_rate must be positive, got {self.target_rate}")
        try:
            theta_s = 2.0 ** (self.target_rate / self.sbs.bandwidth) - 1.0
            theta_m = 2.0 ** (self.target_rate / self.mbs.bandwidth) - 1.0
        except OverflowError:
            raise DomainError("target rate gives a non-finite SIR threshold") from None
        object.__setattr__(self, "theta_s", theta_s)
        object.__setattr__(self, "theta_m", theta_m)
        if not (self.theta_s > 0 and self.theta_m > 0 and math.isfinite(self.theta_m)):
            raise DomainError("target rate gives a non-finite SIR threshold")
        if not (
            self.mbs.power > self.sbs.power
            and self.sbs.density > self.mbs.density
            and self.sbs.bandwidth > self.mbs.bandwidth
        ):
            warnings.warn(
                "configuration outside the usual HetNet regime "
                "(P_m > P_s, lambda_s > lambda_m, W_s > W_m)",
                stacklevel=2,
            )

    @property
    def symmetric(self) -> bool:
        return abs(self.sbs.pathloss_exponent - self.mbs.pathloss_exponent) < 1e-9

    def with_rate(self, target_rate: float) -> "NetworkConfig":
        return replace(self, target_rate=target_rate)


def default_config(target_rate_mbps: float = 1.0, alpha: float = 4.0) -> NetworkConfig:
    """Default two-tier setting used throughout the numerical experiments."""
    return NetworkConfig(
        sbs=TierParams(density_from_radius(50.0), dbm_to_watt(23.0), alpha, 20e6),
        mbs=TierParams(density_from_radius(500.0), dbm_to_watt(43.0), alpha, 0.2e6),
        target_rate=target_rate_mbps * 1e6,
    )
