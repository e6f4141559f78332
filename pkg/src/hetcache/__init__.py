"""Successful transmission probability of cache-aware SBS cooperation in
two-tier Poisson HetNets: analytic engine, Monte Carlo oracle and optimisers."""

__version__ = "0.1.0"

from .config import DomainError, NetworkConfig, TierParams, dbm_to_watt, default_config, density_from_radius
from .quadrature import QuadratureError, QuadratureSpec
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
    q_k1,
    q_k2,
    stp_scheme1,
    stp_scheme2,
)
from .policies import baseline_distribution, zipf
from .mcsim import SimParams, estimate_stp
from .optimizer import (
    RegionError,
    Scheme1Solution,
    Scheme2Solution,
    find_t_th,
    optimize_scheme1,
    optimize_scheme2,
)
