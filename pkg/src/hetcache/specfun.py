"""Special-function kernels behind every analytic STP expression.

All functions broadcast over numpy arrays.
"""

from __future__ import annotations

import numpy as np

from .config import DomainError, TierParams

_MAX_TERMS = 400
_REL_EPS = 1e-17


def csc_const(alpha):
    """(2 pi / alpha) csc(2 pi / alpha), the PPP interference constant."""
    x = 2.0 * np.pi / np.asarray(alpha, dtype=float)
    return x / np.sin(x)


def _series(ratio, z):
    # sum_n c_n z^n with c_0 = 1, c_{n+1} = c_n * ratio(n)
    total = np.ones_like(z)
    term = np.ones_like(z)
    for n in range(_MAX_TERMS):
        term = term * ratio(n) * z
        total = total + term
        if np.all(np.abs(term) <= _REL_EPS * np.abs(total)):
            return total
    raise ArithmeticError("hypergeometric series did not converge")


def hyp2f1_series(alpha, theta):
    """2F1(-d, 1; 1-d; -theta) with d = 2/alpha, by series summation only.

    theta <= 1 uses the Pfaff transform (argument theta/(1+theta) <= 1/2);
    theta > 1 uses the 1/z connection formula, whose first branch truncates
    to a single power and whose second is summed at 1/(1+theta) < 1/2.
    """
    alpha = np.asarray(alpha, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(theta))):
        raise DomainError("hyp2f1_neg needs finite arguments")
    if np.any(alpha <= 2) or np.any(theta < 0):
        raise DomainError("hyp2f1_neg needs alpha > 2 and theta >= 0")
    d = 2.0 / alpha
    alpha, theta, d = np.broadcast_arrays(alpha, theta, d)
    out = np.empty(theta.shape, dtype=float)

    lo = theta <= 1.0
    if np.any(lo):
        th, dl = theta[lo], d[lo]
        w = th / (1.0 + th)
        out[lo] = _series(lambda n: (n + 1.0) / (n + 1.0 - dl), w) / (1.0 + th)
    hi = ~lo
    if np.any(hi):
        th, dh = theta[hi], d[hi]
        v = 1.0 / (1.0 + th)
        tail = _series(lambda n: (n + 1.0) / (n + 2.0 + dh), v)
        lead = np.pi * dh / np.sin(np.pi * dh) * th**dh
        out[hi] = lead + dh / (1.0 + dh) * v * tail
    return out if out.ndim else float(out)


def hyp2f1_neg(alpha, theta):
    """Gauss hypergeometric 2F1(-2/alpha, 1; 1-2/alpha; -theta).

    For alpha == 4 the closed form sqrt(theta)*arctan(sqrt(theta)) + 1 is used.
    """
    if np.ndim(alpha) == 0 and float(alpha) == 4.0:
        theta = np.asarray(theta, dtype=float)
        if not np.all(np.isfinite(theta)):
            raise DomainError("hyp2f1_neg needs finite arguments")
        if np.any(theta < 0):
            raise DomainError("hyp2f1_neg needs theta >= 0")
        r = np.sqrt(theta)
        out = r * np.arctan(r) + 1.0
        return out if out.ndim else float(out)
    return hyp2f1_series(alpha, theta)


def _check_T(T):
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0) or np.any(T > 1):
        raise DomainError("caching probability must lie in (0, 1]")
    return T


def cross_tier_coef(x: TierParams, y: TierParams, theta):
    """Coefficient of (u/T)^(alpha_x/alpha_y) in the B-kernel."""
    ax, ay = x.pathloss_exponent, y.pathloss_exponent
    rho = ax / ay
    return (
        2.0 * np.pi ** (2.0 - rho) / ay / np.sin(2.0 * np.pi / ay)
        * y.density / x.density**rho
        * (np.asarray(theta, dtype=float) * y.power / x.power) ** (2.0 / ay)
    )


def b_kernel(x: TierParams, y: TierParams, T, theta, u):
    """B_{x,y}(alpha_x, alpha_y, T, theta, u).

    ``x`` is the serving tier and ``y`` the other tier; T is the serving-tier
    caching probability (1 for the MBS tier). T = 0 is rejected: the caller
    must route uncached files to the MBS branch.
    """
    T = _check_T(T)
    theta = np.asarray(theta, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(theta < 0) or np.any(u < 0):
        raise DomainError("theta and u must be non-negative")
    ax = x.pathloss_exponent
    rho = ax / y.pathloss_exponent
    first = cross_tier_coef(x, y, theta) * (u / T) ** rho
    second = u * (
        (1.0 / T - 1.0) * csc_const(ax) * theta ** (2.0 / ax) + hyp2f1_neg(ax, theta)
    )
    out = first + second
    return out if out.ndim else float(out)


def b_kernel_dT(x: TierParams, y: TierParams, T, theta, u):
    """Partial derivative of :func:`b_kernel` with respect to T."""
    T = _check_T(T)
    theta = np.asarray(theta, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(theta < 0) or np.any(u < 0):
        raise DomainError("theta and u must be non-negative")
    ax = x.pathloss_exponent
    rho = ax / y.pathloss_exponent
    first = cross_tier_coef(x, y, theta) * (u / T) ** rho
    out = -rho * first / T - u / T**2 * csc_const(ax) * theta ** (2.0 / ax)
    return out if out.ndim else float(out)
