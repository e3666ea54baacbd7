"""Scalar analytic kernels shared by every sampling scheme.

All functions accept floats or numpy arrays and broadcast elementwise.
Out-of-domain mean arguments map to -inf; out-of-domain observed
fractions raise, so NaN never leaves this module.
"""

from __future__ import annotations

import numpy as np

from .distributions import log_poisson_cdf, log_poisson_sf


def _check_unit_interval(z, name: str) -> None:
    z = np.asarray(z)
    if np.any(z < 0) or np.any(z > 1):
        raise ValueError(f"{name} must lie in [0, 1]")


def massart_exponent(z, mu):
    """Large-deviation exponent for the mean of a [0,1]-valued variable.

    Bounds the tail of a sample mean through exp(n * massart_exponent(z, mu)).
    Equals (mu-z)^2 / (2*(2*mu/3 + z/3)*(2*mu/3 + z/3 - 1)) for mu in (0,1),
    -inf for mu outside (0,1).  Always <= 0, with equality iff z == mu.
    """
    _check_unit_interval(z, "z")
    z = np.asarray(z, dtype=float)
    mu = np.asarray(mu, dtype=float)
    inside = (mu > 0.0) & (mu < 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = (2.0 * mu + z) / 3.0
        val = (mu - z) ** 2 / (2.0 * w * (w - 1.0))
    out = np.where(inside, val, -np.inf)
    if out.ndim == 0:
        return float(out)
    return out


def massart_exponent_inverse(z, mu):
    """Per-success version of the exponent, massart_exponent(z, mu) / z.

    Defined as -inf at z == 0.  For fixed z it decreases in mu on (z, 1)
    and increases on (0, z).
    """
    _check_unit_interval(z, "z")
    z = np.asarray(z, dtype=float)
    m = np.asarray(massart_exponent(z, mu), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = m / z
    out = np.where(z == 0.0, -np.inf, val)
    if out.ndim == 0:
        return float(out)
    return out


def bernoulli_kl(z, theta):
    """Signed Bernoulli Kullback-Leibler term z*ln(theta/z) + (1-z)*ln((1-theta)/(1-z)).

    Extended by continuity at z in {0, 1}.  Nonpositive, zero iff z == theta.
    A theta of exactly 0 or 1 that conflicts with z gives -inf.
    """
    _check_unit_interval(z, "z")
    _check_unit_interval(theta, "theta")
    z = np.asarray(z, dtype=float)
    theta = np.asarray(theta, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        left = np.where(z == 0.0, 0.0, z * np.log(theta / z))
        right = np.where(z == 1.0, 0.0, (1.0 - z) * np.log((1.0 - theta) / (1.0 - z)))
        out = left + right
    # 0*log(0) terms resolve to 0; conflicting degenerate theta stays -inf
    out = np.where((theta == 0.0) & (z > 0.0), -np.inf, out)
    out = np.where((theta == 1.0) & (z < 1.0), -np.inf, out)
    out = np.where((theta == 0.0) & (z == 0.0), 0.0, out)
    out = np.where((theta == 1.0) & (z == 1.0), 0.0, out)
    if out.ndim == 0:
        return float(out)
    return out


def inverse_binomial_kl(z, mu):
    """Exact per-success exponent for inverse binomial sampling.

    ln(mu/z) + (1/z - 1)*ln((1-mu)/(1-z)) for z in (0,1); ln(mu) at z == 1;
    -inf at z == 0.  Nonpositive, and never above massart_exponent_inverse
    for z below mu.
    """
    _check_unit_interval(z, "z")
    z = np.asarray(z, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0) or np.any(mu >= 1):
        raise ValueError("mu must lie in (0, 1)")
    with np.errstate(divide="ignore", invalid="ignore"):
        interior = np.log(mu / z) + (1.0 / z - 1.0) * np.log((1.0 - mu) / (1.0 - z))
    out = np.where(z == 1.0, np.log(mu), interior)
    out = np.where(z == 0.0, -np.inf, out)
    if out.ndim == 0:
        return float(out)
    return out


def inverse_sampling_tail_bound(eps: float, gamma: int) -> float:
    """Two-sided Poisson tail bound controlling relative error under inverse sampling.

    Returns 1 - PoissonCDF(gamma-1; gamma/(1+eps)) + PoissonCDF(gamma-1; gamma/(1-eps)),
    with both tails accumulated in log space.  Lies in (0, 2) and decreases
    toward 0 as gamma grows.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    gamma = int(gamma)
    if gamma < 1:
        raise ValueError("gamma must be a positive integer")
    upper = np.exp(log_poisson_sf(gamma, gamma / (1.0 + eps)))
    lower = np.exp(log_poisson_cdf(gamma - 1, gamma / (1.0 - eps)))
    return float(upper + lower)


# Analytic partial derivatives used by the monotonicity arguments.  Each is
# checked against central finite differences in the test suite.

def d_massart_exponent_dmu(z, mu):
    z = np.asarray(z, dtype=float)
    mu = np.asarray(mu, dtype=float)
    w = 2.0 * mu / 3.0 + z / 3.0
    num = (z - mu) * (mu * (1.0 - z) + z * (1.0 - mu) + z * (1.0 - z))
    out = num / (3.0 * (w * (1.0 - w)) ** 2)
    if out.ndim == 0:
        return float(out)
    return out


def d_massart_exponent_dz(z, mu):
    z = np.asarray(z, dtype=float)
    mu = np.asarray(mu, dtype=float)
    w = 2.0 * mu / 3.0 + z / 3.0
    num = (mu - z) * (mu * (1.0 - w) + (z - mu) / 6.0)
    out = num / (w * (1.0 - w)) ** 2
    if out.ndim == 0:
        return float(out)
    return out


def d_inverse_exponent_dmu(z, mu):
    z = np.asarray(z, dtype=float)
    mu = np.asarray(mu, dtype=float)
    w = 2.0 * mu / 3.0 + z / 3.0
    num = (z - mu) * (mu * (1.0 - z) + z * (1.0 - mu) + z * (1.0 - z))
    out = num / (3.0 * z * (w * (1.0 - w)) ** 2)
    if out.ndim == 0:
        return float(out)
    return out


def d_exponent_plus_dz(z, eps):
    """Derivative in z of massart_exponent(z, z + eps)."""
    z = np.asarray(z, dtype=float)
    out = eps**2 / ((z + 2.0 * eps / 3.0) * (1.0 - z - 2.0 * eps / 3.0)) ** 2 * (
        0.5 - 2.0 * eps / 3.0 - z
    )
    if out.ndim == 0:
        return float(out)
    return out


def d_exponent_minus_dz(z, eps):
    """Derivative in z of massart_exponent(z, z - eps)."""
    z = np.asarray(z, dtype=float)
    out = eps**2 / ((z - 2.0 * eps / 3.0) * (1.0 - z + 2.0 * eps / 3.0)) ** 2 * (
        0.5 + 2.0 * eps / 3.0 - z
    )
    if out.ndim == 0:
        return float(out)
    return out


def d_exponent_ratio_plus_dz(z, eps):
    """Derivative in z of massart_exponent(z, z / (1 + eps)); negative on (0, 1)."""
    z = np.asarray(z, dtype=float)
    out = -(eps**2) / (2.0 * (1.0 + eps / 3.0)) * (1.0 + eps) / (
        (1.0 + eps) * (1.0 - z) + 2.0 * eps * z / 3.0
    ) ** 2
    if out.ndim == 0:
        return float(out)
    return out


def d_exponent_ratio_minus_dz(z, eps):
    """Derivative in z of massart_exponent(z, z / (1 - eps)); negative on (0, 1 - eps)."""
    z = np.asarray(z, dtype=float)
    out = -(eps**2) / (2.0 * (1.0 - eps / 3.0)) * (1.0 - eps) / (
        (1.0 - eps) * (1.0 - z) - 2.0 * eps * z / 3.0
    ) ** 2
    if out.ndim == 0:
        return float(out)
    return out
