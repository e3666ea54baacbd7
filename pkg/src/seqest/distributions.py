"""Log-space probability mass and tail functions for the discrete laws the
schemes run on: binomial stage counts, negative binomial stopping sizes and
Poisson tails.

Every function returns a natural-log probability as a plain float (-inf for
impossible events).  Tail sums shift by the largest term and accumulate with
compensated summation so that targets as small as 1e-6 in root finding stay
resolvable, and so binomial coefficients for n in the 1e5 range never
overflow.
"""

from __future__ import annotations

import math

import numpy as np

NEG_INF = float("-inf")


def _check_prob(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")


def _log_choose(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _logsumexp_sorted(terms) -> float:
    """Compensated log-sum-exp; terms may arrive in any order."""
    m = max(terms)
    if m == NEG_INF:
        return NEG_INF
    total = 0.0
    comp = 0.0
    for t in terms:
        y = math.exp(t - m) - comp
        s = total + y
        comp = (s - total) - y
        total = s
    return m + math.log(total)


def log_binom_pmf(n: int, k: int, p: float) -> float:
    """log Pr{Binomial(n, p) = k}, with 0*log(0) treated as 0."""
    if not 0 <= k <= n:
        raise ValueError("k must lie in [0, n]")
    _check_prob(p)
    if p == 0.0:
        return 0.0 if k == 0 else NEG_INF
    if p == 1.0:
        return 0.0 if k == n else NEG_INF
    return _log_choose(n, k) + k * math.log(p) + (n - k) * math.log1p(-p)


def log_binom_tail_upper(n: int, k: int, p: float) -> float:
    """log Pr{Binomial(n, p) >= k}."""
    if not 0 <= k <= n:
        raise ValueError("k must lie in [0, n]")
    if k == 0:
        return 0.0
    terms = [log_binom_pmf(n, j, p) for j in range(k, n + 1)]
    return _logsumexp_sorted(terms)


def log_binom_tail_lower(n: int, k: int, p: float) -> float:
    """log Pr{Binomial(n, p) <= k}."""
    if not 0 <= k <= n:
        raise ValueError("k must lie in [0, n]")
    if k == n:
        return 0.0
    terms = [log_binom_pmf(n, j, p) for j in range(0, k + 1)]
    return _logsumexp_sorted(terms)


def log_negbinom_pmf(gamma: int, n: int, p: float) -> float:
    """log probability that the gamma-th success arrives exactly at sample n.

    That is log[ C(n-1, gamma-1) p^gamma (1-p)^(n-gamma) ] for n >= gamma >= 1.
    """
    if gamma < 1:
        raise ValueError("gamma must be a positive integer")
    if n < gamma:
        raise ValueError("n must be at least gamma")
    _check_prob(p)
    if p == 0.0:
        return NEG_INF
    if p == 1.0:
        return 0.0 if n == gamma else NEG_INF
    return (
        _log_choose(n - 1, gamma - 1)
        + gamma * math.log(p)
        + (n - gamma) * math.log1p(-p)
    )


def log_poisson_cdf(k: int, lam: float) -> float:
    """log Pr{Poisson(lam) <= k}."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    if k < 0:
        return NEG_INF
    log_lam = math.log(lam)
    terms = [i * log_lam - lam - math.lgamma(i + 1) for i in range(k + 1)]
    return _logsumexp_sorted(terms)


def log_poisson_sf(k: int, lam: float) -> float:
    """log Pr{Poisson(lam) >= k}, summed upward until the tail is exhausted."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    if k <= 0:
        return 0.0
    log_lam = math.log(lam)
    # Scale by the first term; ratios lam/(i+1) fall below 1 once i >= lam.
    first = k * log_lam - lam - math.lgamma(k + 1)
    total = 0.0
    term = 1.0
    i = k
    while True:
        total += term
        term *= lam / (i + 1)
        i += 1
        if i > lam and term < total * 1e-22:
            break
        if i - k > 10_000_000:  # pragma: no cover - defensive cap
            break
    return first + math.log(total)


from functools import lru_cache


@lru_cache(maxsize=4096)
def _log_choose_vector(n: int) -> np.ndarray:
    """log C(n, k) for k = 0..n via a compensated cumulative sum of ratio
    logs; keeps the absolute error near one ulp of the result even for n in
    the 1e5 range, where direct lgamma differences drift."""
    out = np.empty(n + 1)
    out[0] = 0.0
    total = 0.0
    comp = 0.0
    for k in range(1, n + 1):
        term = math.log(n - k + 1) - math.log(k)
        y = term - comp
        s = total + y
        comp = (s - total) - y
        total = s
        out[k] = total
    out.flags.writeable = False
    return out


def binom_pmf_vector(n: int, p: float) -> np.ndarray:
    """Full Binomial(n, p) pmf as a linear-space numpy vector of length n+1."""
    _check_prob(p)
    if p == 0.0:
        out = np.zeros(n + 1)
        out[0] = 1.0
        return out
    if p == 1.0:
        out = np.zeros(n + 1)
        out[n] = 1.0
        return out
    k = np.arange(n + 1)
    logs = _log_choose_vector(n) + k * math.log(p) + (n - k) * math.log1p(-p)
    return np.exp(logs)
