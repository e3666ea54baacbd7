"""Fixed-sample confidence interval constructors for a binomial proportion.

Three families: exact Clopper-Pearson tail inversion, Chernoff-Hoeffding
KL inversion, and Massart's closed form.  Root finding is plain bisection
on provably monotone tails, so every returned bound carries a certified
bracket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .distributions import log_binom_tail_lower, log_binom_tail_upper
from .kernels import bernoulli_kl

CLOPPER_PEARSON = "clopper_pearson"
CHERNOFF_HOEFFDING = "chernoff_hoeffding"
MASSART = "massart"

INTERVAL_KINDS = (CLOPPER_PEARSON, CHERNOFF_HOEFFDING, MASSART)

_BISECT_TOL = 1e-12
_BISECT_MAX_STEPS = 200


class RootError(RuntimeError):
    """Bisection failed to converge; indicates a broken bracket."""


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    kind: str
    alpha: float

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _bisect(f, lo: float, hi: float) -> float:
    """Root of f on [lo, hi] assuming a sign change, to absolute tol 1e-12."""
    flo = f(lo)
    fhi = f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise RootError("no sign change on the bracket")
    for _ in range(_BISECT_MAX_STEPS):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < _BISECT_TOL:
            return 0.5 * (lo + hi)
    raise RootError("bisection did not converge in 200 steps")


def _validate(n: int, k: int, alpha: float) -> None:
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0 <= k <= n:
        raise ValueError("k must lie in [0, n]")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")


def clopper_pearson_bounds(n: int, k: int, alpha: float) -> ConfidenceInterval:
    """Exact tail-inversion interval.

    The lower endpoint solves Pr{Binomial(n, p) >= k} = alpha/2 (0 when
    k == 0); the upper solves Pr{Binomial(n, p) <= k} = alpha/2 (1 when
    k == n).
    """
    _validate(n, k, alpha)
    log_half_alpha = math.log(alpha / 2.0)
    if k == 0:
        lower = 0.0
    else:
        lower = _bisect(
            lambda p: log_binom_tail_upper(n, k, p) - log_half_alpha,
            1e-300,
            1.0 - 1e-16,
        )
    if k == n:
        upper = 1.0
    else:
        upper = _bisect(
            lambda p: log_half_alpha - log_binom_tail_lower(n, k, p),
            1e-300,
            1.0 - 1e-16,
        )
    return ConfidenceInterval(lower, upper, CLOPPER_PEARSON, alpha)


def chernoff_hoeffding_bounds(n: int, k: int, alpha: float) -> ConfidenceInterval:
    """KL-inversion interval.

    Interior endpoints solve bernoulli_kl(k/n, p) = ln(alpha)/n on either
    side of k/n.  The degenerate counts use the closed forms
    (alpha/2)^(1/n) at k == n and 1 - (alpha/2)^(1/n) at k == 0.
    """
    _validate(n, k, alpha)
    target = math.log(alpha) / n
    z = k / n
    if k == 0:
        lower = 0.0
        upper = 1.0 - (alpha / 2.0) ** (1.0 / n)
    elif k == n:
        lower = (alpha / 2.0) ** (1.0 / n)
        upper = 1.0
    else:
        lower = _bisect(lambda p: bernoulli_kl(z, p) - target, 1e-300, z)
        upper = _bisect(lambda p: target - bernoulli_kl(z, p), z, 1.0 - 1e-16)
    return ConfidenceInterval(lower, upper, CHERNOFF_HOEFFDING, alpha)


def massart_bounds(n: int, k: int, alpha: float) -> ConfidenceInterval:
    """Closed-form interval from Massart's inequality, clamped to [0, 1]."""
    _validate(n, k, alpha)
    lam = math.log(2.0 / alpha)
    z = k / n
    root = math.sqrt(1.0 + 9.0 / (2.0 * lam) * k * (1.0 - z))
    denom = 1.0 + 9.0 * n / (8.0 * lam)
    lower = max(0.0, z + 0.75 * (1.0 - 2.0 * z - root) / denom)
    upper = min(1.0, z + 0.75 * (1.0 - 2.0 * z + root) / denom)
    return ConfidenceInterval(lower, upper, MASSART, alpha)


def massart_width_stops(n: int, k: int, alpha: float, eps: float) -> bool:
    """Algebraic form of the Massart width test upper - lower <= 2*eps.

    Equivalent to comparing massart_bounds(n, k, alpha).width against
    2*eps whenever neither clamp is active.  The log constant must match
    the interval's ln(2/alpha); stating the inequality on the ln(alpha)
    scale would understate the width by ln 2.
    """
    lam = math.log(2.0 / alpha)
    z = k / n
    lhs = 1.0 + 9.0 / (2.0 * lam) * k * (1.0 - z)
    rhs = eps**2 * (4.0 / 3.0 + 3.0 * n / (2.0 * lam)) ** 2
    return lhs <= rhs


_CONSTRUCTORS = {
    CLOPPER_PEARSON: clopper_pearson_bounds,
    CHERNOFF_HOEFFDING: chernoff_hoeffding_bounds,
    MASSART: massart_bounds,
}


def interval_bounds(kind: str, n: int, k: int, alpha: float) -> ConfidenceInterval:
    try:
        ctor = _CONSTRUCTORS[kind]
    except KeyError:
        raise ValueError(f"unknown interval kind: {kind!r}") from None
    return ctor(n, k, alpha)
