"""Stage decision variables: stop (True) or keep sampling (False).

Each rule is a pure function of the stage index and the sufficient
statistic, using the closed comparison conventions (>= / <=) verbatim with
no numeric slack, because the exact-analysis engine depends on boundary
membership coming out the same way everywhere.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from . import plans
from .intervals import (
    CHERNOFF_HOEFFDING,
    CLOPPER_PEARSON,
    MASSART,
    interval_bounds,
    massart_width_stops,
)
from .kernels import massart_exponent

_FW_INTERVAL_KIND = {
    plans.FW_CP: CLOPPER_PEARSON,
    plans.FW_CH: CHERNOFF_HOEFFDING,
    plans.FW_MASSART: MASSART,
}


class StageObservation(NamedTuple):
    stage_index: int  # 1-based
    statistic: float  # success count (fixed-size), sample count (inverse), or mean


def interval_kind_for(plan: plans.SamplingPlan) -> str:
    return _FW_INTERVAL_KIND[plan.kind]


def decide_abs(plan: plans.SamplingPlan, ell: int, k: int) -> bool:
    n = plan.stages[ell - 1]
    if ell == plan.num_stages:
        return True
    p_hat = k / n
    lhs = (abs(p_hat - 0.5) - 2.0 * plan.eps / 3.0) ** 2
    rhs = 0.25 + plan.eps**2 * n / (2.0 * plan.log_zeta_delta)
    return lhs >= rhs


def relative_stop_threshold(eps: float, log_zd: float, n: int) -> float:
    """Fraction above which the relative-error rules stop at sample size n."""
    return (
        6.0 * (1.0 + eps) * (3.0 + eps) * log_zd
        / (2.0 * (3.0 + eps) ** 2 * log_zd - 9.0 * n * eps**2)
    )


def mixed_continue_windows(eps_a: float, eps_r: float, log_zd: float, n: int):
    """The two open continuation windows of the mixed rule.

    Returns a list of (lo, hi) pairs; a window whose square-root term goes
    imaginary has dropped out and is omitted.
    """
    disc = 0.25 + n * eps_a**2 / (2.0 * log_zd)
    if disc < 0.0:
        return []
    root = math.sqrt(disc)
    hi_minus = (
        6.0 * (1.0 - eps_r) * (3.0 - eps_r) * log_zd
        / (2.0 * (3.0 - eps_r) ** 2 * log_zd - 9.0 * n * eps_r**2)
    )
    hi_plus = relative_stop_threshold(eps_r, log_zd, n)
    return [
        (0.5 - 2.0 * eps_a / 3.0 - root, hi_minus),
        (0.5 + 2.0 * eps_a / 3.0 - root, hi_plus),
    ]


def decide_mixed(plan: plans.SamplingPlan, ell: int, k: int) -> bool:
    if ell == plan.num_stages:
        return True
    n = plan.stages[ell - 1]
    p_hat = k / n
    for lo, hi in mixed_continue_windows(plan.eps_a, plan.eps_r, plan.log_zeta_delta, n):
        if lo < p_hat < hi:
            return False
    return True


def decide_rel_inverse(plan: plans.SamplingPlan, ell: int, n: int) -> bool:
    gamma = plan.stages[ell - 1]
    if n < gamma:
        raise ValueError("sample count below the stage's success target")
    if ell == plan.num_stages:
        return True
    return gamma / n >= plan.z_thresholds[ell - 1]


def delta_schedule(delta: float, tau_free: int, ell: int) -> float:
    """Per-stage confidence budget for the open-ended relative scheme."""
    if ell <= tau_free:
        return delta
    return delta * 2.0 ** (tau_free - ell)


def decide_rel_fixed(eps: float, zeta: float, delta_ell: float, n_ell: int, k: int) -> bool:
    log_zdl = math.log(zeta * delta_ell)
    return k / n_ell >= relative_stop_threshold(eps, log_zdl, n_ell)


def fw_stop_from_interval(plan: plans.SamplingPlan, n: int, k: int, ci) -> bool:
    """Width test for a prebuilt stage interval.

    The Massart rule goes through its algebraic form whenever neither clamp
    is active (identical to the width comparison there) and falls back to
    the direct comparison when a clamp truncated the interval.
    """
    if plan.kind == plans.FW_MASSART and 0.0 < ci.lower and ci.upper < 1.0:
        return massart_width_stops(n, k, plan.zeta * plan.delta, plan.eps)
    return ci.width <= 2.0 * plan.eps


def decide_fw(plan: plans.SamplingPlan, ell: int, k: int) -> bool:
    """Stop when the stage interval's width drops to 2*eps or less."""
    n = plan.stages[ell - 1]
    ci = interval_bounds(_FW_INTERVAL_KIND[plan.kind], n, k, plan.zeta * plan.delta)
    return fw_stop_from_interval(plan, n, k, ci)


def decide_bounded_abs(plan: plans.SamplingPlan, ell: int, mean: float) -> bool:
    n = plan.stages[ell - 1]
    lhs = (abs(mean - 0.5) - 2.0 * plan.eps / 3.0) ** 2
    rhs = 0.25 - plan.eps**2 * n / (2.0 * math.log(2.0 * plan.num_stages / plan.delta))
    return lhs >= rhs


def decide_bounded_mixed(plan: plans.SamplingPlan, ell: int, mean: float) -> bool:
    # No zeta appears in this scheme; delta/(2*s) plays the zeta*delta role,
    # matching the final-stage floor.
    if ell == plan.num_stages:
        return True
    n = plan.stages[ell - 1]
    for lo, hi in mixed_continue_windows(plan.eps_a, plan.eps_r, plan.log_bounded, n):
        if lo < mean < hi:
            return False
    return True


def decide_general_mixed(plan: plans.SamplingPlan, ell: int, mean: float) -> bool:
    """Mixed-criterion rule for a variable on [a, b]; `mean` is on the raw scale."""
    a, b = plan.range_lo, plan.range_hi
    span = b - a
    n = plan.stages[ell - 1]
    sgn = float(np.sign(mean))
    lower_raw = min(mean - plan.eps_a, mean / (1.0 + sgn * plan.eps_r))
    upper_raw = max(mean + plan.eps_a, mean / (1.0 - sgn * plan.eps_r))
    z = (mean - a) / span
    mu_lo = (lower_raw - a) / span
    mu_hi = (upper_raw - a) / span
    target = plan.log_bounded / n
    return (
        massart_exponent(z, mu_lo) <= target
        and massart_exponent(z, mu_hi) <= target
    )


def decide(plan: plans.SamplingPlan, obs: StageObservation) -> bool:
    """Uniform entry point mapping an observation through its scheme's rule."""
    ell = obs.stage_index
    if plan.kind == plans.ABS:
        return decide_abs(plan, ell, int(obs.statistic))
    if plan.kind == plans.MIXED:
        return decide_mixed(plan, ell, int(obs.statistic))
    if plan.kind == plans.REL_INVERSE:
        return decide_rel_inverse(plan, ell, int(obs.statistic))
    if plan.kind == plans.REL_FIXED:
        n_ell = plans.rel_fixed_stage_size(plan, ell)
        d_ell = delta_schedule(plan.delta, plan.tau_free, ell)
        return decide_rel_fixed(plan.eps, plan.zeta, d_ell, n_ell, int(obs.statistic))
    if plan.kind in plans.FW_KINDS:
        return decide_fw(plan, ell, int(obs.statistic))
    if plan.kind == plans.BOUNDED_ABS:
        return decide_bounded_abs(plan, ell, float(obs.statistic))
    if plan.kind == plans.BOUNDED_MIXED:
        return decide_bounded_mixed(plan, ell, float(obs.statistic))
    if plan.kind == plans.GENERAL_MIXED:
        return decide_general_mixed(plan, ell, float(obs.statistic))
    raise ValueError(f"no decision rule for kind {plan.kind!r}")


def decision_table(plan: plans.SamplingPlan, ell: int) -> np.ndarray:
    """Boolean stop table over success counts k = 0..n_ell for fixed-size schemes.

    Bounded kinds are tabulated through mean = k/n, which is exact when the
    samples are Bernoulli.
    """
    if plan.kind not in plans.FIXED_SIZE_KINDS:
        raise ValueError("decision tables exist only for fixed-size schemes")
    n = plan.stages[ell - 1]
    out = np.empty(n + 1, dtype=bool)
    for k in range(n + 1):
        if plan.kind in plans.BOUNDED_KINDS:
            a, b = plan.range_lo, plan.range_hi
            stat = a + (b - a) * (k / n) if plan.kind == plans.GENERAL_MIXED else k / n
            out[k] = decide(plan, StageObservation(ell, stat))
        else:
            out[k] = decide(plan, StageObservation(ell, k))
    return out
