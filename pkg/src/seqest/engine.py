"""Exact analysis of plan + rule pairs.

Everything here is driven by one observation: every stopping rule is a
function of the stage index and the sufficient statistic alone (success
count for fixed-size schemes, sample count for inverse sampling).  The
joint law of (stopping stage, terminal statistic) therefore follows from a
lattice dynamic program over that statistic, giving exact error sums,
coverage, certification of the per-scheme sufficient conditions on their
finite checkpoint sets, interval coverage bounds, and confidence tuning.

Boundary membership in the checkpoint sets is decided in exact rational
arithmetic (margins read as decimal literals) so that atoms sitting exactly
on an event boundary are classified the same way the conditions state them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import plans, rules
from .distributions import binom_pmf_vector
from .intervals import interval_bounds
from .kernels import inverse_sampling_tail_bound, massart_exponent_inverse

DEFAULT_TRUNCATION_TOL = 1e-12


class CertificationUnverifiable(RuntimeError):
    """A checkpoint set could not be constructed (no usable sign change)."""


def _frac_ceil(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


def _frac_floor(x: Fraction) -> int:
    return x.numerator // x.denominator


def decimal_fraction(x: float) -> Fraction:
    """Exact rational value of a float's shortest decimal representation."""
    return Fraction(str(x))


# ---------------------------------------------------------------------------
# Stopping-time distributions


@dataclass
class StageStopDistribution:
    """Exact joint law of (stopping stage, terminal statistic) at one p."""

    kind: str
    p: float
    stages: tuple[int, ...]
    stop: list[np.ndarray]        # stage -> mass over statistic values
    stat_offset: list[int]        # statistic value of index 0, per stage
    survivor_in: list[float]      # mass reaching each stage's checkpoint
    truncation_error: float       # neglected mass (inverse / open-ended only)
    unstopped_mass: float         # mass alive after the final stage (should be 0)
    expected_sample_size: float

    @property
    def stage_masses(self) -> list[float]:
        return [float(v.sum()) for v in self.stop]

    @property
    def total_stop_mass(self) -> float:
        return float(sum(v.sum() for v in self.stop))


@lru_cache(maxsize=64)
def decision_tables(plan: plans.SamplingPlan) -> tuple[np.ndarray, ...]:
    """Per-stage stop tables over the success count, for fixed-size schemes."""
    if plan.kind in plans.FW_KINDS:
        tabs = []
        low, up = fw_bound_tables(plan)
        for ell in range(1, plan.num_stages + 1):
            n = plan.stages[ell - 1]
            tab = np.empty(n + 1, dtype=bool)
            for k in range(n + 1):
                ci = _FWInterval(low[ell - 1][k], up[ell - 1][k])
                tab[k] = rules.fw_stop_from_interval(plan, n, k, ci)
            tabs.append(tab)
        return tuple(tabs)
    return tuple(
        rules.decision_table(plan, ell) for ell in range(1, plan.num_stages + 1)
    )


@dataclass(frozen=True)
class _FWInterval:
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower


@lru_cache(maxsize=16)
def fw_bound_tables(plan: plans.SamplingPlan):
    """Interval endpoints for every (stage, count) of a fixed-width plan."""
    kind = rules.interval_kind_for(plan)
    alpha = plan.zeta * plan.delta
    lows, ups = [], []
    for n in plan.stages:
        lo = np.empty(n + 1)
        up = np.empty(n + 1)
        for k in range(n + 1):
            ci = interval_bounds(kind, n, k, alpha)
            lo[k] = ci.lower
            up[k] = ci.upper
        lows.append(lo)
        ups.append(up)
    return tuple(lows), tuple(ups)


def fixed_size_stop_distribution(
    stages: tuple[int, ...], tables, p: float, kind: str = "custom"
) -> StageStopDistribution:
    """Rule-agnostic lattice DP over the success count.

    `tables[ell]` is the boolean stop table over k at stage ell; the DP
    needs nothing else because every shipped rule is a function of
    (stage, statistic) alone.
    """
    stop: list[np.ndarray] = []
    survivor_in: list[float] = []
    expected = 0.0
    dist = binom_pmf_vector(stages[0], p)
    for ell, n in enumerate(stages, start=1):
        survivor_in.append(float(dist.sum()))
        table = tables[ell - 1]
        stopped = np.where(table, dist, 0.0)
        stop.append(stopped)
        expected += n * float(stopped.sum())
        dist = np.where(table, 0.0, dist)
        if ell < len(stages):
            dist = np.convolve(dist, binom_pmf_vector(stages[ell] - n, p))
    unstopped = float(dist.sum())
    return StageStopDistribution(
        kind=kind, p=p, stages=stages, stop=stop,
        stat_offset=[0] * len(stages), survivor_in=survivor_in,
        truncation_error=0.0, unstopped_mass=unstopped,
        expected_sample_size=expected,
    )


def _fixed_size_distribution(plan: plans.SamplingPlan, p: float) -> StageStopDistribution:
    return fixed_size_stop_distribution(
        plan.stages, decision_tables(plan), p, kind=plan.kind
    )


def _inverse_stop_cutoffs(plan: plans.SamplingPlan) -> list[float]:
    """Largest sample count at which each stage still stops (inf at the last)."""
    cutoffs = []
    for ell, gamma in enumerate(plan.stages, start=1):
        if ell == plan.num_stages:
            cutoffs.append(math.inf)
            continue
        z = plan.z_thresholds[ell - 1]
        if z <= 0.0:
            cutoffs.append(math.inf)
            continue
        c = int(math.floor(gamma / z))
        # align the integer cutoff with the float comparison the rule makes
        while c >= gamma and gamma / c < z:
            c -= 1
        while gamma / (c + 1) >= z:
            c += 1
        cutoffs.append(float(c))
    return cutoffs


def _inverse_distribution(
    plan: plans.SamplingPlan,
    p: float,
    tol: float = DEFAULT_TRUNCATION_TOL,
    budget: int | None = None,
) -> StageStopDistribution:
    """Sample-by-sample walk over the success-count lattice.

    Active mass lives on success counts 0..gamma_s - 1; a path is checked
    exactly when it reaches a stage's success target, and stops when its
    sample count is at or below that stage's cutoff.
    """
    if p <= 0.0 or p >= 1.0:
        raise ValueError("inverse-sampling analysis needs p in (0, 1)")
    gammas = plan.stages
    s = len(gammas)
    cutoffs = _inverse_stop_cutoffs(plan)
    gamma_top = gammas[-1]
    stage_of = {g: i for i, g in enumerate(gammas[:-1])}  # success count -> stage idx

    stop_lists: list[dict[int, float]] = [dict() for _ in range(s)]
    arrivals_total = [0.0] * s
    active = np.zeros(gamma_top)
    active[0] = 1.0
    q = 1.0 - p
    t = 0
    truncation = 0.0
    expected = 0.0
    cap = budget if budget is not None else 10_000_000
    while True:
        t += 1
        moved = active * p
        new_active = active * q
        new_active[1:] += moved[:-1]
        top_arrival = float(moved[-1])
        if top_arrival > 0.0:
            arrivals_total[s - 1] += top_arrival
            stop_lists[s - 1][t] = top_arrival
            expected += t * top_arrival
        for g, idx in stage_of.items():
            arr = float(moved[g - 1]) if g >= 1 else 0.0
            if arr <= 0.0:
                continue
            arrivals_total[idx] += arr
            if t <= cutoffs[idx]:
                stop_lists[idx][t] = arr
                new_active[g] -= arr
                expected += t * arr
        active = new_active
        remaining = float(active.sum())
        if remaining < tol:
            truncation = max(remaining, 0.0)
            break
        if t >= cap:
            truncation = max(remaining, 0.0)
            break

    stop_arrays = []
    offsets = []
    for idx in range(s):
        d = stop_lists[idx]
        if not d:
            stop_arrays.append(np.zeros(0))
            offsets.append(gammas[idx])
            continue
        lo, hi = min(d), max(d)
        arr = np.zeros(hi - lo + 1)
        for tt, m in d.items():
            arr[tt - lo] = m
        stop_arrays.append(arr)
        offsets.append(lo)
    return StageStopDistribution(
        kind=plan.kind, p=p, stages=gammas, stop=stop_arrays,
        stat_offset=offsets, survivor_in=arrivals_total,
        truncation_error=truncation, unstopped_mass=0.0,
        expected_sample_size=expected,
    )


def _open_ended_distribution(
    plan: plans.SamplingPlan,
    p: float,
    tol: float = DEFAULT_TRUNCATION_TOL,
    max_stages: int = 200,
) -> StageStopDistribution:
    """Open-ended relative scheme: stages appended until the stop mass
    accumulated reaches 1 - tol."""
    stop: list[np.ndarray] = []
    survivor_in: list[float] = []
    sizes: list[int] = []
    expected = 0.0
    dist = None
    prev_n = 0
    for ell in range(1, max_stages + 1):
        n = plans.rel_fixed_stage_size(plan, ell)
        sizes.append(n)
        inc = binom_pmf_vector(n - prev_n, p)
        dist = inc if dist is None else np.convolve(dist, inc)
        survivor_in.append(float(dist.sum()))
        d_ell = rules.delta_schedule(plan.delta, plan.tau_free, ell)
        ks = np.arange(n + 1)
        thresh = rules.relative_stop_threshold(
            plan.eps, math.log(plan.zeta * d_ell), n
        )
        table = ks / n >= thresh
        stopped = np.where(table, dist, 0.0)
        stop.append(stopped)
        expected += n * float(stopped.sum())
        dist = np.where(table, 0.0, dist)
        prev_n = n
        if float(dist.sum()) < tol:
            break
    return StageStopDistribution(
        kind=plan.kind, p=p, stages=tuple(sizes), stop=stop,
        stat_offset=[0] * len(sizes), survivor_in=survivor_in,
        truncation_error=float(dist.sum()), unstopped_mass=0.0,
        expected_sample_size=expected,
    )


def stop_distribution(
    plan: plans.SamplingPlan,
    p: float,
    tol: float = DEFAULT_TRUNCATION_TOL,
    budget: int | None = None,
) -> StageStopDistribution:
    """Exact joint stopping law of the plan's scheme at truth p."""
    if plan.kind == plans.REL_INVERSE:
        return _inverse_distribution(plan, p, tol=tol, budget=budget)
    if plan.kind == plans.REL_FIXED:
        return _open_ended_distribution(plan, p, tol=tol)
    return _fixed_size_distribution(plan, p)


# ---------------------------------------------------------------------------
# Events and error sums


@dataclass(frozen=True)
class StopEvent:
    """Per-stage inclusive statistic ranges; None marks an empty stage event."""

    name: str
    ranges: tuple[tuple[int, int] | None, ...]


def event_sums(dist: StageStopDistribution, event: StopEvent) -> list[float]:
    """Stop mass captured by the event, stage by stage."""
    out = []
    for idx, arr in enumerate(dist.stop):
        rng = event.ranges[idx]
        if rng is None or arr.size == 0:
            out.append(0.0)
            continue
        lo, hi = rng
        off = dist.stat_offset[idx]
        a = max(lo - off, 0)
        b = min(hi - off, arr.size - 1)
        out.append(float(arr[a : b + 1].sum()) if a <= b else 0.0)
    return out


def _half_line_ranges(plan, p: Fraction, side: str, margin_mul: Fraction | None,
                      margin_add: Fraction | None) -> StopEvent:
    """Events of the form {p_hat >= p*mul + add} (side='ge') or <= (side='le')
    for count-statistic schemes."""
    ranges = []
    thresh = p * (margin_mul if margin_mul is not None else 1) + (
        margin_add if margin_add is not None else 0
    )
    for n in plan.stages:
        bound = thresh * n
        if side == "ge":
            lo = _frac_ceil(bound)
            ranges.append((lo, n) if lo <= n else None)
        else:
            hi = _frac_floor(bound)
            ranges.append((0, hi) if hi >= 0 else None)
    return StopEvent(name="", ranges=tuple(ranges))


def condition_events(plan: plans.SamplingPlan, p: Fraction) -> dict[str, StopEvent]:
    """The per-scheme sufficient-condition events, exactly classified at p."""
    kind = plan.kind
    if kind == plans.ABS:
        eps = decimal_fraction(plan.eps)
        over = _half_line_ranges(plan, p, "ge", None, eps)
        under = _half_line_ranges(plan, p, "le", None, -eps)
        return {
            "over_abs": StopEvent("over_abs", over.ranges),
            "under_abs": StopEvent("under_abs", under.ranges),
        }
    if kind == plans.MIXED:
        ea = decimal_fraction(plan.eps_a)
        er = decimal_fraction(plan.eps_r)
        return {
            "over_abs": StopEvent(
                "over_abs", _half_line_ranges(plan, p, "ge", None, ea).ranges
            ),
            "under_abs": StopEvent(
                "under_abs", _half_line_ranges(plan, p, "le", None, -ea).ranges
            ),
            "over_rel": StopEvent(
                "over_rel", _half_line_ranges(plan, p, "ge", 1 + er, None).ranges
            ),
            "under_rel": StopEvent(
                "under_rel", _half_line_ranges(plan, p, "le", 1 - er, None).ranges
            ),
        }
    if kind == plans.REL_INVERSE:
        eps = decimal_fraction(plan.eps)
        over_ranges = []   # p_hat >= (1+eps) p  <=>  n <= gamma/((1+eps) p)
        under_ranges = []  # p_hat <= (1-eps) p  <=>  n >= gamma/((1-eps) p)
        for gamma in plan.stages:
            hi = _frac_floor(Fraction(gamma) / ((1 + eps) * p))
            over_ranges.append((gamma, hi) if hi >= gamma else None)
            lo = _frac_ceil(Fraction(gamma) / ((1 - eps) * p))
            under_ranges.append((max(lo, gamma), 10**18))
        return {
            "over_rel": StopEvent("over_rel", tuple(over_ranges)),
            "under_rel": StopEvent("under_rel", tuple(under_ranges)),
        }
    raise ValueError(f"no closed-form condition events for kind {kind!r}")


def fw_condition_masks(plan: plans.SamplingPlan, p: float):
    """Stop-count masks for the interval events {L >= p} and {U <= p}."""
    lows, ups = fw_bound_tables(plan)
    over = [lo >= p for lo in lows]   # lower endpoint at or above the truth
    under = [up <= p for up in ups]   # upper endpoint at or below the truth
    return over, under


def masked_sums(dist: StageStopDistribution, masks) -> list[float]:
    out = []
    for arr, mask in zip(dist.stop, masks):
        out.append(float(arr[mask[: arr.size]].sum()))
    return out


def error_sums(
    plan: plans.SamplingPlan, p: Fraction | float, dist: StageStopDistribution | None = None
) -> dict[str, list[float]]:
    """Stage-by-stage stop mass in each of the scheme's condition events at p."""
    if dist is None:
        dist = stop_distribution(plan, float(p))
    if plan.kind in plans.FW_KINDS:
        over, under = fw_condition_masks(plan, float(p))
        return {
            "lower_at_or_above": masked_sums(dist, over),
            "upper_at_or_below": masked_sums(dist, under),
        }
    p_frac = p if isinstance(p, Fraction) else Fraction(p)
    events = condition_events(plan, p_frac)
    return {name: event_sums(dist, ev) for name, ev in events.items()}


# ---------------------------------------------------------------------------
# Coverage


def success_event(plan: plans.SamplingPlan, p: Fraction) -> StopEvent:
    """The scheme's success event (estimate within its guarantee) at truth p."""
    kind = plan.kind
    if kind in (plans.ABS, plans.BOUNDED_ABS):
        eps = decimal_fraction(plan.eps)
        ranges = []
        for n in plan.stages:
            lo = _frac_floor((p - eps) * n) + 1
            hi = _frac_ceil((p + eps) * n) - 1
            ranges.append((max(lo, 0), min(hi, n)) if lo <= hi else None)
        return StopEvent("success", tuple(ranges))
    if kind in (plans.MIXED, plans.BOUNDED_MIXED, plans.GENERAL_MIXED):
        ea = decimal_fraction(plan.eps_a)
        er = decimal_fraction(plan.eps_r)
        margin = max(ea, er * p)
        ranges = []
        for n in plan.stages:
            lo = _frac_floor((p - margin) * n) + 1
            hi = _frac_ceil((p + margin) * n) - 1
            ranges.append((max(lo, 0), min(hi, n)) if lo <= hi else None)
        return StopEvent("success", tuple(ranges))
    if kind == plans.REL_INVERSE:
        eps = decimal_fraction(plan.eps)
        ranges = []
        for gamma in plan.stages:
            lo = _frac_ceil(Fraction(gamma) / ((1 + eps) * p))
            hi = _frac_floor(Fraction(gamma) / ((1 - eps) * p))
            ranges.append((max(lo, gamma), hi) if hi >= max(lo, gamma) else None)
        return StopEvent("success", tuple(ranges))
    raise ValueError(f"no closed-form success event for kind {kind!r}")


def coverage(
    plan: plans.SamplingPlan, p: Fraction | float, dist: StageStopDistribution | None = None
) -> float:
    """Exact probability of the scheme's success event at truth p."""
    if dist is None:
        dist = stop_distribution(plan, float(p))
    if plan.kind in plans.FW_KINDS:
        lows, ups = fw_bound_tables(plan)
        pf = float(p)
        total = 0.0
        for arr, lo, up in zip(dist.stop, lows, ups):
            mask = (lo[: arr.size] < pf) & (pf < up[: arr.size])
            total += float(arr[mask].sum())
        return total
    p_frac = p if isinstance(p, Fraction) else Fraction(p)
    if plan.kind == plans.REL_FIXED:
        # the stage grid is open-ended; classify over the stages the
        # distribution actually realized
        eps = decimal_fraction(plan.eps)
        ranges = []
        for n in dist.stages:
            lo = _frac_ceil((1 - eps) * p_frac * n)
            hi = _frac_floor((1 + eps) * p_frac * n)
            ranges.append((max(lo, 0), min(hi, n)) if lo <= hi else None)
        ev = StopEvent("success", tuple(ranges))
        return float(sum(event_sums(dist, ev)))
    ev = success_event(plan, p_frac)
    return float(sum(event_sums(dist, ev)))


# ---------------------------------------------------------------------------
# Checkpoint (Q) sets


@dataclass(frozen=True)
class QPoint:
    value: Fraction | float
    tag: str


@dataclass
class QSet:
    name: str
    points: list[QPoint]

    def values(self) -> list:
        return [pt.value for pt in self.points]


def _dedup_sorted(points: list[QPoint]) -> list[QPoint]:
    seen = {}
    for pt in points:
        if pt.value not in seen:
            seen[pt.value] = pt
    return [seen[v] for v in sorted(seen)]


def solve_rel_pstar(plan: plans.SamplingPlan, tol: float = 1e-13) -> float:
    """Criterion switch point for the inverse scheme's checkpoint sets.

    Unique root in (0, z_{s-1}) of
      g(eps, gamma_s) + sum_{l<s} exp(gamma_l * m_inv(z_l, p)) = delta.
    Reports unverifiable when the bracket carries no sign change.
    """
    if plan.kind != plans.REL_INVERSE:
        raise ValueError("switch point only defined for the inverse scheme")
    zs = plan.z_thresholds
    if not zs or any(z <= 0.0 for z in zs) or zs[-1] >= 1.0:
        raise CertificationUnverifiable(
            "stage thresholds leave no open interval for the switch point"
        )
    g_top = inverse_sampling_tail_bound(plan.eps, plan.stages[-1])

    def f(p: float) -> float:
        total = g_top - plan.delta
        for gamma, z in zip(plan.stages[:-1], zs):
            total += math.exp(gamma * massart_exponent_inverse(z, p))
        return total

    lo, hi = 1e-12, zs[-1] * (1.0 - 1e-12)
    flo, fhi = f(lo), f(hi)
    if not (flo < 0.0 < fhi):
        raise CertificationUnverifiable(
            "switch-point equation has no sign change on (0, z_top): "
            f"f({lo:.3g})={flo:.3g}, f({hi:.3g})={fhi:.3g}"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def build_qsets(plan: plans.SamplingPlan) -> dict[str, QSet]:
    """Finite checkpoint sets on which the sufficient conditions are verified.

    Counts are enumerated over 0..n_l; values outside cannot be realized by
    any sample path, and the events they would generate are empty.
    """
    kind = plan.kind
    if kind == plans.ABS:
        eps = decimal_fraction(plan.eps)
        half = Fraction(1, 2)
        plus, minus = [], []
        for ell, n in enumerate(plan.stages, start=1):
            for k in range(n + 1):
                v = Fraction(k, n) + eps
                if 0 < v < half:
                    plus.append(QPoint(v, f"stage {ell}, k={k}, +margin"))
                v = Fraction(k, n) - eps
                if 0 < v < half:
                    minus.append(QPoint(v, f"stage {ell}, k={k}, -margin"))
        anchor = QPoint(half, "midpoint anchor")
        return {
            "plus": QSet("plus", _dedup_sorted(plus + [anchor])),
            "minus": QSet("minus", _dedup_sorted(minus + [anchor])),
        }
    if kind == plans.MIXED:
        ea = decimal_fraction(plan.eps_a)
        er = decimal_fraction(plan.eps_r)
        p_star = ea / er
        a_plus, a_minus, r_plus, r_minus = [], [], [], []
        for ell, n in enumerate(plan.stages, start=1):
            for k in range(n + 1):
                v = Fraction(k, n) + ea
                if 0 < v < p_star:
                    a_plus.append(QPoint(v, f"stage {ell}, k={k}, +abs margin"))
                v = Fraction(k, n) - ea
                if 0 < v < p_star:
                    a_minus.append(QPoint(v, f"stage {ell}, k={k}, -abs margin"))
                v = Fraction(k, n) / (1 + er)
                if p_star < v < 1:
                    r_plus.append(QPoint(v, f"stage {ell}, k={k}, /(1+rel)"))
                v = Fraction(k, n) / (1 - er)
                if p_star < v < 1:
                    r_minus.append(QPoint(v, f"stage {ell}, k={k}, /(1-rel)"))
        anchor = QPoint(p_star, "criterion switch point")
        return {
            "abs_plus": QSet("abs_plus", _dedup_sorted(a_plus + [anchor])),
            "abs_minus": QSet("abs_minus", _dedup_sorted(a_minus + [anchor])),
            "rel_plus": QSet("rel_plus", _dedup_sorted(r_plus)),
            "rel_minus": QSet("rel_minus", _dedup_sorted(r_minus)),
        }
    if kind == plans.REL_INVERSE:
        eps = decimal_fraction(plan.eps)
        p_star = solve_rel_pstar(plan)
        p_star_frac = Fraction(p_star)
        r_plus, r_minus = [], []
        for ell, gamma in enumerate(plan.stages, start=1):
            for sign, sink, label in (
                (1 + eps, r_plus, "/(1+rel)"),
                (1 - eps, r_minus, "/(1-rel)"),
            ):
                m_lo = _frac_floor(Fraction(gamma) / sign) + 1
                m_hi = _frac_ceil(Fraction(gamma) / (sign * p_star_frac)) - 1
                for m in range(max(m_lo, 1), m_hi + 1):
                    v = Fraction(gamma) / (sign * m)
                    if p_star_frac < v < 1:
                        sink.append(QPoint(v, f"stage {ell}, m={m}, {label}"))
        return {
            "rel_plus": QSet("rel_plus", _dedup_sorted(r_plus)),
            "rel_minus": QSet("rel_minus", _dedup_sorted(r_minus)),
        }
    if kind in plans.FW_KINDS:
        lows, ups = fw_bound_tables(plan)
        lower_pts, upper_pts = [], []
        for ell, (lo, up) in enumerate(zip(lows, ups), start=1):
            for k, v in enumerate(lo):
                if 0.0 < v < 1.0:
                    lower_pts.append(QPoint(float(v), f"stage {ell}, k={k}, lower"))
            for k, v in enumerate(up):
                if 0.0 < v < 1.0:
                    upper_pts.append(QPoint(float(v), f"stage {ell}, k={k}, upper"))
        return {
            "lower": QSet("lower", _dedup_sorted(lower_pts)),
            "upper": QSet("upper", _dedup_sorted(upper_pts)),
        }
    raise ValueError(f"no checkpoint sets for kind {kind!r}")


# Which condition is verified over which checkpoint set.
_CONDITION_QSET = {
    plans.ABS: {"over_abs": "minus", "under_abs": "plus"},
    plans.MIXED: {
        "over_abs": "abs_minus",
        "under_abs": "abs_plus",
        "over_rel": "rel_plus",
        "under_rel": "rel_minus",
    },
    plans.REL_INVERSE: {"over_rel": "rel_plus", "under_rel": "rel_minus"},
    plans.FW_CP: {"lower_at_or_above": "lower", "upper_at_or_below": "upper"},
    plans.FW_CH: {"lower_at_or_above": "lower", "upper_at_or_below": "upper"},
    plans.FW_MASSART: {"lower_at_or_above": "lower", "upper_at_or_below": "upper"},
}


# ---------------------------------------------------------------------------
# Certification


@dataclass
class ConditionRow:
    condition: str
    p: float
    stage: int
    mass: float


@dataclass
class CoverageCertificate:
    zeta: float
    delta: float
    valid: bool
    worst_condition: str
    worst_point: float
    worst_risk: float
    method: str
    rows: list[ConditionRow] = field(default_factory=list)
    point_totals: list[tuple[str, float, float]] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def threshold(self) -> float:
        return self.delta / 2.0


def _evaluate_condition_points(plan, condition: str, values: list) -> list[tuple[float, list[float]]]:
    out = []
    for v in values:
        dist = stop_distribution(plan, float(v))
        sums = error_sums(plan, v, dist)[condition]
        out.append((float(v), sums))
    return out


def _chunked(seq, size):
    return [seq[i : i + size] for i in range(0, len(seq), size)]


def certify(
    plan: plans.SamplingPlan,
    jobs: int = 1,
    method: str = "grid",
) -> CoverageCertificate:
    """Evaluate every sufficient-condition sum at every checkpoint point.

    The certificate is valid when every sum stays below delta/2 (at or
    below for the inverse scheme, whose conditions are stated with a
    closed inequality), and, for the inverse scheme, when its two side
    conditions hold as well.
    """
    if plan.kind not in _CONDITION_QSET:
        raise ValueError(f"scheme {plan.kind!r} does not support exact certification")
    if plan.zeta * plan.delta >= 1.0:
        raise ValueError("zeta * delta must stay below 1 for certification")
    details: dict = {}
    strict = plan.kind != plans.REL_INVERSE
    try:
        qsets = build_qsets(plan)
    except CertificationUnverifiable as exc:
        return CoverageCertificate(
            zeta=plan.zeta, delta=plan.delta, valid=False,
            worst_condition="(unverifiable)", worst_point=float("nan"),
            worst_risk=float("inf"), method=method,
            details={"unverifiable": str(exc)},
        )
    if plan.kind == plans.REL_INVERSE:
        g_top = inverse_sampling_tail_bound(plan.eps, plan.stages[-1])
        eps = plan.eps
        cona_rhs = (
            ((1 + eps + math.sqrt(1 + 4 * eps + eps**2)) ** 2 / (4 * eps**2) + 0.5)
            * (eps / (1 + eps) - math.log1p(eps))
        )
        details["g_tail_bound"] = g_top
        details["g_ok"] = g_top < plan.delta
        details["cona_rhs"] = cona_rhs
        details["cona_ok"] = plan.log_zeta_delta < cona_rhs
        details["p_star"] = solve_rel_pstar(plan)

    rows: list[ConditionRow] = []
    point_totals: list[tuple[str, float, float]] = []
    for condition, qname in _CONDITION_QSET[plan.kind].items():
        values = qsets[qname].values()
        if jobs > 1 and len(values) > 8:
            from concurrent.futures import ProcessPoolExecutor

            chunks = _chunked(values, max(1, math.ceil(len(values) / (4 * jobs))))
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                futures = [
                    ex.submit(_evaluate_condition_points, plan, condition, ch)
                    for ch in chunks
                ]
                results = [f.result() for f in futures]
            evaluated = [item for res in results for item in res]
        else:
            evaluated = _evaluate_condition_points(plan, condition, values)
        for pv, sums in evaluated:
            for stage, mass in enumerate(sums, start=1):
                rows.append(ConditionRow(condition, pv, stage, mass))
            point_totals.append((condition, pv, float(sum(sums))))

    threshold = plan.delta / 2.0
    worst = max(point_totals, key=lambda item: item[2], default=("(none)", float("nan"), 0.0))
    cond_ok = all(
        (total < threshold if strict else total <= threshold)
        for _, _, total in point_totals
    )
    valid = cond_ok and details.get("g_ok", True) and details.get("cona_ok", True)
    return CoverageCertificate(
        zeta=plan.zeta, delta=plan.delta, valid=valid,
        worst_condition=worst[0], worst_point=worst[1], worst_risk=worst[2],
        method=method, rows=rows, point_totals=point_totals, details=details,
    )


# ---------------------------------------------------------------------------
# Interval coverage bounds and confidence tuning


def _fw_event_probs(plan, dist, a: float, b: float):
    """Pr{L >= a}, Pr{U <= b}, Pr{L > a}, Pr{U < b} under one stop law."""
    lows, ups = fw_bound_tables(plan)
    l_ge = l_gt = u_le = u_lt = 0.0
    for arr, lo, up in zip(dist.stop, lows, ups):
        l_ge += float(arr[lo[: arr.size] >= a].sum())
        l_gt += float(arr[lo[: arr.size] > a].sum())
        u_le += float(arr[up[: arr.size] <= b].sum())
        u_lt += float(arr[up[: arr.size] < b].sum())
    return l_ge, u_le, l_gt, u_lt


def interval_supports(plan: plans.SamplingPlan) -> np.ndarray:
    """All values the reported endpoints can take, clamps included."""
    lows, ups = fw_bound_tables(plan)
    vals = set()
    for lo, up in zip(lows, ups):
        vals.update(float(v) for v in lo)
        vals.update(float(v) for v in up)
    return np.array(sorted(vals))


def coverage_bounds(
    plan: plans.SamplingPlan, a: float, b: float, use_refined: bool | None = None
) -> tuple[float, float]:
    """Bounds on the miss probability C(p) = 1 - Pr{L < p < U} over p in [a, b].

    The generic form conditions each endpoint event on the opposite end of
    the interval; when (a, b) contains no support point of the reported
    endpoints, the sharper same-endpoint form applies.
    """
    if plan.kind not in plans.FW_KINDS:
        raise ValueError("coverage bounds apply to fixed-width schemes")
    if not 0.0 < a <= b < 1.0:
        raise ValueError("need 0 < a <= b < 1")
    dist_a = stop_distribution(plan, a)
    dist_b = stop_distribution(plan, b)
    if use_refined is None:
        supports = interval_supports(plan)
        use_refined = a < b and not np.any((supports > a) & (supports < b))
    if use_refined:
        l_ge_b, _, _, u_lt_b = _fw_event_probs(plan, dist_b, b, b)
        _, u_le_a, l_gt_a, _ = _fw_event_probs(plan, dist_a, a, a)
        upper = l_ge_b + u_le_a
        lower = l_gt_a + u_lt_b
        return lower, upper
    # generic form: upper conditions the L event on b and the U event on a;
    # the lower bound swaps the endpoint each event is measured at
    l_ge_a_at_b, u_le_a_at_b, _, _ = _fw_event_probs(plan, dist_b, a, a)
    l_ge_b_at_a, u_le_b_at_a, _, _ = _fw_event_probs(plan, dist_a, b, b)
    upper = l_ge_a_at_b + u_le_b_at_a
    lower = l_ge_b_at_a + u_le_a_at_b
    return lower, upper


@dataclass
class TuneResult:
    success: bool
    zeta: float
    certificate: CoverageCertificate | None
    message: str = ""


def tune_zeta(
    spec: plans.PrecisionSpec,
    rel_tol: float = 1e-3,
    jobs: int = 1,
    branch_and_bound: bool = False,
) -> TuneResult:
    """Largest certifiable confidence multiplier, by bisection in log scale.

    Rebuilds the plan at every probe because the stage grids depend on
    zeta.  With branch_and_bound=True (fixed-width schemes only) validity
    additionally requires the interval miss probability to certify below
    delta over all of (0, 1), using the endpoint bounds between adjacent
    support points.
    """
    if spec.kind not in _CONDITION_QSET:
        raise ValueError(f"scheme {spec.kind!r} does not support exact certification")
    if branch_and_bound and spec.kind not in plans.FW_KINDS:
        raise ValueError("branch-and-bound tuning applies to fixed-width schemes")

    def is_valid(zeta: float) -> tuple[bool, CoverageCertificate | None]:
        try:
            plan = plans.build_plan(plans.with_zeta(spec, zeta))
            cert = certify(plan, jobs=jobs,
                           method="branch_and_bound" if branch_and_bound else "grid")
        except (plans.SpecError, ValueError):
            return False, None
        if not cert.valid:
            return False, cert
        if branch_and_bound:
            ok = _branch_and_bound_valid(plan)
            cert.details["branch_and_bound_ok"] = ok
            if not ok:
                return False, cert
        return True, cert

    probe = plans.build_plan(spec if spec.zeta is not None else plans.with_zeta(spec, 1.0e-3))
    lo = plans.default_zeta(probe.tau)
    ok, lo_cert = is_valid(lo)
    while not ok and lo > 1e-12:
        lo /= 10.0
        ok, lo_cert = is_valid(lo)
    if not ok:
        return TuneResult(False, float("nan"), lo_cert,
                          "no certifiable zeta found down to 1e-12")
    hi = min(0.999999 / spec.delta, 1.0)
    ok_hi, hi_cert = is_valid(hi)
    if ok_hi:
        return TuneResult(True, hi, hi_cert, "upper probe already certifies")
    while hi / lo > 1.0 + rel_tol:
        mid = math.sqrt(lo * hi)
        ok, cert = is_valid(mid)
        if ok:
            lo, lo_cert = mid, cert
        else:
            hi = mid
    return TuneResult(True, lo, lo_cert, "")


def _branch_and_bound_valid(
    plan: plans.SamplingPlan, width_floor: float = 1e-7, max_nodes: int = 10_000
) -> bool:
    """Certify miss probability <= delta over (0, 1) for a fixed-width plan."""
    supports = interval_supports(plan)
    interior = [s for s in supports if 0.0 < s < 1.0]
    for s in interior:
        if 1.0 - coverage(plan, s) > plan.delta:
            return False
    cuts = [0.0] + interior + [1.0]
    queue = [
        (cuts[i], cuts[i + 1]) for i in range(len(cuts) - 1) if cuts[i] < cuts[i + 1]
    ]
    nodes = 0
    while queue:
        a, b = queue.pop()
        nodes += 1
        if nodes > max_nodes:
            return False
        lo_p = max(a, 1e-9)
        hi_p = min(b, 1.0 - 1e-9)
        if lo_p >= hi_p:
            continue
        _, upper = coverage_bounds(plan, lo_p, hi_p, use_refined=True)
        if upper <= plan.delta:
            continue
        if hi_p - lo_p < width_floor:
            return False
        mid = 0.5 * (lo_p + hi_p)
        queue.append((lo_p, mid))
        queue.append((mid, hi_p))
    return True
