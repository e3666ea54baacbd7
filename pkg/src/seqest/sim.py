"""Monte Carlo verification harness.

Replications are partitioned into fixed-size blocks; block i draws from a
counter-based Philox generator keyed by (seed, i), so results are
bit-identical regardless of execution order or worker count.  Within a
block everything is vectorized over replications.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import engine, plans, rules
from .kernels import inverse_binomial_kl, massart_exponent

BLOCK_SIZE = 4096


class TruthError(ValueError):
    pass


@dataclass(frozen=True)
class Truth:
    """Sampling law with a closed-form mean, so guarantees are checkable."""

    kind: str               # bernoulli | beta | uniform | discrete | constant
    params: tuple = ()

    def mean(self) -> float:
        if self.kind == "bernoulli":
            return float(self.params[0])
        if self.kind == "beta":
            a, b = self.params
            return a / (a + b)
        if self.kind == "uniform":
            lo, hi = self.params
            return 0.5 * (lo + hi)
        if self.kind == "discrete":
            values, probs = self.params
            return float(np.dot(values, probs))
        if self.kind == "constant":
            return float(self.params[0])
        raise TruthError(f"unknown truth kind {self.kind!r}")

    def support(self) -> tuple[float, float]:
        if self.kind == "bernoulli":
            return 0.0, 1.0
        if self.kind == "beta":
            return 0.0, 1.0
        if self.kind == "uniform":
            return float(self.params[0]), float(self.params[1])
        if self.kind == "discrete":
            values, _ = self.params
            return float(min(values)), float(max(values))
        if self.kind == "constant":
            c = float(self.params[0])
            return c, c
        raise TruthError(f"unknown truth kind {self.kind!r}")

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.kind == "bernoulli":
            return (rng.random(shape) < self.params[0]).astype(float)
        if self.kind == "beta":
            return rng.beta(self.params[0], self.params[1], size=shape)
        if self.kind == "uniform":
            lo, hi = self.params
            return rng.uniform(lo, hi, size=shape)
        if self.kind == "discrete":
            values, probs = self.params
            idx = rng.choice(len(values), size=shape, p=list(probs))
            return np.asarray(values, dtype=float)[idx]
        if self.kind == "constant":
            return np.full(shape, float(self.params[0]))
        raise TruthError(f"unknown truth kind {self.kind!r}")


def parse_truth(text: str) -> Truth:
    """Parse 'bernoulli:0.3', 'beta:2,2', 'uniform:-1,1', 'constant:0.4',
    'discrete:v1@p1,v2@p2,...'."""
    kind, _, rest = text.partition(":")
    kind = kind.strip()
    if kind == "discrete":
        values, probs = [], []
        for part in rest.split(","):
            v, _, w = part.partition("@")
            values.append(float(v))
            probs.append(float(w))
        return Truth("discrete", (tuple(values), tuple(probs)))
    params = tuple(float(v) for v in rest.split(",")) if rest else ()
    return Truth(kind, params)


@dataclass(frozen=True)
class SimConfig:
    plan: plans.SamplingPlan
    truth: Truth
    replications: int
    seed: int
    budget: int | None = None
    use_link: bool = False

    def validate(self) -> None:
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.use_link and self.plan.kind in plans.BOUNDED_KINDS:
            raise ValueError("the Bernoulli reduction feeds binomial schemes only")
        lo, hi = self.truth.support()
        if self.plan.kind == plans.GENERAL_MIXED:
            if lo < self.plan.range_lo or hi > self.plan.range_hi:
                raise TruthError("truth support exceeds the scheme's range")
        elif self.use_link or self.plan.kind in plans.BOUNDED_KINDS:
            if lo < 0.0 or hi > 1.0:
                raise TruthError("truth support must lie within [0, 1]")
        else:
            if self.truth.kind != "bernoulli":
                raise TruthError("binomial schemes need a bernoulli truth (or use_link)")
        if self.plan.kind in (plans.REL_INVERSE, plans.REL_FIXED) and self.budget is None:
            raise ValueError("open-ended schemes need an explicit sample budget")


@dataclass
class SimReport:
    replications: int
    seed: int
    coverage: float
    coverage_se: float
    n_mean: float
    n_quantiles: dict
    stage_freqs: list
    budget_exhausted_frac: float
    estimate_mean: float
    comparison: dict | None = None

    def as_rows(self) -> list[tuple[str, str]]:
        rows = [
            ("replications", str(self.replications)),
            ("seed", str(self.seed)),
            ("coverage", repr(self.coverage)),
            ("coverage_se", repr(self.coverage_se)),
            ("n_mean", repr(self.n_mean)),
            ("budget_exhausted_frac", repr(self.budget_exhausted_frac)),
            ("estimate_mean", repr(self.estimate_mean)),
        ]
        for q, v in self.n_quantiles.items():
            rows.append((f"n_q{q}", repr(v)))
        for i, f in enumerate(self.stage_freqs, start=1):
            rows.append((f"stage_freq_{i}", repr(f)))
        if self.comparison:
            for key, val in sorted(self.comparison.items()):
                rows.append((f"exact_{key}", repr(val)))
        return rows


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, block]))


def _block_sizes(total: int) -> list[int]:
    return [min(BLOCK_SIZE, total - i) for i in range(0, total, BLOCK_SIZE)]


def _success_mask(plan, estimates, truth_mean, certified):
    kind = plan.kind
    if kind in (plans.ABS, plans.BOUNDED_ABS):
        ok = np.abs(estimates - truth_mean) < plan.eps
    elif kind in (plans.MIXED, plans.BOUNDED_MIXED, plans.GENERAL_MIXED):
        ok = (np.abs(estimates - truth_mean) < plan.eps_a) | (
            np.abs(estimates - truth_mean) < plan.eps_r * abs(truth_mean)
        )
    elif kind in (plans.REL_INVERSE, plans.REL_FIXED):
        ok = np.abs(estimates / truth_mean - 1.0) <= plan.eps
    else:
        raise ValueError(f"no success criterion for kind {kind!r}")
    # replications that never stopped count against coverage
    return ok & certified


def _success_from_counts(plan, truth_mean, term_stage, term_stat, certified):
    """Success classification on the count lattice, matching the exact
    engine's boundary conventions.

    With Bernoulli samples the terminal statistic is an integer, so atoms
    can land exactly on a guarantee boundary; classifying them through
    float arithmetic can flip them (e.g. |1 - 0.9| < 0.1 holds in floats).
    """
    success = np.zeros(term_stage.shape, dtype=bool)
    if plan.kind in plans.FW_KINDS:
        lows, ups = engine.fw_bound_tables(plan)
        pm = float(truth_mean)
        for ell in range(1, plan.num_stages + 1):
            m = certified & (term_stage == ell)
            if not m.any():
                continue
            ks = term_stat[m].astype(np.int64)
            success[m] = (lows[ell - 1][ks] < pm) & (pm < ups[ell - 1][ks])
        return success
    if plan.kind == plans.REL_FIXED:
        p = engine.decimal_fraction(truth_mean)
        eps = engine.decimal_fraction(plan.eps)
        ranges = []
        for ell in range(1, int(term_stage.max(initial=0)) + 1):
            n = plans.rel_fixed_stage_size(plan, ell)
            lo = engine._frac_ceil((1 - eps) * p * n)
            hi = engine._frac_floor((1 + eps) * p * n)
            ranges.append((lo, hi) if lo <= hi else None)
    else:
        ranges = engine.success_event(plan, engine.decimal_fraction(truth_mean)).ranges
    for ell, rng in enumerate(ranges, start=1):
        m = certified & (term_stage == ell)
        if not m.any() or rng is None:
            continue
        stat = term_stat[m]
        success[m] = (stat >= rng[0]) & (stat <= rng[1])
    return success


def _simulate_block_fixed(plan, truth, rng, m, use_link, budget):
    """Fixed-size schemes: draw per-stage increments, stop via the rule.

    Increments are drawn for every replication at every stage, stopped or
    not, so the generator stream consumed by a block never depends on the
    stopping pattern.
    """
    stages = plan.stages
    # Count tables assume the statistic is a raw success count; that holds
    # for binomial draws except when a non-unit range rescales the mean.
    use_tables = (truth.kind == "bernoulli" or use_link) and not (
        plan.kind == plans.GENERAL_MIXED
        and (plan.range_lo, plan.range_hi) != (0.0, 1.0)
    )
    tables = engine.decision_tables(plan) if use_tables else None
    sums = np.zeros(m)
    active = np.ones(m, dtype=bool)
    term_stage = np.zeros(m, dtype=np.int64)
    term_n = np.zeros(m, dtype=np.int64)
    term_est = np.zeros(m)
    term_stat = np.zeros(m)
    prev_n = 0
    for ell, n in enumerate(stages, start=1):
        inc = n - prev_n
        if use_link:
            z = truth.sample(rng, (m, inc))
            u = rng.random((m, inc))
            sums += (z >= u).sum(axis=1)
        elif truth.kind == "bernoulli":
            sums += rng.binomial(inc, truth.params[0], size=m)
        else:
            draws = truth.sample(rng, (m, inc))
            sums += draws.sum(axis=1)
        prev_n = n
        if tables is not None:
            stop_now = active & tables[ell - 1][sums.astype(np.int64)]
        else:
            means = sums / n  # raw-scale means, already within the range
            dec = np.fromiter(
                (rules.decide(plan, rules.StageObservation(ell, r)) for r in means),
                dtype=bool, count=m,
            )
            stop_now = active & dec
        term_stage[stop_now] = ell
        term_n[stop_now] = n
        term_est[stop_now] = sums[stop_now] / n
        term_stat[stop_now] = sums[stop_now]
        active &= ~stop_now
    certified = term_stage > 0
    return term_stage, term_n, term_est, certified, term_stat


def _simulate_block_inverse(plan, truth, rng, m, budget):
    gammas = plan.stages
    p = truth.params[0]
    n_count = np.zeros(m, dtype=np.int64)
    active = np.ones(m, dtype=bool)
    term_stage = np.zeros(m, dtype=np.int64)
    term_n = np.zeros(m, dtype=np.int64)
    prev_g = 0
    for ell, gamma in enumerate(gammas, start=1):
        dg = gamma - prev_g
        extra = rng.negative_binomial(dg, p, size=m) + dg
        n_count = np.where(active, n_count + extra, n_count)
        prev_g = gamma
        over = active & (n_count > budget)
        active &= ~over  # budget exhausted mid-stage
        if ell == plan.num_stages:
            stop_now = active.copy()
        else:
            stop_now = active & (gamma / n_count >= plan.z_thresholds[ell - 1])
        term_stage[stop_now] = ell
        term_n[stop_now] = n_count[stop_now]
        active &= ~stop_now
        if not active.any():
            break
    certified = term_stage > 0
    gam_at_stop = np.where(certified, np.array(gammas)[np.maximum(term_stage - 1, 0)], 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        est = np.where(certified, gam_at_stop / np.maximum(term_n, 1), 0.0)
    return term_stage, term_n, est, certified, term_n.astype(float)


def _simulate_block_open(plan, truth, rng, m, budget):
    p = truth.params[0]
    sums = np.zeros(m, dtype=np.int64)
    active = np.ones(m, dtype=bool)
    term_stage = np.zeros(m, dtype=np.int64)
    term_n = np.zeros(m, dtype=np.int64)
    term_est = np.zeros(m)
    ell = 0
    prev_n = 0
    while active.any():
        ell += 1
        n = plans.rel_fixed_stage_size(plan, ell)
        if n > budget:
            break
        inc = rng.binomial(n - prev_n, p, size=m)
        sums = np.where(active, sums + inc, sums)
        prev_n = n
        d_ell = rules.delta_schedule(plan.delta, plan.tau_free, ell)
        thresh = rules.relative_stop_threshold(
            plan.eps, math.log(plan.zeta * d_ell), n
        )
        stop_now = active & (sums / n >= thresh)
        term_stage[stop_now] = ell
        term_n[stop_now] = n
        term_est[stop_now] = sums[stop_now] / n
        active &= ~stop_now
    certified = term_stage > 0
    return term_stage, term_n, term_est, certified, sums.astype(float)


def simulate(config: SimConfig, jobs: int = 1, trace_rows: list | None = None) -> SimReport:
    """Replicate the scheme under the configured truth.

    Reproducible for a given (seed, replications): block b of 4096
    replications always uses the Philox stream keyed (seed, b), so the
    result is independent of scheduling and of `jobs`.

    Passing a list as trace_rows appends one
    (replication, stage, n, estimate, certified, success) tuple per
    replication, in replication order.
    """
    config.validate()
    plan, truth = config.plan, config.truth
    sizes = _block_sizes(config.replications)

    def run_block(args):
        b, m = args
        rng = _block_rng(config.seed, b)
        if plan.kind == plans.REL_INVERSE:
            return _simulate_block_inverse(plan, truth, rng, m, config.budget)
        if plan.kind == plans.REL_FIXED:
            return _simulate_block_open(plan, truth, rng, m, config.budget)
        return _simulate_block_fixed(plan, truth, rng, m, config.use_link, config.budget)

    blocks = list(enumerate(sizes))
    if jobs > 1 and len(blocks) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(run_block, blocks))
    else:
        results = [run_block(bl) for bl in blocks]

    stage = np.concatenate([r[0] for r in results])
    n_term = np.concatenate([r[1] for r in results])
    est = np.concatenate([r[2] for r in results])
    cert = np.concatenate([r[3] for r in results])
    stat = np.concatenate([r[4] for r in results])

    truth_mean = truth.mean()
    count_based = truth.kind == "bernoulli" or config.use_link
    if count_based:
        success = _success_from_counts(plan, truth_mean, stage, stat, cert)
    else:
        success = _success_mask(plan, est, truth_mean, cert)
    if trace_rows is not None:
        for i in range(config.replications):
            trace_rows.append(
                (i, int(stage[i]), int(n_term[i]), float(est[i]),
                 bool(cert[i]), bool(success[i]))
            )
    reps = config.replications
    cov = float(success.sum()) / reps
    se = math.sqrt(max(cov * (1.0 - cov), 1e-300) / reps)
    stopped = cert
    n_stopped = n_term[stopped]
    max_stage = int(stage.max()) if stage.size else 0
    freqs = [float((stage == ell).sum()) / reps for ell in range(1, max_stage + 1)]
    quantiles = {}
    if n_stopped.size:
        for q in (0.1, 0.5, 0.9):
            quantiles[q] = float(np.quantile(n_stopped, q))
    return SimReport(
        replications=reps,
        seed=config.seed,
        coverage=cov,
        coverage_se=se,
        n_mean=float(n_stopped.mean()) if n_stopped.size else float("nan"),
        n_quantiles=quantiles,
        stage_freqs=freqs,
        budget_exhausted_frac=float((~cert).sum()) / reps,
        estimate_mean=float(est[stopped].mean()) if stopped.any() else float("nan"),
    )


def simulate_link(config: SimConfig, jobs: int = 1) -> SimReport:
    """Run a binomial scheme over the Bernoulli reduction of a bounded truth."""
    cfg = SimConfig(
        plan=config.plan, truth=config.truth, replications=config.replications,
        seed=config.seed, budget=config.budget, use_link=True,
    )
    return simulate(cfg, jobs=jobs)


def compare_with_exact(report: SimReport, plan: plans.SamplingPlan, truth: Truth) -> SimReport:
    """Attach the exact stopping-law quantities for a bernoulli truth."""
    if truth.kind != "bernoulli":
        raise TruthError("exact comparison requires a bernoulli truth")
    p = truth.params[0]
    dist = engine.stop_distribution(plan, p)
    from fractions import Fraction

    cov = engine.coverage(plan, Fraction(str(p)))
    comparison = {
        "coverage": cov,
        "expected_n": dist.expected_sample_size,
    }
    for ell, mass in enumerate(dist.stage_masses, start=1):
        comparison[f"stage_freq_{ell}"] = mass
    report.comparison = comparison
    return report


# ---------------------------------------------------------------------------
# Concentration-event spot checks


@dataclass
class LemmaCheck:
    frequency: float
    bound: float
    reps: int

    @property
    def slack(self) -> float:
        """Four binomial standard errors at the bound's level."""
        return 4.0 * math.sqrt(max(self.bound * (1.0 - min(self.bound, 1.0)), 1e-12) / self.reps)

    @property
    def holds(self) -> bool:
        return self.frequency <= self.bound + self.slack


def lemma_event_check(
    lemma: str,
    *,
    n: int | None = None,
    mu: float | None = None,
    alpha: float | None = None,
    z: float | None = None,
    gamma: int | None = None,
    reps: int = 100_000,
    seed: int = 0,
) -> LemmaCheck:
    """Empirical frequency of a concentration event against its stated bound.

    lemma identifiers:
      mean_tail       Pr{mean >= z} (z above mu) or Pr{mean <= z} (z below)
                      against exp(n * massart_exponent(z, mu))
      mean_upper      Pr{mean >= mu, exponent(mean, mu) <= ln(alpha)/n} <= alpha
      mean_lower      mirror event with mean <= mu
      inverse_upper   Pr{gamma/N >= mu, inverse_kl(gamma/N, mu) <= ln(alpha)/gamma} <= alpha
      inverse_lower   mirror event with gamma/N <= mu
    """
    rng = _block_rng(seed, 0)
    if lemma == "mean_tail":
        k = rng.binomial(n, mu, size=reps)
        if z >= mu:
            freq = float((k / n >= z).sum()) / reps
        else:
            freq = float((k / n <= z).sum()) / reps
        bound = math.exp(n * massart_exponent(z, mu))
        return LemmaCheck(freq, bound, reps)
    if lemma in ("mean_upper", "mean_lower"):
        if alpha >= 1.0:
            return LemmaCheck(0.0, alpha, reps)
        k = rng.binomial(n, mu, size=reps)
        means = k / n
        expo = massart_exponent(means, mu)
        target = math.log(alpha) / n
        if lemma == "mean_upper":
            event = (means >= mu) & (expo <= target)
        else:
            event = (means <= mu) & (expo <= target)
        return LemmaCheck(float(event.sum()) / reps, alpha, reps)
    if lemma in ("inverse_upper", "inverse_lower"):
        if alpha >= 1.0:
            return LemmaCheck(0.0, alpha, reps)
        n_draw = rng.negative_binomial(gamma, mu, size=reps) + gamma
        frac = gamma / n_draw
        kl = inverse_binomial_kl(frac, mu)
        target = math.log(alpha) / gamma
        if lemma == "inverse_upper":
            event = (frac >= mu) & (kl <= target)
        else:
            event = (frac <= mu) & (kl <= target)
        return LemmaCheck(float(event.sum()) / reps, alpha, reps)
    raise ValueError(f"unknown lemma id {lemma!r}")
