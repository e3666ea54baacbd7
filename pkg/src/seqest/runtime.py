"""Streaming estimation sessions.

A session consumes samples one at a time, evaluates its scheme's stopping
rule exactly at stage boundaries (sample-count boundaries for fixed-size
schemes, success-count targets for inverse sampling), and emits a report
with the point estimate and, for fixed-width schemes, the realized
confidence interval.  Sessions are plain serializable state so long runs
can be checkpointed and resumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import plans, rules
from .intervals import ConfidenceInterval, interval_bounds

RUNNING = "running"
STOPPED = "stopped"
EXHAUSTED = "exhausted"  # budget ran out before the rule fired

_BINARY_KINDS = (
    plans.ABS, plans.MIXED, plans.REL_INVERSE, plans.REL_FIXED,
) + plans.FW_KINDS


class SessionError(RuntimeError):
    pass


class SampleRangeError(ValueError):
    """A fed sample falls outside the scheme's declared range."""


@dataclass
class EstimationReport:
    kind: str
    point_estimate: float
    terminal_sample_size: int
    terminal_stage: int
    certified: bool
    interval: ConfidenceInterval | None = None
    spec: dict = field(default_factory=dict)


def link_transform(z: float, u: float) -> int:
    """Bernoulli reduction of a bounded sample: indicator of z >= u.

    With u drawn uniformly on [0, 1] independently of z, the indicator's
    mean equals the mean of z, so any binomial scheme applies downstream.
    """
    if not 0.0 <= z <= 1.0:
        raise SampleRangeError("z must lie in [0, 1]")
    if not 0.0 <= u <= 1.0:
        raise SampleRangeError("u must lie in [0, 1]")
    return 1 if z >= u else 0


@dataclass
class EstimationSession:
    plan: plans.SamplingPlan
    budget: int | None = None
    status: str = RUNNING
    count: int = 0
    stat_sum: float = 0.0   # success count, or normalized value sum
    stage_index: int = 1    # next stage whose boundary will be evaluated
    trajectory: list = field(default_factory=list)

    # -- feeding ----------------------------------------------------------

    def feed(self, sample: float) -> str:
        """Consume one sample; returns the session status afterwards."""
        if self.status != RUNNING:
            raise SessionError(f"cannot feed a {self.status} session")
        value = self._validate(sample)
        self.count += 1
        self.stat_sum += value
        kind = self.plan.kind
        if kind == plans.REL_INVERSE:
            if value == 1.0 and self.stat_sum == self.plan.stages[self.stage_index - 1]:
                self._evaluate(int(self.stat_sum), self.count)
        elif kind == plans.REL_FIXED:
            if self.count == plans.rel_fixed_stage_size(self.plan, self.stage_index):
                self._evaluate_open_ended()
        else:
            if self.count == self.plan.stages[self.stage_index - 1]:
                self._evaluate_fixed()
        if self.status == RUNNING and self.budget is not None and self.count >= self.budget:
            self.status = EXHAUSTED
        return self.status

    def _validate(self, sample: float) -> float:
        kind = self.plan.kind
        if kind in _BINARY_KINDS:
            if sample not in (0, 1, 0.0, 1.0):
                raise SampleRangeError("binomial schemes need samples in {0, 1}")
            return float(sample)
        if kind == plans.GENERAL_MIXED:
            a, b = self.plan.range_lo, self.plan.range_hi
            if not a <= sample <= b:
                raise SampleRangeError(f"sample outside [{a}, {b}]")
            return (float(sample) - a) / (b - a)
        if not 0.0 <= sample <= 1.0:
            raise SampleRangeError("bounded-mean schemes need samples in [0, 1]")
        return float(sample)

    def _evaluate_fixed(self) -> None:
        kind = self.plan.kind
        if kind in plans.BOUNDED_KINDS:
            mean = self.stat_sum / self.count
            if kind == plans.GENERAL_MIXED:
                a, b = self.plan.range_lo, self.plan.range_hi
                mean = a + (b - a) * mean
            stat = mean
        else:
            stat = int(round(self.stat_sum))
        self._evaluate(stat, None)

    def _evaluate(self, stat, sample_count) -> None:
        if self.plan.kind == plans.REL_INVERSE:
            stop = rules.decide_rel_inverse(self.plan, self.stage_index, sample_count)
        else:
            stop = rules.decide(self.plan, rules.StageObservation(self.stage_index, stat))
        self.trajectory.append(
            {"stage": self.stage_index, "n": self.count, "sum": self.stat_sum, "stop": stop}
        )
        if stop:
            self.status = STOPPED
        else:
            if (
                self.plan.kind != plans.REL_FIXED
                and self.stage_index >= self.plan.num_stages
            ):
                # unreachable for the shipped rules: the final stage always stops
                raise SessionError("final stage refused to stop")
            self.stage_index += 1

    def _evaluate_open_ended(self) -> None:
        n_ell = plans.rel_fixed_stage_size(self.plan, self.stage_index)
        d_ell = rules.delta_schedule(self.plan.delta, self.plan.tau_free, self.stage_index)
        stop = rules.decide_rel_fixed(
            self.plan.eps, self.plan.zeta, d_ell, n_ell, int(round(self.stat_sum))
        )
        self.trajectory.append(
            {"stage": self.stage_index, "n": self.count, "sum": self.stat_sum, "stop": stop}
        )
        if stop:
            self.status = STOPPED
        else:
            self.stage_index += 1

    # -- reporting --------------------------------------------------------

    def report(self) -> EstimationReport:
        if self.status == RUNNING:
            raise SessionError("session is still running")
        kind = self.plan.kind
        mean = self.stat_sum / self.count
        if kind == plans.GENERAL_MIXED:
            a, b = self.plan.range_lo, self.plan.range_hi
            mean = a + (b - a) * mean
        interval = None
        if kind in plans.FW_KINDS and self.status == STOPPED:
            interval = interval_bounds(
                rules.interval_kind_for(self.plan),
                self.count,
                int(round(self.stat_sum)),
                self.plan.zeta * self.plan.delta,
            )
        return EstimationReport(
            kind=kind,
            point_estimate=mean,
            terminal_sample_size=self.count,
            terminal_stage=self.stage_index,
            certified=self.status == STOPPED,
            interval=interval,
            spec=plans.plan_as_dict(self.plan),
        )

    # -- checkpointing ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "plan": plans.plan_as_dict(self.plan),
            "budget": self.budget,
            "status": self.status,
            "count": self.count,
            "stat_sum": self.stat_sum,
            "stage_index": self.stage_index,
            "trajectory": self.trajectory,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EstimationSession":
        return cls(
            plan=plans.plan_from_dict(data["plan"]),
            budget=data.get("budget"),
            status=data["status"],
            count=int(data["count"]),
            stat_sum=float(data["stat_sum"]),
            stage_index=int(data["stage_index"]),
            trajectory=list(data.get("trajectory", [])),
        )


def run_stream(session: EstimationSession, stream) -> EstimationSession:
    """Feed samples until the rule fires, the budget runs out, or the
    stream ends."""
    for sample in stream:
        session.feed(sample)
        if session.status != RUNNING:
            break
    return session


def run_open_ended(
    spec: plans.PrecisionSpec, stream, max_samples: int
) -> EstimationReport:
    """Run the open-ended relative-error scheme over a sample stream.

    Exhausting max_samples before the rule fires yields a non-certified
    report on whatever was seen.
    """
    plan = plans.build_plan(spec)
    if plan.kind != plans.REL_FIXED:
        raise ValueError("open-ended runs use the rel_fixed scheme")
    session = EstimationSession(plan, budget=max_samples)
    run_stream(session, stream)
    if session.status == RUNNING:
        session.status = EXHAUSTED
    return session.report()
