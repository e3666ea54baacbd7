import dataclasses
import itertools

import numpy as np
import pytest

from seqest import plans, runtime
from helpers import toy_inverse_plan


def bit_stream(seed, p, count=10**6):
    rng = np.random.default_rng(seed)
    return iter((rng.random(count) < p).astype(int).tolist())


class TestFeedBoundaries:
    def test_first_decision_at_first_boundary(self, abs_plan_example):
        sess = runtime.EstimationSession(abs_plan_example)
        for _ in range(63):
            sess.feed(0)
        assert sess.trajectory == []
        sess.feed(0)
        assert len(sess.trajectory) == 1
        assert sess.trajectory[0]["n"] == 64

    def test_inverse_decision_at_first_success(self):
        plan = toy_inverse_plan(stages=(1, 3), eps=0.5)
        sess = runtime.EstimationSession(plan)
        sess.feed(0)
        sess.feed(0)
        assert sess.trajectory == []
        sess.feed(1)
        assert len(sess.trajectory) == 1
        assert sess.trajectory[0]["n"] == 3

    def test_all_zero_inverse_stream_keeps_running(self):
        plan = toy_inverse_plan(stages=(1, 3), eps=0.5)
        sess = runtime.EstimationSession(plan)
        for _ in range(500):
            sess.feed(0)
        assert sess.status == runtime.RUNNING

    def test_inverse_budget_exhaustion(self):
        plan = toy_inverse_plan(stages=(1, 3), eps=0.5)
        sess = runtime.EstimationSession(plan, budget=100)
        for _ in range(100):
            sess.feed(0)
        assert sess.status == runtime.EXHAUSTED
        report = sess.report()
        assert not report.certified
        assert report.terminal_sample_size == 100


class TestValidationAndLifecycle:
    def test_binary_range(self, abs_plan_example):
        sess = runtime.EstimationSession(abs_plan_example)
        with pytest.raises(runtime.SampleRangeError):
            sess.feed(0.5)

    def test_bounded_range(self):
        plan = plans.build_plan(
            plans.PrecisionSpec(kind="bounded_abs", eps=0.2, delta=0.1, stages_s=2)
        )
        sess = runtime.EstimationSession(plan)
        with pytest.raises(runtime.SampleRangeError):
            sess.feed(1.5)

    def test_general_range(self):
        plan = plans.build_plan(
            plans.PrecisionSpec(
                kind="general_mixed", eps_a=0.2, eps_r=0.5, delta=0.2,
                stages_s=2, range_lo=-1.0, range_hi=1.0,
            )
        )
        sess = runtime.EstimationSession(plan)
        sess.feed(-0.7)
        with pytest.raises(runtime.SampleRangeError):
            sess.feed(-1.01)

    def test_feeding_stopped_session(self, abs_plan_example):
        sess = runtime.EstimationSession(abs_plan_example)
        runtime.run_stream(sess, bit_stream(0, 0.01))
        assert sess.status == runtime.STOPPED
        with pytest.raises(runtime.SessionError):
            sess.feed(1)

    def test_report_requires_not_running(self, abs_plan_example):
        sess = runtime.EstimationSession(abs_plan_example)
        sess.feed(1)
        with pytest.raises(runtime.SessionError):
            sess.report()


class TestReports:
    def test_estimate_uses_all_samples(self, abs_plan_example):
        sess = runtime.EstimationSession(abs_plan_example)
        runtime.run_stream(sess, bit_stream(3, 0.02))
        rep = sess.report()
        assert rep.point_estimate == pytest.approx(sess.stat_sum / sess.count)
        assert rep.terminal_sample_size == abs_plan_example.stages[rep.terminal_stage - 1]

    def test_fixed_width_interval_contract(self, fw_plans):
        for plan in fw_plans.values():
            sess = runtime.EstimationSession(plan)
            runtime.run_stream(sess, bit_stream(11, 0.35))
            rep = sess.report()
            assert rep.interval is not None
            assert rep.interval.width <= 2 * plan.eps + 1e-12
            assert rep.interval.lower <= rep.point_estimate <= rep.interval.upper

    def test_general_mixed_denormalization(self):
        plan = plans.build_plan(
            plans.PrecisionSpec(
                kind="general_mixed", eps_a=0.2, eps_r=0.5, delta=0.2,
                stages_s=2, range_lo=-1.0, range_hi=1.0,
            )
        )
        sess = runtime.EstimationSession(plan)
        n1 = plan.stages[0]
        for _ in range(n1):
            sess.feed(0.5)  # normalized 0.75
        assert sess.stat_sum / sess.count == pytest.approx(0.75, abs=1e-15)
        if sess.status == runtime.STOPPED:
            assert sess.report().point_estimate == pytest.approx(0.5, abs=1e-12)

    def test_normalization_round_trip(self):
        a, b = -3.5, 11.25
        for z in np.linspace(a, b, 17):
            norm = (z - a) / (b - a)
            back = a + (b - a) * norm
            assert back == pytest.approx(z, abs=1e-15 * max(1.0, abs(z)) * 10)


class TestDeterminismAndCheckpoint:
    def test_identical_streams_identical_reports(self, abs_plan_example):
        reports = []
        for _ in range(2):
            sess = runtime.EstimationSession(abs_plan_example)
            runtime.run_stream(sess, bit_stream(21, 0.4))
            reports.append(sess.report())
        assert reports[0] == reports[1]

    def test_checkpoint_resume_matches_uninterrupted(self, abs_plan_example):
        samples = list(itertools.islice(bit_stream(5, 0.03), 400))
        direct = runtime.EstimationSession(abs_plan_example)
        runtime.run_stream(direct, iter(samples))

        first = runtime.EstimationSession(abs_plan_example)
        runtime.run_stream(first, iter(samples[:50]))
        assert first.status == runtime.RUNNING
        resumed = runtime.EstimationSession.from_dict(first.to_dict())
        runtime.run_stream(resumed, iter(samples[50:]))
        assert resumed.report() == direct.report()
        assert resumed.count == direct.count


class TestLinkTransform:
    def test_trivial_values(self):
        assert runtime.link_transform(1.0, 0.3) == 1
        assert runtime.link_transform(1.0, 1.0) == 1
        assert runtime.link_transform(0.0, 0.5) == 0
        assert runtime.link_transform(0.0, 0.0) == 1

    def test_range_checks(self):
        with pytest.raises(runtime.SampleRangeError):
            runtime.link_transform(1.2, 0.5)
        with pytest.raises(runtime.SampleRangeError):
            runtime.link_transform(0.5, -0.1)


class TestOpenEnded:
    def test_stops_quickly_for_large_fraction(self):
        spec = plans.PrecisionSpec(kind="rel_fixed", eps=0.3, delta=0.1, tau_free=2, n1=8)
        rep = runtime.run_open_ended(spec, itertools.repeat(1), max_samples=10_000)
        assert rep.certified
        assert rep.terminal_stage >= 1
        assert rep.point_estimate == 1.0

    def test_budget_exhaustion_flagged(self):
        spec = plans.PrecisionSpec(kind="rel_fixed", eps=0.2, delta=0.05, tau_free=3, n1=10)
        rep = runtime.run_open_ended(spec, itertools.repeat(0), max_samples=500)
        assert not rep.certified

    def test_delta_schedule_echo(self):
        # stages past the full-budget horizon halve their confidence share
        spec = plans.PrecisionSpec(kind="rel_fixed", eps=0.3, delta=0.08, tau_free=2, n1=8)
        from seqest import rules

        assert rules.delta_schedule(spec.delta, 2, 4) == pytest.approx(spec.delta / 4)
        assert rules.delta_schedule(spec.delta, 2, 5) == pytest.approx(spec.delta / 8)

    def test_golden_stop_stage(self):
        spec = plans.PrecisionSpec(kind="rel_fixed", eps=0.2, delta=0.05, tau_free=3, n1=10)
        rep = runtime.run_open_ended(spec, bit_stream(12345, 0.5), max_samples=100_000)
        assert rep.certified
        # regression values captured from the first verified run
        assert rep.terminal_stage == 12
        assert rep.terminal_sample_size == 865
        assert rep.point_estimate == pytest.approx(0.530635838150289, rel=1e-12)
