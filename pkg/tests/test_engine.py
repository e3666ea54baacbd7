import dataclasses
import math
from fractions import Fraction

import numpy as np
import pytest

from seqest import engine, plans, rules
from exhaustive import enumerate_fixed, enumerate_inverse
from helpers import shrink_stages


class TestFixedSizeDp:
    def test_single_stage_is_binomial(self, tiny_abs_plan):
        plan = shrink_stages(tiny_abs_plan, (10,))
        dist = engine.stop_distribution(plan, 0.3)
        from seqest.distributions import binom_pmf_vector

        # the last stage always stops, so the stop law is the plain binomial
        np.testing.assert_allclose(dist.stop[0], binom_pmf_vector(10, 0.3), atol=1e-15)
        assert dist.unstopped_mass == 0.0

    def test_synthetic_two_stage_rule(self):
        # stop at stage 1 iff k in {0, 2}; p = 1/2
        tables = (np.array([True, False, True]), np.ones(5, dtype=bool))
        dist = engine.fixed_size_stop_distribution((2, 4), tables, 0.5)
        assert dist.stop[0][0] == pytest.approx(0.25, abs=1e-15)
        assert dist.stop[0][2] == pytest.approx(0.25, abs=1e-15)
        assert sum(dist.stop[0]) == pytest.approx(0.5, abs=1e-15)
        # surviving k=1 mass convolved with Binomial(2, 1/2)
        np.testing.assert_allclose(
            dist.stop[1], [0.0, 0.125, 0.25, 0.125, 0.0], atol=1e-15
        )
        assert dist.expected_sample_size == pytest.approx(0.5 * 2 + 0.5 * 4)

    def test_matches_exhaustive_enumeration(self, tiny_abs_plan):
        tables = engine.decision_tables(tiny_abs_plan)
        for p in (Fraction(1, 10), Fraction(1, 2), Fraction(9, 10)):
            dist = engine.stop_distribution(tiny_abs_plan, float(p))
            expect, unstopped = enumerate_fixed(tiny_abs_plan.stages, tables, p)
            for (ell, k), mass in expect.items():
                assert dist.stop[ell - 1][k] == pytest.approx(float(mass), abs=1e-13)
            assert dist.unstopped_mass == pytest.approx(float(unstopped), abs=1e-13)

    def test_mass_conservation_and_monotone_survivors(self, abs_plan_example):
        for p in (0.05, 0.3, 0.5, 0.77):
            dist = engine.stop_distribution(abs_plan_example, p)
            assert dist.total_stop_mass + dist.truncation_error == pytest.approx(1.0, abs=1e-9)
            surv = dist.survivor_in
            assert all(a >= b - 1e-12 for a, b in zip(surv, surv[1:]))
            assert dist.unstopped_mass == pytest.approx(0.0, abs=1e-12)


class TestInverseDp:
    def test_matches_recursion(self, make_toy_inverse):
        plan = make_toy_inverse(stages=(2, 4))
        cutoffs = engine._inverse_stop_cutoffs(plan)
        cap = 32
        for p in (Fraction(1, 4), Fraction(1, 2), Fraction(4, 5)):
            dist = engine.stop_distribution(plan, float(p), budget=cap, tol=0.0)
            expect, truncated = enumerate_inverse(plan.stages, cutoffs, p, cap)
            for (ell, t), mass in expect.items():
                off = dist.stat_offset[ell - 1]
                idx = t - off
                got = dist.stop[ell - 1][idx] if 0 <= idx < dist.stop[ell - 1].size else 0.0
                assert got == pytest.approx(float(mass), abs=1e-13), (ell, t)
            assert dist.truncation_error == pytest.approx(float(truncated), abs=1e-13)

    def test_truncation_bound_recorded(self, relinv_plan_std):
        dist = engine.stop_distribution(relinv_plan_std, 0.4)
        assert 0.0 <= dist.truncation_error < 1e-11
        assert dist.total_stop_mass + dist.truncation_error == pytest.approx(1.0, abs=1e-9)

    def test_needs_open_p(self, relinv_plan_std):
        with pytest.raises(ValueError):
            engine.stop_distribution(relinv_plan_std, 0.0)


class TestOpenEndedDp:
    def test_stages_appended_until_mass_exhausted(self):
        plan = plans.build_plan(
            plans.PrecisionSpec(kind="rel_fixed", eps=0.3, delta=0.1, tau_free=2, n1=8)
        )
        dist = engine.stop_distribution(plan, 0.4)
        assert dist.total_stop_mass > 1 - 1e-9
        assert dist.truncation_error < 1e-12
        assert all(a < b for a, b in zip(dist.stages, dist.stages[1:]))


class TestCoverage:
    def test_single_stage_example(self, tiny_abs_plan):
        plan = dataclasses.replace(shrink_stages(tiny_abs_plan, (10,)), eps=0.2)
        assert engine.coverage(plan, Fraction(1, 2)) == pytest.approx(672 / 1024, abs=1e-12)

    def test_near_zero_truth(self, abs_plan_example):
        assert engine.coverage(abs_plan_example, Fraction(1, 10**6)) > 0.999999

    def test_partition_with_strict_error_events(self, abs_plan_example):
        eps = engine.decimal_fraction(abs_plan_example.eps)
        for p in (Fraction(1, 4), Fraction(1, 2), Fraction(13, 20)):
            dist = engine.stop_distribution(abs_plan_example, float(p))
            cov = engine.coverage(abs_plan_example, p, dist)
            miss = 0.0
            for idx, arr in enumerate(dist.stop):
                n = abs_plan_example.stages[idx]
                for k in np.nonzero(arr)[0]:
                    if abs(Fraction(int(k), n) - p) >= eps:
                        miss += arr[k]
            assert cov + miss == pytest.approx(1.0, abs=1e-10)

    def test_symmetric_plan_symmetric_errors(self, abs_plan_example):
        sums = engine.error_sums(abs_plan_example, Fraction(1, 2))
        assert sum(sums["over_abs"]) == pytest.approx(sum(sums["under_abs"]), rel=1e-9)

    def test_empty_classifier_sums_zero(self, abs_plan_example):
        dist = engine.stop_distribution(abs_plan_example, 0.5)
        nothing = engine.StopEvent(
            "nothing", tuple(None for _ in abs_plan_example.stages)
        )
        assert engine.event_sums(dist, nothing) == [0.0] * abs_plan_example.num_stages


class TestQSets:
    def test_abs_structure(self, abs_plan_example):
        qs = engine.build_qsets(abs_plan_example)
        bound = sum(n + 1 for n in abs_plan_example.stages) + 1
        for name in ("plus", "minus"):
            vals = qs[name].values()
            assert len(vals) <= bound
            assert all(0 < v <= Fraction(1, 2) for v in vals)
            assert vals == sorted(vals)
            assert Fraction(1, 2) in vals

    def test_abs_minus_smallest_element(self, abs_plan_example):
        qs = engine.build_qsets(abs_plan_example)
        eps = engine.decimal_fraction(abs_plan_example.eps)
        candidates = []
        for n in abs_plan_example.stages:
            for k in range(n + 1):
                v = Fraction(k, n) - eps
                if 0 < v < Fraction(1, 2):
                    candidates.append(v)
        assert min(qs["minus"].values()) == min(candidates)

    def test_fw_sets_are_interval_images(self, fw_plans):
        plan = fw_plans["fw_cp"]
        qs = engine.build_qsets(plan)
        lows, _ = engine.fw_bound_tables(plan)
        vals = set(qs["lower"].values())
        for k in range(plan.stages[0] + 1):
            v = float(lows[0][k])
            if 0.0 < v < 1.0:
                assert v in vals
        assert all(0.0 < v < 1.0 for v in qs["lower"].values())

    def test_mixed_sets_anchor(self, mixed_plan_std):
        qs = engine.build_qsets(mixed_plan_std)
        p_star = Fraction(1, 4)  # 0.05 / 0.2
        assert p_star in qs["abs_plus"].values()
        assert p_star in qs["abs_minus"].values()
        assert all(v > p_star for v in qs["rel_plus"].values())


class TestCertify:
    def test_default_zeta_certifies_abs(self, abs_plan_default):
        cert = engine.certify(abs_plan_default)
        assert cert.valid
        assert cert.worst_risk < cert.threshold

    def test_zeta_delta_product_guard(self):
        plan = plans.build_plan(
            plans.PrecisionSpec(kind="abs", eps=0.2, delta=0.1, zeta=2.0)
        )
        bad = dataclasses.replace(plan, zeta=10.0)
        with pytest.raises(ValueError):
            engine.certify(bad)

    def test_toy_certificate_sums_match_enumeration(self, tiny_abs_plan):
        cert = engine.certify(tiny_abs_plan)
        tables = engine.decision_tables(tiny_abs_plan)
        eps = engine.decimal_fraction(tiny_abs_plan.eps)
        checked = 0
        for condition, p_float, total in cert.point_totals[:40]:
            p = Fraction(p_float).limit_denominator(10**12)
            expect, _ = enumerate_fixed(tiny_abs_plan.stages, tables, p)
            brute = Fraction(0)
            for (ell, k), mass in expect.items():
                n = tiny_abs_plan.stages[ell - 1]
                frac = Fraction(k, n)
                if condition == "over_abs" and frac >= p + eps:
                    brute += mass
                if condition == "under_abs" and frac <= p - eps:
                    brute += mass
            assert total == pytest.approx(float(brute), abs=1e-12)
            checked += 1
        assert checked > 0

    def test_mixed_toy_certificate_sums_match_enumeration(self):
        plan = plans.build_plan(
            plans.PrecisionSpec(kind="mixed", eps_a=0.3, eps_r=0.85, delta=0.3, rho=3.0)
        )
        assert plan.stages[-1] <= 16
        cert = engine.certify(plan)
        tables = engine.decision_tables(plan)
        ea = engine.decimal_fraction(0.3)
        er = engine.decimal_fraction(0.85)
        predicates = {
            "over_abs": lambda frac, p: frac >= p + ea,
            "under_abs": lambda frac, p: frac <= p - ea,
            "over_rel": lambda frac, p: frac >= p * (1 + er),
            "under_rel": lambda frac, p: frac <= p * (1 - er),
        }
        for condition, p_float, total in cert.point_totals:
            p = Fraction(p_float).limit_denominator(10**12)
            expect, _ = enumerate_fixed(plan.stages, tables, p)
            brute = sum(
                mass
                for (ell, k), mass in expect.items()
                if predicates[condition](Fraction(k, plan.stages[ell - 1]), p)
            )
            assert total == pytest.approx(float(brute), abs=1e-12), (condition, p_float)

    def test_parallel_matches_serial(self, tiny_abs_plan):
        c1 = engine.certify(tiny_abs_plan, jobs=1)
        c2 = engine.certify(tiny_abs_plan, jobs=2)
        assert c1.point_totals == c2.point_totals

    def test_rel_inverse_side_conditions_present(self, relinv_plan_std):
        cert = engine.certify(relinv_plan_std)
        assert cert.valid
        assert cert.details["g_ok"] and cert.details["cona_ok"]
        assert 0.0 < cert.details["p_star"] < relinv_plan_std.z_thresholds[-1]


class TestSwitchPointSolver:
    def test_unverifiable_reported(self, make_toy_inverse):
        # thresholds at or above 1 leave no open interval
        plan = make_toy_inverse(stages=(2, 3), eps=0.5, delta=0.2, zeta=0.25)
        broken = dataclasses.replace(plan, z_thresholds=(1.5,))
        with pytest.raises(engine.CertificationUnverifiable):
            engine.solve_rel_pstar(broken)

    def test_root_satisfies_equation(self, relinv_plan_std):
        from seqest.kernels import inverse_sampling_tail_bound, massart_exponent_inverse

        p_star = engine.solve_rel_pstar(relinv_plan_std)
        total = inverse_sampling_tail_bound(0.2, relinv_plan_std.stages[-1])
        for gamma, z in zip(relinv_plan_std.stages[:-1], relinv_plan_std.z_thresholds):
            total += math.exp(gamma * massart_exponent_inverse(z, p_star))
        assert total == pytest.approx(relinv_plan_std.delta, abs=1e-9)


class TestCoverageBounds:
    def test_degenerate_interval_upper_dominates(self, fw_plans):
        plan = fw_plans["fw_massart"]
        for p in (0.3, 0.5):
            lo, up = engine.coverage_bounds(plan, p, p)
            miss = 1.0 - engine.coverage(plan, p)
            assert up >= miss - 1e-12
            assert lo <= miss + 1e-12

    def test_sandwich_on_narrow_interval(self, fw_plans):
        plan = fw_plans["fw_massart"]
        a, b = 0.48, 0.4805
        lo, up = engine.coverage_bounds(plan, a, b)
        for p in np.linspace(a, b, 5):
            miss = 1.0 - engine.coverage(plan, float(p))
            assert lo - 1e-12 <= miss <= up + 1e-12

    def test_refined_tighter_in_support_gap(self, fw_plans):
        plan = fw_plans["fw_massart"]
        supports = engine.interval_supports(plan)
        interior = supports[(supports > 0.2) & (supports < 0.8)]
        gaps = np.diff(interior)
        idx = int(np.argmax(gaps))
        a = float(interior[idx]) + 1e-12
        b = float(interior[idx + 1]) - 1e-12
        lo_r, up_r = engine.coverage_bounds(plan, a, b, use_refined=True)
        lo_g, up_g = engine.coverage_bounds(plan, a, b, use_refined=False)
        assert up_r <= up_g + 1e-12
        assert lo_r >= lo_g - 1e-12
        for p in np.linspace(a, b, 5):
            miss = 1.0 - engine.coverage(plan, float(p))
            assert lo_r - 1e-12 <= miss <= up_r + 1e-12

    def test_domain_validation(self, fw_plans):
        with pytest.raises(ValueError):
            engine.coverage_bounds(fw_plans["fw_cp"], 0.0, 0.5)


@pytest.fixture(scope="module")
def toy_spec():
    return plans.PrecisionSpec(kind="abs", eps=0.3, delta=0.2, rho=1.0)


class TestTuneZeta:

    def test_tuned_at_least_default(self, toy_spec):
        res = engine.tune_zeta(toy_spec, rel_tol=1e-3)
        assert res.success
        plan = plans.build_plan(toy_spec)
        assert res.zeta >= plans.default_zeta(plan.tau)

    def test_recertifies_and_boundary(self, toy_spec):
        res = engine.tune_zeta(toy_spec, rel_tol=1e-3)
        cert = engine.certify(plans.build_plan(plans.with_zeta(toy_spec, res.zeta)))
        assert cert.valid
        hi_cap = min(0.999999 / toy_spec.delta, 1.0)
        if res.zeta < hi_cap * 0.99:
            above = plans.build_plan(plans.with_zeta(toy_spec, res.zeta * 1.01))
            assert not engine.certify(above).valid

    def test_matches_dense_grid_search(self, toy_spec):
        res = engine.tune_zeta(toy_spec, rel_tol=1e-3)
        hi_cap = min(0.999999 / toy_spec.delta, 1.0)
        if res.zeta >= hi_cap * 0.999:
            # capped at the domain limit; the grid search cannot exceed it either
            assert engine.certify(plans.build_plan(plans.with_zeta(toy_spec, hi_cap))).valid
            return
        # geometric grid at 1e-3 relative spacing around the reported optimum
        for mult in (0.999, 0.998):
            z = res.zeta * mult
            assert engine.certify(plans.build_plan(plans.with_zeta(toy_spec, z))).valid
        z_above = res.zeta * 1.002
        assert not engine.certify(plans.build_plan(plans.with_zeta(toy_spec, z_above))).valid

    def test_branch_and_bound_mode(self):
        spec = plans.PrecisionSpec(kind="fw_massart", eps=0.2, delta=0.1, rho=2.0)
        res = engine.tune_zeta(spec, rel_tol=3e-2, branch_and_bound=True)
        assert res.success
        plan = plans.build_plan(plans.with_zeta(spec, res.zeta))
        assert engine._branch_and_bound_valid(plan)


def test_risk_bound_from_union_argument(abs_plan_example):
    # total failure probability stays below 2*(tau+1)*zeta*delta everywhere tested
    bound = 2 * (abs_plan_example.tau + 1) * abs_plan_example.zeta * abs_plan_example.delta
    for p in (0.08, 0.25, 0.5, 0.62, 0.9):
        risk = 1.0 - engine.coverage(abs_plan_example, engine.decimal_fraction(p))
        assert risk <= bound + 1e-12
