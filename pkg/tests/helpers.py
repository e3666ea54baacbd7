import dataclasses
import math

from seqest import plans


def toy_inverse_plan(stages=(2, 4), eps=0.5, delta=0.2, zeta=0.25):
    """Inverse plan with hand-chosen success targets; thresholds recomputed
    from the rule's formula so the plan stays internally consistent."""
    log_zd = math.log(zeta * delta)
    thresholds = tuple(
        1.0 + 2.0 * eps / (3.0 + eps)
        + 9.0 * eps**2 * g / (2.0 * (3.0 + eps) ** 2 * log_zd)
        for g in stages[:-1]
    )
    return plans.SamplingPlan(
        kind=plans.REL_INVERSE, stages=tuple(stages), tau=len(stages) - 1,
        zeta=zeta, delta=delta, eps=eps, z_thresholds=thresholds,
    )


def shrink_stages(plan, stages):
    """Copy of a plan with replaced stage sizes (rules only read sizes)."""
    return dataclasses.replace(plan, stages=tuple(stages))
