import pytest

from seqest import plans


@pytest.fixture(scope="session")
def abs_plan_example():
    """eps=0.1, delta=0.05, rho=1, zeta=0.125 -> stages 64,101,160,254."""
    return plans.build_plan(
        plans.PrecisionSpec(kind="abs", eps=0.1, delta=0.05, rho=1.0, zeta=0.125)
    )


@pytest.fixture(scope="session")
def abs_plan_default():
    return plans.build_plan(plans.PrecisionSpec(kind="abs", eps=0.1, delta=0.05, rho=1.0))


@pytest.fixture(scope="session")
def mixed_plan_std():
    return plans.build_plan(
        plans.PrecisionSpec(kind="mixed", eps_a=0.05, eps_r=0.2, delta=0.05, rho=1.0)
    )


@pytest.fixture(scope="session")
def relinv_plan_std():
    return plans.build_plan(
        plans.PrecisionSpec(kind="rel_inverse", eps=0.2, delta=0.05, rho=1.0)
    )


@pytest.fixture(scope="session")
def fw_plans():
    return {
        kind: plans.build_plan(
            plans.PrecisionSpec(kind=kind, eps=0.1, delta=0.05, rho=1.0)
        )
        for kind in plans.FW_KINDS
    }


@pytest.fixture(scope="session")
def tiny_abs_plan():
    """Two small stages, handy for exhaustive enumeration."""
    plan = plans.build_plan(
        plans.PrecisionSpec(kind="abs", eps=0.3, delta=0.3, rho=1.0, zeta=0.3)
    )
    assert plan.stages[-1] <= 16
    return plan


@pytest.fixture()
def make_toy_inverse():
    from helpers import toy_inverse_plan

    return toy_inverse_plan


# Deterministic example generation: identical runs explore identical cases.
from hypothesis import settings as _hyp_settings

_hyp_settings.register_profile("deterministic", derandomize=True, deadline=None)
_hyp_settings.load_profile("deterministic")
