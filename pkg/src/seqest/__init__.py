"""Multistage estimation of binomial proportions and bounded-variable means
with rigorously guaranteed precision and confidence."""

from .intervals import (
    ConfidenceInterval,
    chernoff_hoeffding_bounds,
    clopper_pearson_bounds,
    massart_bounds,
)
from .plans import PrecisionSpec, SamplingPlan, SpecError, build_plan, default_zeta
from .engine import (
    CoverageCertificate,
    StageStopDistribution,
    certify,
    coverage,
    coverage_bounds,
    stop_distribution,
    tune_zeta,
)
from .runtime import EstimationReport, EstimationSession, link_transform, run_open_ended
from .sim import SimConfig, SimReport, Truth, lemma_event_check, simulate, simulate_link

__version__ = "0.1.0"

__all__ = [
    "ConfidenceInterval",
    "CoverageCertificate",
    "EstimationReport",
    "EstimationSession",
    "PrecisionSpec",
    "SamplingPlan",
    "SimConfig",
    "SimReport",
    "SpecError",
    "StageStopDistribution",
    "Truth",
    "build_plan",
    "certify",
    "chernoff_hoeffding_bounds",
    "clopper_pearson_bounds",
    "coverage",
    "coverage_bounds",
    "default_zeta",
    "lemma_event_check",
    "link_transform",
    "massart_bounds",
    "run_open_ended",
    "simulate",
    "simulate_link",
    "stop_distribution",
    "tune_zeta",
]
