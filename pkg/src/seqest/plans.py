"""Precision goals and the stage grids realizing them.

A PrecisionSpec captures what the user wants (error type, margins,
confidence, tuning knobs); build_plan turns it into an immutable
SamplingPlan holding the ascending stage grid of sample sizes (or success
targets for the inverse scheme) together with cached decision thresholds.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

from .kernels import massart_exponent

ABS = "abs"
MIXED = "mixed"
REL_INVERSE = "rel_inverse"
REL_FIXED = "rel_fixed"
FW_CP = "fw_cp"
FW_CH = "fw_ch"
FW_MASSART = "fw_massart"
BOUNDED_ABS = "bounded_abs"
BOUNDED_MIXED = "bounded_mixed"
GENERAL_MIXED = "general_mixed"

SCHEME_KINDS = (
    ABS,
    MIXED,
    REL_INVERSE,
    REL_FIXED,
    FW_CP,
    FW_CH,
    FW_MASSART,
    BOUNDED_ABS,
    BOUNDED_MIXED,
    GENERAL_MIXED,
)

FW_KINDS = (FW_CP, FW_CH, FW_MASSART)
BOUNDED_KINDS = (BOUNDED_ABS, BOUNDED_MIXED, GENERAL_MIXED)

# Fixed-size schemes whose sufficient statistic is the running success count.
FIXED_SIZE_KINDS = (ABS, MIXED, FW_CP, FW_CH, FW_MASSART) + BOUNDED_KINDS

_ZETA_MARGIN = 1.0 - 2.0**-20


class SpecError(ValueError):
    """A precision spec violates one of its scheme's constraints."""


def default_zeta(tau: int) -> float:
    """Largest default confidence-tuning multiplier, just inside 1/(2*(tau+1))."""
    if tau < 0:
        raise SpecError("tau must be nonnegative")
    return _ZETA_MARGIN / (2.0 * (tau + 1))


@dataclass(frozen=True)
class PrecisionSpec:
    kind: str
    eps: float | None = None
    eps_a: float | None = None
    eps_r: float | None = None
    delta: float = 0.05
    rho: float = 1.0
    zeta: float | None = None
    range_lo: float = 0.0
    range_hi: float = 1.0
    stages_s: int | None = None
    tau_free: int | None = None
    n1: int = 10
    growth: float = 1.5

    def validate(self) -> None:
        if self.kind not in SCHEME_KINDS:
            raise SpecError(f"unknown scheme kind: {self.kind!r}")
        if not 0.0 < self.delta < 1.0:
            raise SpecError("delta must lie in (0, 1)")
        if self.zeta is not None and self.zeta <= 0.0:
            raise SpecError("zeta must be positive")
        if self.kind in (ABS, MIXED, REL_INVERSE, REL_FIXED) + tuple(FW_KINDS):
            if self.rho <= 0.0:
                raise SpecError("rho must be positive")
        if self.kind == ABS:
            if self.eps is None or not 0.0 < self.eps < 0.5:
                raise SpecError("absolute error margin eps must lie in (0, 1/2)")
        elif self.kind == MIXED:
            if self.eps_a is None or not 0.0 < self.eps_a < 3.0 / 8.0:
                raise SpecError("eps_a must lie in (0, 3/8)")
            lo = 6.0 * self.eps_a / (3.0 - 2.0 * self.eps_a)
            if self.eps_r is None or not lo < self.eps_r < 1.0:
                raise SpecError(
                    "eps_r must lie in (6*eps_a/(3 - 2*eps_a), 1); got "
                    f"{self.eps_r!r} with lower limit {lo:.6g}"
                )
        elif self.kind in (REL_INVERSE, REL_FIXED):
            if self.eps is None or not 0.0 < self.eps < 1.0:
                raise SpecError("relative error margin eps must lie in (0, 1)")
            if self.kind == REL_FIXED:
                if self.tau_free is None or self.tau_free < 1:
                    raise SpecError("tau_free must be a positive integer")
                if self.n1 < 1 or self.growth <= 1.0:
                    raise SpecError("stage generator needs n1 >= 1 and growth > 1")
        elif self.kind in FW_KINDS:
            if self.eps is None or not 0.0 < self.eps < 0.5:
                raise SpecError("half-width eps must lie in (0, 1/2)")
        elif self.kind in BOUNDED_KINDS:
            if self.stages_s is None or self.stages_s < 1:
                raise SpecError("stage count s must be a positive integer")
            if self.kind == BOUNDED_ABS:
                if self.eps is None or not 0.0 < self.eps < 0.5:
                    raise SpecError("absolute error margin eps must lie in (0, 1/2)")
            elif self.kind == BOUNDED_MIXED:
                if self.eps_a is None or not 0.0 < self.eps_a < 3.0 / 8.0:
                    raise SpecError("eps_a must lie in (0, 3/8)")
                lo = 6.0 * self.eps_a / (3.0 - 2.0 * self.eps_a)
                if self.eps_r is None or not lo < self.eps_r < 1.0:
                    raise SpecError("eps_r must lie in (6*eps_a/(3 - 2*eps_a), 1)")
            else:
                if self.eps_a is None or self.eps_a <= 0.0:
                    raise SpecError("eps_a must be positive")
                if self.eps_r is None or not 0.0 < self.eps_r < 1.0:
                    raise SpecError("eps_r must lie in (0, 1)")
                if not self.range_lo < self.range_hi:
                    raise SpecError("range bounds must satisfy a < b")


@dataclass(frozen=True)
class SamplingPlan:
    """Realized stage grid plus everything the stopping rules need."""

    kind: str
    stages: tuple[int, ...]
    tau: int
    zeta: float
    delta: float
    rho: float = 1.0
    eps: float | None = None
    eps_a: float | None = None
    eps_r: float | None = None
    range_lo: float = 0.0
    range_hi: float = 1.0
    tau_free: int | None = None
    n1: int = 10
    growth: float = 1.5
    z_thresholds: tuple[float, ...] = field(default=())

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    @property
    def log_zeta_delta(self) -> float:
        return math.log(self.zeta * self.delta)

    @property
    def log_bounded(self) -> float:
        """ln(delta / (2*s)) used by the bounded-mean rules."""
        return math.log(self.delta / (2.0 * self.num_stages))


def _ceil_grid(values) -> tuple[int, ...]:
    # "ascending arrangement of all distinct elements"
    return tuple(sorted({int(math.ceil(v - 1e-12)) for v in values}))


def _resolve_zeta(spec: PrecisionSpec, tau: int) -> float:
    zeta = spec.zeta if spec.zeta is not None else default_zeta(tau)
    if zeta * spec.delta >= 1.0:
        raise SpecError("zeta * delta must stay below 1")
    return zeta


def build_abs_plan(spec: PrecisionSpec) -> SamplingPlan:
    spec.validate()
    eps = spec.eps
    base = (24.0 * eps - 16.0 * eps**2) / 9.0
    tau = math.ceil(math.log(1.0 / base) / math.log(1.0 + spec.rho))
    zeta = _resolve_zeta(spec, tau)
    top = math.log(1.0 / (zeta * spec.delta)) / (2.0 * eps**2)
    stages = _ceil_grid(base ** (1.0 - i / tau) * top for i in range(tau + 1))
    return SamplingPlan(
        kind=ABS, stages=stages, tau=tau, zeta=zeta, delta=spec.delta,
        rho=spec.rho, eps=eps,
    )


def build_mixed_plan(spec: PrecisionSpec) -> SamplingPlan:
    spec.validate()
    ea, er = spec.eps_a, spec.eps_r
    factor = 1.5 * (1.0 / ea - 1.0 / er - 1.0 / 3.0)
    tau = math.ceil(math.log(factor) / math.log(1.0 + spec.rho))
    zeta = _resolve_zeta(spec, tau)
    log_inv = math.log(1.0 / (zeta * spec.delta))
    base = 4.0 * (3.0 + er) / (9.0 * er) * log_inv
    stages = _ceil_grid(factor ** (i / tau) * base for i in range(tau + 1))
    # The last stage must also clear the exponent floor at the criterion
    # switch point p* = eps_a / eps_r; the grid formula meets it
    # algebraically, so any gap signals a numeric problem worth surfacing.
    p_star = ea / er
    floor = math.log(zeta * spec.delta) / massart_exponent(p_star + ea, p_star)
    if stages[-1] < math.floor(floor):
        warnings.warn(
            "mixed-scheme grid top fell below its exponent floor "
            f"({stages[-1]} < {floor:.3f})",
            stacklevel=2,
        )
    return SamplingPlan(
        kind=MIXED, stages=stages, tau=tau, zeta=zeta, delta=spec.delta,
        rho=spec.rho, eps_a=ea, eps_r=er,
    )


def build_rel_inverse_plan(spec: PrecisionSpec) -> SamplingPlan:
    spec.validate()
    eps = spec.eps
    factor = 1.5 * (1.0 / eps + 1.0)
    tau = math.ceil(math.log(factor) / math.log(1.0 + spec.rho))
    zeta = _resolve_zeta(spec, tau)
    log_inv = math.log(1.0 / (zeta * spec.delta))
    base = 4.0 * (3.0 + eps) / (9.0 * eps) * log_inv
    gammas = _ceil_grid(factor ** (i / tau) * base for i in range(tau + 1))
    log_zd = math.log(zeta * spec.delta)
    thresholds = tuple(
        1.0 + 2.0 * eps / (3.0 + eps)
        + 9.0 * eps**2 * g / (2.0 * (3.0 + eps) ** 2 * log_zd)
        for g in gammas[:-1]
    )
    return SamplingPlan(
        kind=REL_INVERSE, stages=gammas, tau=tau, zeta=zeta, delta=spec.delta,
        rho=spec.rho, eps=eps, z_thresholds=thresholds,
    )


def build_rel_fixed_plan(spec: PrecisionSpec) -> SamplingPlan:
    """Open-ended relative-error scheme: the grid is generated on demand as
    n_l = ceil(n1 * growth**(l-1)), so the plan stores the generator, not
    a finite stage list."""
    spec.validate()
    tau = spec.tau_free
    zeta = spec.zeta if spec.zeta is not None else _ZETA_MARGIN / (2.0 * (tau + 1))
    if 2.0 * (tau + 1) * zeta > 1.0:
        raise SpecError("zeta must satisfy 2*(tau + 1)*zeta <= 1")
    if zeta * spec.delta >= 1.0:
        raise SpecError("zeta * delta must stay below 1")
    return SamplingPlan(
        kind=REL_FIXED, stages=(), tau=tau, zeta=zeta, delta=spec.delta,
        rho=spec.rho, eps=spec.eps, tau_free=tau, n1=spec.n1, growth=spec.growth,
    )


def rel_fixed_stage_size(plan: SamplingPlan, ell: int) -> int:
    """Deterministic stage size for the open-ended scheme, strictly increasing."""
    raw = math.ceil(plan.n1 * plan.growth ** (ell - 1))
    return max(raw, plan.n1 + ell - 1)


def build_fw_plan(spec: PrecisionSpec) -> SamplingPlan:
    """Shared grid for the Clopper-Pearson and Chernoff-Hoeffding
    fixed-width schemes."""
    spec.validate()
    eps = spec.eps
    ratio = 2.0 * eps**2 / math.log(1.0 / (1.0 - 2.0 * eps))
    tau = math.ceil(math.log(1.0 / ratio) / math.log(1.0 + spec.rho))
    zeta = _resolve_zeta(spec, tau)
    top = math.log(1.0 / (zeta * spec.delta)) / (2.0 * eps**2)
    stages = _ceil_grid(ratio ** (1.0 - i / tau) * top for i in range(tau + 1))
    return SamplingPlan(
        kind=spec.kind, stages=stages, tau=tau, zeta=zeta, delta=spec.delta,
        rho=spec.rho, eps=eps,
    )


def build_massart_fw_plan(spec: PrecisionSpec) -> SamplingPlan:
    """Massart fixed-width grid.

    Uses ln(2/(zeta*delta)) as the log constant so the grid is calibrated
    to the same scale as the Massart interval closed form: the final stage
    then guarantees a width below 2*eps for every count, which the
    ln(1/(zeta*delta)) scale misses by a factor of ln 2.
    """
    spec.validate()
    eps = spec.eps
    factor = 3.0 / (4.0 * eps) + 1.0
    tau = math.ceil(math.log(factor) / math.log(1.0 + spec.rho))
    zeta = _resolve_zeta(spec, tau)
    lam = math.log(2.0 / (zeta * spec.delta))
    stages = _ceil_grid(
        8.0 / 9.0 * factor ** (i / tau) * (3.0 / (4.0 * eps) - 1.0) * lam
        for i in range(tau + 1)
    )
    return SamplingPlan(
        kind=FW_MASSART, stages=stages, tau=tau, zeta=zeta, delta=spec.delta,
        rho=spec.rho, eps=eps,
    )


def _bounded_floor(spec: PrecisionSpec) -> float:
    s = spec.stages_s
    log_term = math.log(2.0 * s / spec.delta)
    if spec.kind == BOUNDED_ABS:
        return log_term / (2.0 * spec.eps**2)
    if spec.kind == BOUNDED_MIXED:
        return (
            2.0
            * (1.0 / spec.eps_r + 1.0 / 3.0)
            * (1.0 / spec.eps_a - 1.0 / spec.eps_r - 1.0 / 3.0)
            * log_term
        )
    width = spec.range_hi - spec.range_lo
    return width**2 / (2.0 * spec.eps_a**2) * log_term


def build_bounded_plan(spec: PrecisionSpec) -> SamplingPlan:
    """Grids for the bounded-mean schemes: any ascending grid meeting the
    final-stage floor is legal; the default is geometric with ratio 2."""
    spec.validate()
    s = spec.stages_s
    n_s = math.ceil(_bounded_floor(spec))
    if n_s < 2 ** (s - 1):
        raise SpecError(
            f"stage count s={s} is too large for this precision: the final "
            f"stage floor {n_s} cannot support {s} doubling stages"
        )
    stages = tuple(math.ceil(n_s / 2 ** (s - ell)) for ell in range(1, s + 1))
    return SamplingPlan(
        kind=spec.kind, stages=stages, tau=s - 1, zeta=1.0, delta=spec.delta,
        rho=spec.rho, eps=spec.eps, eps_a=spec.eps_a, eps_r=spec.eps_r,
        range_lo=spec.range_lo, range_hi=spec.range_hi,
    )


_BUILDERS = {
    ABS: build_abs_plan,
    MIXED: build_mixed_plan,
    REL_INVERSE: build_rel_inverse_plan,
    REL_FIXED: build_rel_fixed_plan,
    FW_CP: build_fw_plan,
    FW_CH: build_fw_plan,
    FW_MASSART: build_massart_fw_plan,
    BOUNDED_ABS: build_bounded_plan,
    BOUNDED_MIXED: build_bounded_plan,
    GENERAL_MIXED: build_bounded_plan,
}


def build_plan(spec: PrecisionSpec) -> SamplingPlan:
    spec.validate()
    return _BUILDERS[spec.kind](spec)


def with_zeta(spec: PrecisionSpec, zeta: float) -> PrecisionSpec:
    return replace(spec, zeta=zeta)


def plan_as_dict(plan: SamplingPlan) -> dict:
    out = {
        "kind": plan.kind,
        "delta": plan.delta,
        "rho": plan.rho,
        "zeta": plan.zeta,
        "tau": plan.tau,
        "stages": list(plan.stages),
    }
    if plan.eps is not None:
        out["eps"] = plan.eps
    if plan.eps_a is not None:
        out["eps_a"] = plan.eps_a
    if plan.eps_r is not None:
        out["eps_r"] = plan.eps_r
    if plan.kind == GENERAL_MIXED:
        out["range_lo"] = plan.range_lo
        out["range_hi"] = plan.range_hi
    if plan.kind == REL_FIXED:
        out["tau_free"] = plan.tau_free
        out["n1"] = plan.n1
        out["growth"] = plan.growth
    if plan.z_thresholds:
        out["z_thresholds"] = list(plan.z_thresholds)
    return out


def plan_from_dict(data: dict) -> SamplingPlan:
    return SamplingPlan(
        kind=data["kind"],
        stages=tuple(int(v) for v in data["stages"]),
        tau=int(data["tau"]),
        zeta=float(data["zeta"]),
        delta=float(data["delta"]),
        rho=float(data.get("rho", 1.0)),
        eps=data.get("eps"),
        eps_a=data.get("eps_a"),
        eps_r=data.get("eps_r"),
        range_lo=float(data.get("range_lo", 0.0)),
        range_hi=float(data.get("range_hi", 1.0)),
        tau_free=data.get("tau_free"),
        n1=int(data.get("n1", 10)),
        growth=float(data.get("growth", 1.5)),
        z_thresholds=tuple(float(v) for v in data.get("z_thresholds", ())),
    )
