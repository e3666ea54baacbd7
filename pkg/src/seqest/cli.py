"""Batch command-line front door.

Subcommands: plan, certify, tune, estimate, simulate.  Every run is a pure
function of its flags and input files; all randomness is seeded explicitly.

Exit codes: 0 success, 2 invalid precision spec or arguments, 3 failed
certification, 4 bad input data.
"""

from __future__ import annotations

import sys

import click

from . import documents, engine, plans, runtime
from .sim import SimConfig, TruthError, compare_with_exact, parse_truth
from .sim import simulate as run_simulation

EXIT_SPEC = 2
EXIT_CERTIFY = 3
EXIT_DATA = 4


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _spec_from_flags(**kw) -> plans.PrecisionSpec:
    fields = {k: v for k, v in kw.items() if v is not None}
    scheme = fields.pop("scheme")
    try:
        spec = plans.PrecisionSpec(kind=scheme.replace("-", "_"), **fields)
        spec.validate()
    except (plans.SpecError, TypeError) as exc:
        _fail(EXIT_SPEC, str(exc))
    return spec


def _write_output(text: str, out_path: str | None) -> None:
    if out_path is None or out_path == "-":
        click.echo(text, nl=False)
    else:
        with open(out_path, "w") as fh:
            fh.write(text)


def _load_plan(plan_path: str) -> plans.SamplingPlan:
    try:
        with open(plan_path) as fh:
            doc = documents.parse_document(fh.read(), "plan")
        return plans.plan_from_dict(doc)
    except (OSError, documents.DocumentError, KeyError, ValueError) as exc:
        _fail(EXIT_DATA, f"cannot read plan document: {exc}")


def _scheme_options(fn=None, *, required=True):
    if fn is None:
        return lambda f: _scheme_options(f, required=required)
    opts = [
        click.option("--scheme", required=required,
                     type=click.Choice([k.replace("_", "-") for k in plans.SCHEME_KINDS])),
        click.option("--eps", type=float, default=None),
        click.option("--eps-a", "eps_a", type=float, default=None),
        click.option("--eps-r", "eps_r", type=float, default=None),
        click.option("--delta", type=float, default=0.05, show_default=True),
        click.option("--rho", type=float, default=1.0, show_default=True),
        click.option("--zeta", type=float, default=None,
                     help="Confidence multiplier; defaults just inside 1/(2*(tau+1))."),
        click.option("--range-lo", "range_lo", type=float, default=None),
        click.option("--range-hi", "range_hi", type=float, default=None),
        click.option("--stages", "stages_s", type=int, default=None,
                     help="Stage count for the bounded-mean schemes."),
        click.option("--tau", "tau_free", type=int, default=None,
                     help="Full-budget stage count for the open-ended scheme."),
        click.option("--n1", type=int, default=None,
                     help="First stage size for the open-ended scheme."),
        click.option("--growth", type=float, default=None,
                     help="Stage growth factor for the open-ended scheme."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@click.group()
def main() -> None:
    """Multistage estimation with guaranteed precision and confidence."""


@main.command("plan")
@_scheme_options
@click.option("--explain", is_flag=True, help="Print the per-stage grid instantiation.")
@click.option("-o", "--output", default=None, help="Output path (default stdout).")
def cmd_plan(explain, output, **kw):
    """Build a sampling plan document from a precision spec."""
    spec = _spec_from_flags(**kw)
    try:
        plan = plans.build_plan(spec)
    except plans.SpecError as exc:
        _fail(EXIT_SPEC, str(exc))
    if explain:
        click.echo(f"# kind={plan.kind} tau={plan.tau} zeta={plan.zeta!r}", err=True)
        for ell, n in enumerate(plan.stages, start=1):
            click.echo(f"# stage {ell}: size {n}", err=True)
    _write_output(documents.dumps_document("plan", plans.plan_as_dict(plan)), output)


def _plan_from_args(plan_path, kw):
    if plan_path is not None:
        return _load_plan(plan_path)
    if kw.get("scheme") is None:
        _fail(EXIT_SPEC, "provide --plan FILE or a full --scheme spec")
    spec = _spec_from_flags(**kw)
    try:
        return plans.build_plan(spec)
    except plans.SpecError as exc:
        _fail(EXIT_SPEC, str(exc))


@main.command("certify")
@click.option("--plan", "plan_path", default=None, help="Plan document to certify.")
@_scheme_options(required=False)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--csv", "csv_path", default=None,
              help="Write per-point condition sums as CSV.")
@click.option("-o", "--output", default=None)
def cmd_certify(plan_path, jobs, csv_path, output, **kw):
    """Exactly verify the scheme's sufficient conditions at every checkpoint."""
    kw["scheme"] = kw.get("scheme")
    plan = _plan_from_args(plan_path, kw)
    try:
        cert = engine.certify(plan, jobs=jobs)
    except ValueError as exc:
        _fail(EXIT_SPEC, str(exc))
    if csv_path:
        text = documents.csv_text(
            ["p", "condition", "stage", "mass"], documents.certificate_rows(cert)
        )
        with open(csv_path, "w") as fh:
            fh.write(text)
    _write_output(
        documents.dumps_document("certificate", documents.certificate_payload(cert)),
        output,
    )
    if not cert.valid:
        _fail(EXIT_CERTIFY, "certification failed: "
              f"worst {cert.worst_condition} at p={cert.worst_point} "
              f"risk {cert.worst_risk} vs threshold {cert.threshold}")


def _spec_from_plan(plan: plans.SamplingPlan) -> plans.PrecisionSpec:
    return plans.PrecisionSpec(
        kind=plan.kind, eps=plan.eps, eps_a=plan.eps_a, eps_r=plan.eps_r,
        delta=plan.delta, rho=plan.rho, range_lo=plan.range_lo,
        range_hi=plan.range_hi, stages_s=plan.num_stages or None,
        tau_free=plan.tau_free, n1=plan.n1, growth=plan.growth,
    )


@main.command("tune")
@click.option("--plan", "plan_path", default=None,
              help="Take the precision spec from an existing plan document.")
@_scheme_options(required=False)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--rel-tol", type=float, default=1e-3, show_default=True)
@click.option("--branch-and-bound", is_flag=True,
              help="Additionally certify between checkpoint values (fixed-width only).")
@click.option("--csv", "csv_path", default=None,
              help="Write the winning certificate's per-point sums as CSV.")
@click.option("-o", "--output", default=None)
def cmd_tune(plan_path, jobs, rel_tol, branch_and_bound, csv_path, output, **kw):
    """Find the largest certifiable confidence multiplier zeta."""
    if plan_path is not None:
        spec = _spec_from_plan(_load_plan(plan_path))
    else:
        spec = _spec_from_flags(**kw)
    try:
        result = engine.tune_zeta(spec, rel_tol=rel_tol, jobs=jobs,
                                  branch_and_bound=branch_and_bound)
    except ValueError as exc:
        _fail(EXIT_SPEC, str(exc))
    if not result.success:
        _fail(EXIT_CERTIFY, result.message or "tuning failed")
    if csv_path:
        text = documents.csv_text(
            ["p", "condition", "stage", "mass"],
            documents.certificate_rows(result.certificate),
        )
        with open(csv_path, "w") as fh:
            fh.write(text)
    plan = plans.build_plan(plans.with_zeta(spec, result.zeta))
    payload = {
        "zeta": result.zeta,
        "plan": plans.plan_as_dict(plan),
        "certificate": documents.certificate_payload(result.certificate),
    }
    _write_output(documents.dumps_document("tuned", payload), output)


@main.command("estimate")
@click.option("--plan", "plan_path", required=True)
@click.option("--samples", "samples_path", default="-",
              help="Newline-delimited samples; '-' reads standard input.")
@click.option("--budget", type=int, default=None)
@click.option("--checkpoint", "checkpoint_path", default=None,
              help="Write the session state here when the stream ends early.")
@click.option("--resume", "resume_path", default=None,
              help="Resume from a session checkpoint.")
@click.option("-o", "--output", default=None)
def cmd_estimate(plan_path, samples_path, budget, checkpoint_path, resume_path, output):
    """Stream samples through a plan's stopping rule and report the estimate."""
    if resume_path is not None:
        try:
            with open(resume_path) as fh:
                doc = documents.parse_document(fh.read(), "session")
            session = runtime.EstimationSession.from_dict(doc["session"])
        except (OSError, documents.DocumentError, KeyError, ValueError) as exc:
            _fail(EXIT_DATA, f"cannot resume session: {exc}")
    else:
        plan = _load_plan(plan_path)
        session = runtime.EstimationSession(plan, budget=budget)

    stream = sys.stdin if samples_path == "-" else open(samples_path)
    try:
        for lineno, line in enumerate(stream, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                value = float(line)
            except ValueError:
                _fail(EXIT_DATA, f"line {lineno}: not a number: {line!r}")
            try:
                session.feed(value)
            except runtime.SampleRangeError as exc:
                _fail(EXIT_DATA, f"line {lineno}: {exc}")
            except runtime.SessionError as exc:
                _fail(EXIT_DATA, f"line {lineno}: {exc}")
            if session.status != runtime.RUNNING:
                break
    finally:
        if stream is not sys.stdin:
            stream.close()

    if session.status == runtime.RUNNING:
        if checkpoint_path is not None:
            text = documents.dumps_document("session", {"session": session.to_dict()})
            with open(checkpoint_path, "w") as fh:
                fh.write(text)
            return
        _fail(EXIT_DATA, "sample stream ended before the stopping rule fired "
                         "(use --checkpoint to save progress)")
    report = session.report()
    _write_output(documents.dumps_document("report", documents.report_payload(report)), output)


@main.command("simulate")
@click.option("--plan", "plan_path", default=None)
@_scheme_options(required=False)
@click.option("--truth", "truth_text", required=True,
              help="e.g. bernoulli:0.3, beta:2,2, uniform:0,1, constant:0.4")
@click.option("--reps", type=int, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--budget", type=int, default=None)
@click.option("--link", "use_link", is_flag=True,
              help="Feed the scheme through the Bernoulli reduction of the truth.")
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--compare-exact", is_flag=True)
@click.option("--csv", "csv_path", default=None)
@click.option("--trace", "trace_path", default=None,
              help="Write one row per replication for debugging.")
@click.option("-o", "--output", default=None)
def cmd_simulate(plan_path, truth_text, reps, seed, budget, use_link, jobs,
                 compare_exact, csv_path, trace_path, output, **kw):
    """Monte Carlo check of coverage and sample-size behavior."""
    kw["scheme"] = kw.get("scheme")
    plan = _plan_from_args(plan_path, kw)
    try:
        truth = parse_truth(truth_text)
        truth.mean()
    except (TruthError, ValueError, IndexError) as exc:
        _fail(EXIT_SPEC, f"bad truth spec: {exc}")
    config = SimConfig(
        plan=plan, truth=truth, replications=reps, seed=seed,
        budget=budget, use_link=use_link,
    )
    try:
        config.validate()
    except (TruthError, ValueError) as exc:
        _fail(EXIT_SPEC, str(exc))
    trace_rows = [] if trace_path else None
    report = run_simulation(config, jobs=jobs, trace_rows=trace_rows)
    if trace_path:
        text = documents.csv_text(
            ["replication", "stage", "n", "estimate", "certified", "success"],
            trace_rows,
        )
        with open(trace_path, "w") as fh:
            fh.write(text)
    if compare_exact:
        try:
            report = compare_with_exact(report, plan, truth)
        except (TruthError, ValueError) as exc:
            _fail(EXIT_SPEC, f"exact comparison unavailable: {exc}")
    if csv_path:
        text = documents.csv_text(["metric", "value"], report.as_rows())
        with open(csv_path, "w") as fh:
            fh.write(text)
    _write_output(
        documents.dumps_document("sim_report", documents.sim_report_payload(report)),
        output,
    )


if __name__ == "__main__":
    main()
