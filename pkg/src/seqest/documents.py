"""Versioned plain-text documents and CSV emission.

Every artifact the CLI reads or writes is a JSON document with a
format_version field; readers reject unknown major versions.  Serialization
is canonical (sorted keys, fixed separators, trailing newline) so repeated
runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json

FORMAT_VERSION = "1.0"


class DocumentError(ValueError):
    pass


def dumps_document(doc_type: str, payload: dict) -> str:
    doc = {"format_version": FORMAT_VERSION, "doc_type": doc_type}
    doc.update(payload)
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def parse_document(text: str, expected_type: str | None = None) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"not a valid document: {exc}") from exc
    version = str(doc.get("format_version", ""))
    major = version.split(".", 1)[0]
    if major != FORMAT_VERSION.split(".", 1)[0]:
        raise DocumentError(f"unsupported document format_version {version!r}")
    if expected_type is not None and doc.get("doc_type") != expected_type:
        raise DocumentError(
            f"expected a {expected_type} document, got {doc.get('doc_type')!r}"
        )
    return doc


def csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def certificate_payload(cert) -> dict:
    return {
        "zeta": cert.zeta,
        "delta": cert.delta,
        "valid": cert.valid,
        "method": cert.method,
        "worst_condition": cert.worst_condition,
        "worst_point": cert.worst_point,
        "worst_risk": cert.worst_risk,
        "threshold": cert.threshold,
        "num_points": len(cert.point_totals),
        "details": {k: v for k, v in sorted(cert.details.items())},
    }


def certificate_rows(cert) -> list[tuple]:
    return [(repr(r.p), r.condition, r.stage, repr(r.mass)) for r in cert.rows]


def report_payload(report) -> dict:
    out = {
        "kind": report.kind,
        "point_estimate": report.point_estimate,
        "terminal_sample_size": report.terminal_sample_size,
        "terminal_stage": report.terminal_stage,
        "certified": report.certified,
        "spec": report.spec,
    }
    if report.interval is not None:
        out["interval"] = {
            "lower": report.interval.lower,
            "upper": report.interval.upper,
            "kind": report.interval.kind,
            "alpha": report.interval.alpha,
        }
    return out


def sim_report_payload(report) -> dict:
    return {
        "replications": report.replications,
        "seed": report.seed,
        "coverage": report.coverage,
        "coverage_se": report.coverage_se,
        "n_mean": report.n_mean,
        "n_quantiles": {str(k): v for k, v in report.n_quantiles.items()},
        "stage_freqs": report.stage_freqs,
        "budget_exhausted_frac": report.budget_exhausted_frac,
        "estimate_mean": report.estimate_mean,
        "comparison": report.comparison,
    }
