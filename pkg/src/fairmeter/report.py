"""Report assembly: per-group and accumulated values, heatmap-ready
row normalization, CSV/JSON emission.

Raw values are always retained; normalization (max-absolute-value scaling
per metric x class row) only rescales, so the location of the largest
absolute entry never moves. Relative (ratio) metrics additionally emit the
underlying group and background scores, which they are hard to interpret
without.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

from .engine import MetricResult, MetricSpec

ACCUMULATED = "ALL"


@dataclass
class ReportRow:
    metric: str
    class_focus: int | str | None
    group: str
    raw: float | None
    normalized: float | None = None
    n_examples: int | None = None


@dataclass
class Report:
    rows: list[ReportRow] = field(default_factory=list)
    # (metric, class) -> max-abs factor used for the row's normalization
    factors: dict[tuple[str, str], float] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)

    def row_values(self, metric: str, class_focus) -> list[ReportRow]:
        return [r for r in self.rows
                if r.metric == metric and r.class_focus == class_focus]


def build_report(evaluated: Sequence[tuple[MetricSpec, MetricResult]]) -> Report:
    report = Report()
    for spec, result in evaluated:
        cls = result.class_focus
        for group, value in result.per_group.items():
            report.rows.append(ReportRow(
                metric=result.name, class_focus=cls, group=group, raw=value,
                n_examples=result.n_examples.get(group),
            ))
        if result.value is not None:
            report.rows.append(ReportRow(
                metric=result.name, class_focus=cls, group=ACCUMULATED,
                raw=result.value,
                n_examples=sum(
                    n for g, n in result.n_examples.items() if "|" not in g
                ) or None,
            ))
        if spec.d.kind == "ratio":
            for group, score in result.phi_scores.items():
                report.rows.append(ReportRow(
                    metric=f"{result.name}.group_score", class_focus=cls,
                    group=group, raw=score,
                    n_examples=result.n_examples.get(group),
                ))
            for group, score in result.background_scores.items():
                report.rows.append(ReportRow(
                    metric=f"{result.name}.background_score", class_focus=cls,
                    group=group, raw=score,
                ))
        for note in result.skipped:
            report.diagnostics.append(f"{result.name}[{cls}]: {note}")
        if result.sample_caps_hit:
            report.diagnostics.append(
                f"{result.name}[{cls}]: sampling cap hit for "
                f"{result.sample_caps_hit} source(s)"
            )
    return report


def normalize_rows(report: Report) -> Report:
    """Scale each (metric, class) row of per-group values by its largest
    absolute entry; all-zero rows stay zero with a recorded factor of 0."""
    keys = []
    for r in report.rows:
        key = (r.metric, str(r.class_focus))
        if key not in keys:
            keys.append(key)
    for key in keys:
        metric, cls = key
        entries = [r for r in report.rows
                   if r.metric == metric and str(r.class_focus) == cls
                   and r.group != ACCUMULATED]
        if not entries:
            continue
        factor = max(abs(r.raw) for r in entries if r.raw is not None)
        report.factors[key] = factor
        for r in entries:
            if r.raw is None:
                continue
            r.normalized = r.raw / factor if factor else 0.0
    return report


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_csv(report: Report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", "class", "group", "raw", "normalized", "n_examples"])
    for r in report.rows:
        writer.writerow([
            r.metric, _fmt(r.class_focus), r.group,
            _fmt(r.raw), _fmt(r.normalized), _fmt(r.n_examples),
        ])
    return buf.getvalue()


def to_json_dict(report: Report) -> dict:
    return {
        "rows": [
            {
                "metric": r.metric,
                "class": r.class_focus,
                "group": r.group,
                "raw": r.raw,
                "normalized": r.normalized,
                "n_examples": r.n_examples,
            }
            for r in report.rows
        ],
        "row_factors": {
            f"{metric}|{cls}": factor
            for (metric, cls), factor in report.factors.items()
        },
        "diagnostics": list(report.diagnostics),
    }


def to_json(report: Report) -> str:
    return json.dumps(to_json_dict(report), indent=2) + "\n"
