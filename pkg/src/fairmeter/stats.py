"""Significance tests over per-template probability scores.

Scores are first reduced to one value per (template, group) cell: the mean
probability of the class under study across the group's identity terms,
using all templates regardless of their gold class. Attributes with more
than two groups get the Friedman test; paired two-group designs (e.g.
female/male names) get the Wilcoxon signed-rank test. Both use large-sample
approximations, which is the regime template suites operate in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaincc

from . import scoring
from .errors import EvaluationError
from .model import CounterfactualDataset, ModelOutput


@dataclass(frozen=True)
class TemplateScoreMatrix:
    """Rows: templates (blocks); columns: protected groups."""

    sources: tuple[str, ...]
    groups: tuple[str, ...]
    cells: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if len(self.cells) != len(self.sources):
            raise EvaluationError("matrix rows must match sources")
        for row in self.cells:
            if len(row) != len(self.groups):
                raise EvaluationError("matrix is not complete: ragged row")

    def column(self, group: str) -> list[float]:
        j = self.groups.index(group)
        return [row[j] for row in self.cells]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.cells, dtype=float)


def build_matrix(dataset: CounterfactualDataset,
                 outputs: Mapping[str, ModelOutput],
                 class_focus: int | str = 1) -> TemplateScoreMatrix:
    """Mean class probability per (template, group) cell."""
    groups = dataset.attribute.group_names
    rows = []
    for sid in dataset.source_ids:
        row = []
        for g in groups:
            subset = dataset.variation_subset(sid, g)
            for ex in subset:
                if ex.id not in outputs:
                    raise EvaluationError(f"no model output for example {ex.id!r}")
            if dataset.task == "sequence":
                vals = [scoring.single_example_prob(
                    scoring.ScoringFunction("prob_set", class_focus=class_focus),
                    ex, outputs[ex.id], dataset.tag_labels) for ex in subset]
            else:
                vals = [outputs[ex.id].probs[class_focus] for ex in subset]
            row.append(sum(vals) / len(vals))
        rows.append(tuple(row))
    return TemplateScoreMatrix(sources=dataset.source_ids, groups=groups,
                               cells=tuple(rows))


def _row_ranks(row: Sequence[float]) -> list[float]:
    order = sorted(range(len(row)), key=row.__getitem__)
    ranks = [0.0] * len(row)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and row[order[j + 1]] == row[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution (regularized upper
    incomplete gamma)."""
    return float(gammaincc(df / 2.0, x / 2.0))


def friedman_test(matrix: TemplateScoreMatrix | Sequence[Sequence[float]]
                  ) -> tuple[float, float]:
    """Friedman rank test across k > 2 related groups.

    Within-row ranks with average-rank ties and the standard tie
    correction; the statistic is chi-square with k-1 degrees of freedom.
    Rows that rank identically everywhere carry no signal; a fully tied
    matrix yields statistic 0 and p = 1.
    """
    cells = matrix.cells if isinstance(matrix, TemplateScoreMatrix) else matrix
    n = len(cells)
    if n < 2:
        raise EvaluationError("Friedman test needs at least 2 rows")
    k = len(cells[0])
    if k <= 2:
        raise EvaluationError(
            "Friedman test needs more than 2 groups; use the Wilcoxon "
            "signed-rank test for paired two-group designs"
        )
    rank_sums = [0.0] * k
    tie_term = 0.0
    for row in cells:
        if len(row) != k:
            raise EvaluationError("matrix is not complete: ragged row")
        ranks = _row_ranks(row)
        for j, r in enumerate(ranks):
            rank_sums[j] += r
        # Tie sizes within this row.
        seen: dict[float, int] = {}
        for v in row:
            seen[v] = seen.get(v, 0) + 1
        tie_term += sum(t ** 3 - t for t in seen.values())
    correction = 1.0 - tie_term / (k * (k * k - 1) * n)
    ssbn = sum(rs ** 2 for rs in rank_sums)
    raw = 12.0 / (n * k * (k + 1)) * ssbn - 3 * n * (k + 1)
    if correction == 0.0:
        return 0.0, 1.0
    statistic = raw / correction
    return statistic, chi2_sf(statistic, k - 1)


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


MIN_WILCOXON_PAIRS = 10


def wilcoxon_signed_rank(x: Sequence[float], y: Sequence[float]
                         ) -> tuple[float, float]:
    """Two-sided Wilcoxon signed-rank test on paired columns.

    Zero differences are dropped; |differences| are ranked with average
    ties; the statistic is the smaller signed-rank sum. The p-value uses
    the normal approximation with tie-adjusted variance and continuity
    correction, which needs at least 10 usable pairs.
    """
    if len(x) != len(y):
        raise EvaluationError("paired columns must have equal length")
    diffs = [a - b for a, b in zip(x, y) if a != b]
    n = len(diffs)
    if n < MIN_WILCOXON_PAIRS:
        raise EvaluationError(
            f"only {n} nonzero pairs; the normal approximation needs at "
            f"least {MIN_WILCOXON_PAIRS}"
        )
    magnitudes = [abs(d) for d in diffs]
    ranks = _row_ranks(magnitudes)
    w_plus = sum(r for d, r in zip(diffs, ranks) if d > 0)
    w_minus = sum(r for d, r in zip(diffs, ranks) if d < 0)
    statistic = min(w_plus, w_minus)

    mean = n * (n + 1) / 4.0
    variance = n * (n + 1) * (2 * n + 1) / 24.0
    seen: dict[float, int] = {}
    for m in magnitudes:
        seen[m] = seen.get(m, 0) + 1
    variance -= sum(t ** 3 - t for t in seen.values()) / 48.0
    if variance <= 0:
        raise EvaluationError("all differences are tied; variance is zero")
    # Continuity correction: shift the statistic half a step toward the mean.
    shift = 0.5 * math.copysign(1.0, statistic - mean) if statistic != mean else 0.0
    z = (statistic - mean - shift) / math.sqrt(variance)
    p = min(1.0, 2.0 * _norm_sf(abs(z)))
    return statistic, p


def pick_test(n_groups: int) -> str:
    return "friedman" if n_groups > 2 else "wilcoxon"


def run_significance(dataset: CounterfactualDataset,
                     outputs: Mapping[str, ModelOutput],
                     class_focus: int | str = 1) -> dict:
    """One test per attribute, mirroring the report layout: attribute,
    test name, statistic, p-value."""
    matrix = build_matrix(dataset, outputs, class_focus)
    k = len(matrix.groups)
    if pick_test(k) == "friedman":
        statistic, p = friedman_test(matrix)
        test = "friedman"
    else:
        a, b = matrix.groups
        statistic, p = wilcoxon_signed_rank(matrix.column(a), matrix.column(b))
        test = "wilcoxon"
    return {
        "attribute": dataset.attribute.name,
        "test": test,
        "statistic": statistic,
        "p_value": p,
        "n_templates": len(matrix.sources),
        "groups": list(matrix.groups),
        "class_focus": class_focus,
    }
