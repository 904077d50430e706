"""Comparison functions: reduce two or more scores to a single value.

Bivariate comparisons take (background_or_first, group_or_second) in that
order everywhere, so signs and ratios read the same across the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import EvaluationError, UndefinedScoreError

BIVARIATE_SCALAR = ("abs_diff", "signed_diff", "ratio")
BIVARIATE_SET = ("wasserstein1", "mwu_gap")
MULTIVARIATE = ("std_dev", "range_spread")
ALL_KINDS = BIVARIATE_SCALAR + BIVARIATE_SET + MULTIVARIATE


@dataclass(frozen=True)
class ComparisonFunction:
    kind: str

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise EvaluationError(f"unknown comparison kind {self.kind!r}")

    @property
    def arity(self) -> str:
        return "multivariate" if self.kind in MULTIVARIATE else "bivariate"

    @property
    def operand(self) -> str:
        return "set" if self.kind in BIVARIATE_SET else "scalar"

    def __call__(self, *args):
        if self.kind in MULTIVARIATE:
            (scores,) = args
            return std_dev(scores) if self.kind == "std_dev" else range_spread(scores)
        x, y = args
        if self.kind == "abs_diff":
            return abs_diff(x, y)
        if self.kind == "signed_diff":
            return signed_diff(x, y)
        if self.kind == "ratio":
            return ratio(x, y)
        if self.kind == "wasserstein1":
            return wasserstein1(x, y)
        return mwu_gap(x, y)


def abs_diff(x: float, y: float) -> float:
    return abs(x - y)


def signed_diff(x: float, y: float) -> float:
    return x - y


def ratio(x: float, y: float) -> float:
    """y / x: second operand over first (group over background)."""
    if x == 0:
        raise UndefinedScoreError("ratio", "denominator (first operand) is zero")
    return y / x


def wasserstein1(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Exact W1 between two empirical distributions.

    Integrates |Fx^-1(q) - Fy^-1(q)| over the merged quantile breakpoints;
    breakpoint positions are kept as integer multiples of 1/(nm) so the
    segmentation itself is exact. For equal-size inputs this reduces to
    the mean absolute difference of the sorted samples.
    """
    n, m = len(xs), len(ys)
    if n == 0 or m == 0:
        raise UndefinedScoreError("wasserstein1", "empty sample set")
    x = sorted(xs)
    y = sorted(ys)
    if n == m:
        return sum(abs(a - b) for a, b in zip(x, y)) / n
    total = 0.0
    scale = n * m
    cur = 0  # current quantile, scaled by n*m
    ix = iy = 0
    while ix < n and iy < m:
        nx = (ix + 1) * m
        ny = (iy + 1) * n
        nxt = min(nx, ny)
        total += (nxt - cur) * abs(x[ix] - y[iy])
        if nx == nxt:
            ix += 1
        if ny == nxt:
            iy += 1
        cur = nxt
    return total / scale


def _fractional_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=values.__getitem__)
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1  # ranks are 1-based
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def mwu_gap(xs: Sequence[float], ys: Sequence[float]) -> float:
    """1/2 - U/(|X||Y|) where U counts pairs with x > y (ties count 1/2).

    Computed from fractional ranks of the pooled sample, which equals the
    pairwise count exactly (ranks are half-integers). Negative means the
    second sample sits stochastically below the first.
    """
    n, m = len(xs), len(ys)
    if n == 0 or m == 0:
        raise UndefinedScoreError("mwu_gap", "empty sample set")
    ranks = _fractional_ranks(list(xs) + list(ys))
    rank_sum_x = sum(ranks[:n])
    u = rank_sum_x - n * (n + 1) / 2
    # Single division keeps antisymmetry exact: gap(X,Y) == -gap(Y,X).
    return (0.5 * n * m - u) / (n * m)


def std_dev(scores: Sequence[float]) -> float:
    """Population standard deviation (divisor n)."""
    if not scores:
        raise UndefinedScoreError("std_dev", "empty score collection")
    first = scores[0]
    if all(s == first for s in scores):
        # Identical scores deviate by exactly zero; don't let the mean's
        # rounding leak in.
        return 0.0
    mean = sum(scores) / len(scores)
    return math.sqrt(sum((s - mean) ** 2 for s in scores) / len(scores))


def range_spread(scores: Sequence[float]) -> float:
    if not scores:
        raise UndefinedScoreError("range_spread", "empty score collection")
    return max(scores) - min(scores)
