"""Independent oracle implementations used to verify the package.

Everything here is written directly from the defining formulas on plain
Python structures, sharing no code with the package: brute-force pairwise
counting for the rank comparison, scipy for Wasserstein-1, explicit
Cartesian products for counterfactual metrics, and literal transcriptions
of each registered metric.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import wasserstein_distance


# ---------------------------------------------------------------------------
# Plain-data fixtures
# ---------------------------------------------------------------------------

@dataclass
class GroupFixture:
    """Rows are (gold, predicted, probs) triples per group, in group order."""

    groups: list[str]
    rows: dict[str, list[tuple[int, int, tuple[float, ...]]]]
    num_classes: int
    focus: int


@dataclass
class CFFixture:
    """Per source: a gold class, a source probability vector, and per-group
    variation probability vectors (variations share the source's gold)."""

    groups: list[str]
    sources: list[str]
    gold: dict[str, int]
    source_probs: dict[str, tuple[float, ...]]
    variations: dict[str, dict[str, list[tuple[float, ...]]]]
    num_classes: int
    focus: int


# ---------------------------------------------------------------------------
# Base measurements, transcribed
# ---------------------------------------------------------------------------

def oracle_counts(rows, c):
    tp = sum(1 for g, p, _ in rows if g == c and p == c)
    fn = sum(1 for g, p, _ in rows if g == c and p != c)
    fp = sum(1 for g, p, _ in rows if g != c and p == c)
    tn = sum(1 for g, p, _ in rows if g != c and p != c)
    return tp, fp, tn, fn


def oracle_rate(kind, rows, c):
    tp, fp, tn, fn = oracle_counts(rows, c)
    if kind == "fpr":
        return fp / (fp + tn)
    if kind == "fnr":
        return fn / (fn + tp)
    if kind in ("tpr", "recall"):
        return tp / (tp + fn)
    if kind == "tnr":
        return tn / (tn + fp)
    if kind in ("accuracy", "parity"):
        return (tp + tn) / len(rows)
    if kind == "f1":
        if 2 * tp + fp + fn == 0:
            return 1.0
        return 2 * tp / (2 * tp + fp + fn)
    raise ValueError(kind)


def oracle_probs(rows, c, tc=None):
    out = []
    for g, _, probs in rows:
        if tc == "eq" and g != c:
            continue
        if tc == "neq" and g == c:
            continue
        out.append(probs[c])
    return out


def brute_mwu_gap(xs, ys):
    u = 0.0
    for x in xs:
        for y in ys:
            if x > y:
                u += 1.0
            elif x == y:
                u += 0.5
    return (0.5 * len(xs) * len(ys) - u) / (len(xs) * len(ys))


def w1_grid_oracle(xs, ys, points=10_000):
    """Quantile-integration Wasserstein-1 on a uniform midpoint grid.

    Exact whenever lcm(len(xs), len(ys)) divides ``points`` (the grid then
    respects every breakpoint of both quantile functions).
    """
    x = sorted(xs)
    y = sorted(ys)
    total = 0.0
    for k in range(points):
        q = (k + 0.5) / points
        total += abs(x[min(len(x) - 1, int(q * len(x)))]
                     - y[min(len(y) - 1, int(q * len(y)))])
    return total / points


# ---------------------------------------------------------------------------
# Group metrics, transcribed from their defining formulas
# ---------------------------------------------------------------------------

def _pairs(groups):
    return list(itertools.combinations(groups, 2))


def oracle_group_metric(name, fx: GroupFixture, custom=None):
    g = fx.groups
    c = fx.focus
    all_rows = [r for grp in g for r in fx.rows[grp]]

    def others(grp):
        return [r for o in g for r in fx.rows[o] if o != grp]

    if name in ("FPED", "FNED", "FPED*", "FNED*"):
        kind = "fpr" if name.startswith("FPED") else "fnr"
        overall = oracle_rate(kind, all_rows, c)
        total = sum(abs(overall - oracle_rate(kind, fx.rows[grp], c)) for grp in g)
        return total / (len(g) if name.endswith("*") else 1)

    if name in ("AvgGF", "PosAvgGF(TC)", "NegAvgGF(TC)"):
        tc = None if name == "AvgGF" else "eq"
        total = sum(
            wasserstein_distance(oracle_probs(all_rows, c, tc),
                                 oracle_probs(fx.rows[grp], c, tc))
            for grp in g
        )
        return total / len(g)

    if name == "FPRRatio":
        return {grp: oracle_rate("fpr", fx.rows[grp], c)
                / oracle_rate("fpr", others(grp), c) for grp in g}

    if name in ("PosAvgEG", "NegAvgEG"):
        tc = "eq" if name == "PosAvgEG" else "neq"
        return {grp: brute_mwu_gap(oracle_probs(others(grp), c, tc),
                                   oracle_probs(fx.rows[grp], c, tc)) for grp in g}

    if name in ("DisparityScore", "DisparityScore*", "TPRGap", "TNRGap", "ParityGap"):
        kind = {"DisparityScore": "f1", "DisparityScore*": "f1", "TPRGap": "tpr",
                "TNRGap": "tnr", "ParityGap": "parity"}[name]
        total = sum(abs(oracle_rate(kind, fx.rows[a], c) - oracle_rate(kind, fx.rows[b], c))
                    for a, b in _pairs(g))
        n = len(g) if name == "DisparityScore" else len(g) * (len(g) - 1) / 2
        return total / n

    if name in ("AccuracyDiff", "TPRDiff", "F1Diff", "RecallDiff"):
        kind = {"AccuracyDiff": "accuracy", "TPRDiff": "tpr",
                "F1Diff": "f1", "RecallDiff": "recall"}[name]
        a, b = g
        return oracle_rate(kind, fx.rows[a], c) - oracle_rate(kind, fx.rows[b], c)

    if name in ("F1Ratio", "RecallRatio"):
        kind = "f1" if name == "F1Ratio" else "recall"
        a, b = g
        return oracle_rate(kind, fx.rows[a], c) / oracle_rate(kind, fx.rows[b], c)

    if name == "LASDiff":
        a, b = g
        return custom[a] - custom[b]

    raise ValueError(name)


# ---------------------------------------------------------------------------
# Counterfactual metrics, transcribed
# ---------------------------------------------------------------------------

def _target_prob(probs, gold):
    return probs[gold]


def oracle_cf_metric(name, fx: CFFixture):
    g = fx.groups
    c = fx.focus

    def kept_sources(tc):
        if tc:
            return [s for s in fx.sources if fx.gold[s] == c]
        return list(fx.sources)

    if name in ("AvgIF", "AvgIF(TC)"):
        sources = kept_sources(name.endswith("(TC)"))
        n = len(g) * (len(g) - 1) / 2
        total = 0.0
        for s in sources:
            for a, b in _pairs(g):
                total += wasserstein_distance(
                    [p[c] for p in fx.variations[s][a]],
                    [p[c] for p in fx.variations[s][b]],
                )
        return total / (len(sources) * n)

    if name == "AvgScoreDiff":
        a, b = g
        total = 0.0
        for s in fx.sources:
            ma = np.mean([p[c] for p in fx.variations[s][a]])
            mb = np.mean([p[c] for p in fx.variations[s][b]])
            total += ma - mb
        return total / len(fx.sources)

    if name in ("CFGap", "CFGap(TC)"):
        sources = kept_sources(name.endswith("(TC)"))
        total = 0.0
        for s in sources:
            src = fx.source_probs[s][c]
            per_source = 0.0
            tuples = list(itertools.product(*(fx.variations[s][grp] for grp in g)))
            for tup in tuples:
                per_source += sum(abs(src - probs[c]) for probs in tup)
            total += per_source / len(tuples) / len(g)
        return total / len(sources)

    if name == "PertSS":
        vector = {}
        for grp in g:
            acc = 0.0
            for s in fx.sources:
                gold = fx.gold[s]
                src = _target_prob(fx.source_probs[s], gold)
                tuples = list(itertools.product(*(fx.variations[s][x] for x in g)))
                gi = g.index(grp)
                acc += sum(abs(src - _target_prob(tup[gi], gold)) for tup in tuples) / len(tuples)
            vector[grp] = acc / len(fx.sources)
        return vector

    if name in ("PertSD", "PertSR"):
        total = 0.0
        for s in fx.sources:
            gold = fx.gold[s]
            tuples = list(itertools.product(*(fx.variations[s][x] for x in g)))
            vals = []
            for tup in tuples:
                scores = [_target_prob(probs, gold) for probs in tup]
                if name == "PertSD":
                    vals.append(float(np.std(scores)))
                else:
                    vals.append(max(scores) - min(scores))
            total += sum(vals) / len(vals)
        return total / len(fx.sources)

    raise ValueError(name)


# ---------------------------------------------------------------------------
# Randomized instance generators
# ---------------------------------------------------------------------------

def _rand_probs(rng, k):
    v = rng.random(k) + 1e-3
    v = v / v.sum()
    return tuple(float(x) for x in v)


def random_group_fixture(rng, two_groups=False, max_per_group=40) -> GroupFixture:
    num_classes = int(rng.integers(2, 5))
    n_groups = 2 if two_groups else int(rng.integers(2, 6))
    focus = int(rng.integers(0, num_classes))
    groups = [f"g{i}" for i in range(n_groups)]
    other = (focus + 1) % num_classes
    rows = {}
    for grp in groups:
        n_extra = int(rng.integers(0, max_per_group - 3))
        entries = [
            # Guarantee every confusion cell so no rate is undefined and
            # no ratio denominator vanishes.
            (focus, focus, _rand_probs(rng, num_classes)),
            (focus, other, _rand_probs(rng, num_classes)),
            (other, focus, _rand_probs(rng, num_classes)),
            (other, other, _rand_probs(rng, num_classes)),
        ]
        for _ in range(n_extra):
            entries.append((
                int(rng.integers(0, num_classes)),
                int(rng.integers(0, num_classes)),
                _rand_probs(rng, num_classes),
            ))
        rows[grp] = entries
    return GroupFixture(groups=groups, rows=rows, num_classes=num_classes, focus=focus)


def random_cf_fixture(rng, two_groups=False, max_product=100) -> CFFixture:
    num_classes = int(rng.integers(2, 5))
    n_groups = 2 if two_groups else int(rng.integers(2, 6))
    focus = int(rng.integers(0, num_classes))
    groups = [f"g{i}" for i in range(n_groups)]
    n_sources = int(rng.integers(2, 7))
    sources = [f"s{j}" for j in range(n_sources)]
    gold, source_probs, variations = {}, {}, {}
    for j, s in enumerate(sources):
        # At least one source per class under study so TC variants have data.
        gold[s] = focus if j == 0 else int(rng.integers(0, num_classes))
        source_probs[s] = _rand_probs(rng, num_classes)
        while True:
            sizes = [int(rng.integers(1, 4)) for _ in groups]
            if math.prod(sizes) <= max_product:
                break
        variations[s] = {
            grp: [_rand_probs(rng, num_classes) for _ in range(size)]
            for grp, size in zip(groups, sizes)
        }
    return CFFixture(groups=groups, sources=sources, gold=gold,
                     source_probs=source_probs, variations=variations,
                     num_classes=num_classes, focus=focus)
