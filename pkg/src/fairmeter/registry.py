"""Registry of named fairness metrics.

Each entry pins down one parametrization: comparison layout, score,
comparison function, normalizer and background. Metrics that were coined
for exactly two groups (signed differences and ratios between a first and
a second group) refuse larger group sets instead of silently picking an
order. Starred names are the corrected-normalization variants of their
base metric.
"""

from __future__ import annotations

import json

from .comparison import ComparisonFunction
from .engine import Background, MetricSpec
from .errors import UnknownNameError
from .scoring import ScoringFunction

_ALL = Background("all_examples")
_OTHERS = Background("all_others")
_SOURCE = Background("source_example")


def _phi(kind: str, focus: int | str = 1, tc: str | None = None) -> ScoringFunction:
    return ScoringFunction(kind=kind, class_focus=focus, tc=tc)


def _d(kind: str) -> ComparisonFunction:
    return ComparisonFunction(kind)


def _group(name, family, phi, d, *, normalizer="one", background=None,
           max_groups=None, signed=False, swap=False) -> MetricSpec:
    return MetricSpec(name=name, family=family, mode="group", phi=phi, d=d,
                      normalizer=normalizer, background=background,
                      max_groups=max_groups, signed=signed, swap_operands=swap)


def _cf(name, family, phi, d, *, normalizer="one", background=None,
        max_groups=None, signed=False, tuple_mode=False,
        convertible=False) -> MetricSpec:
    return MetricSpec(name=name, family=family, mode="counterfactual", phi=phi,
                      d=d, normalizer=normalizer, background=background,
                      max_groups=max_groups, signed=signed,
                      tuple_mode=tuple_mode, pcm_convertible=convertible)


_ENTRIES: tuple[MetricSpec, ...] = (
    # -- group fairness, background comparisons --------------------------
    _group("FPED", "bcm", _phi("fpr"), _d("abs_diff"), background=_ALL),
    _group("FNED", "bcm", _phi("fnr"), _d("abs_diff"), background=_ALL),
    _group("FPED*", "bcm", _phi("fpr"), _d("abs_diff"),
           normalizer="group_count", background=_ALL),
    _group("FNED*", "bcm", _phi("fnr"), _d("abs_diff"),
           normalizer="group_count", background=_ALL),
    _group("AvgGF", "bcm", _phi("prob_set"), _d("wasserstein1"),
           normalizer="group_count", background=_ALL),
    _group("PosAvgGF(TC)", "bcm", _phi("prob_set_tc", focus=1, tc="eq"),
           _d("wasserstein1"), normalizer="group_count", background=_ALL),
    _group("NegAvgGF(TC)", "bcm", _phi("prob_set_tc", focus=0, tc="eq"),
           _d("wasserstein1"), normalizer="group_count", background=_ALL),
    _group("FPRRatio", "vbcm", _phi("fpr"), _d("ratio"), background=_OTHERS),
    _group("PosAvgEG", "vbcm", _phi("prob_set_tc", focus=1, tc="eq"),
           _d("mwu_gap"), background=_OTHERS, signed=True),
    _group("NegAvgEG", "vbcm", _phi("prob_set_tc", focus=1, tc="neq"),
           _d("mwu_gap"), background=_OTHERS, signed=True),
    # -- group fairness, pairwise comparisons ----------------------------
    _group("DisparityScore", "pcm", _phi("f1"), _d("abs_diff"),
           normalizer="group_count"),
    _group("DisparityScore*", "pcm", _phi("f1"), _d("abs_diff"),
           normalizer="pair_count"),
    _group("TPRGap", "pcm", _phi("tpr"), _d("abs_diff"), normalizer="pair_count"),
    _group("TNRGap", "pcm", _phi("tnr"), _d("abs_diff"), normalizer="pair_count"),
    _group("ParityGap", "pcm", _phi("parity"), _d("abs_diff"),
           normalizer="pair_count"),
    _group("AccuracyDiff", "pcm", _phi("accuracy"), _d("signed_diff"),
           max_groups=2, signed=True),
    _group("TPRDiff", "pcm", _phi("tpr"), _d("signed_diff"),
           max_groups=2, signed=True),
    _group("F1Diff", "pcm", _phi("f1"), _d("signed_diff"),
           max_groups=2, signed=True),
    _group("RecallDiff", "pcm", _phi("recall"), _d("signed_diff"),
           max_groups=2, signed=True),
    # The source this ratio comes from labels it an F1 ratio but defines
    # the score as recall; both readings are registered.
    _group("F1Ratio", "pcm", _phi("f1"), _d("ratio"), max_groups=2, swap=True),
    _group("RecallRatio", "pcm", _phi("recall"), _d("ratio"),
           max_groups=2, swap=True),
    # Needs caller-supplied per-group scalar scores (e.g. parser LAS).
    _group("LASDiff", "pcm", _phi("custom_scalar"), _d("signed_diff"),
           max_groups=2, signed=True),
    # -- counterfactual fairness -----------------------------------------
    _cf("CFGap", "bcm", _phi("prob_set"), _d("abs_diff"),
        normalizer="group_count", background=_SOURCE, tuple_mode=True,
        convertible=True),
    _cf("CFGap(TC)", "bcm", _phi("prob_set_tc", focus=1, tc="eq"), _d("abs_diff"),
        normalizer="group_count", background=_SOURCE, tuple_mode=True,
        convertible=True),
    _cf("PertSS", "vbcm", _phi("target_class_prob"), _d("abs_diff"),
        normalizer="group_count", background=_SOURCE, tuple_mode=True,
        convertible=True),
    _cf("PertSD", "mcm", _phi("target_class_prob"), _d("std_dev"),
        normalizer="cf_source_count", tuple_mode=True),
    _cf("PertSR", "mcm", _phi("target_class_prob"), _d("range_spread"),
        normalizer="cf_source_count", tuple_mode=True),
    _cf("AvgIF", "pcm", _phi("prob_set"), _d("wasserstein1"),
        normalizer="pair_count"),
    _cf("AvgIF(TC)", "pcm", _phi("prob_set_tc", focus=1, tc="eq"),
        _d("wasserstein1"), normalizer="pair_count"),
    _cf("AvgScoreDiff", "pcm", _phi("mean_prob_set"), _d("signed_diff"),
        normalizer="pair_count", max_groups=2, signed=True),
)

REGISTRY: dict[str, MetricSpec] = {spec.name: spec for spec in _ENTRIES}

# Entries that need nothing beyond a dataset and a prediction file.
SELF_CONTAINED = tuple(n for n, s in REGISTRY.items()
                       if s.phi.kind != "custom_scalar")


def registry_lookup(name: str) -> MetricSpec:
    if name not in REGISTRY:
        raise UnknownNameError(
            f"unknown metric {name!r}; available: {', '.join(REGISTRY)}"
        )
    return REGISTRY[name]


def metric_names(mode: str | None = None) -> tuple[str, ...]:
    return tuple(n for n, s in REGISTRY.items()
                 if mode is None or s.mode == mode)


def registry_dump() -> str:
    """JSON description of every registered parametrization."""
    rows = []
    for spec in REGISTRY.values():
        rows.append({
            "name": spec.name,
            "family": spec.family.upper(),
            "mode": spec.mode,
            "score": {
                "kind": spec.phi.kind,
                "class_focus": spec.phi.class_focus,
                "tc": spec.phi.tc,
            },
            "comparison": spec.d.kind,
            "normalizer": spec.normalizer,
            "background": (
                {"kind": spec.background.kind, "name": spec.background.name}
                if spec.background else None
            ),
            "max_groups": spec.max_groups,
            "signed": spec.signed,
        })
    return json.dumps(rows, indent=2)
