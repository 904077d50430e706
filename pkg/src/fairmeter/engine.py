"""Evaluation of the generalized fairness metrics.

Three comparison layouts are supported, each in a group-fairness and a
counterfactual variant:

* pairwise: average comparison over unordered pairs of protected groups;
* background: comparison of each group against a reference subset, either
  accumulated to a scalar or kept as a per-group vector;
* multi-group: one joint comparison over the scores of all groups.

Counterfactual variants average the same comparison within each variation
set and then across source examples. Metrics whose score is defined on a
single example are evaluated over (sampled) Cartesian tuples holding one
variation per group.
"""

from __future__ import annotations

import itertools
import math
import zlib
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import scoring
from .comparison import ComparisonFunction
from .errors import EvaluationError, UndefinedScoreError
from .model import (
    CounterfactualDataset,
    Example,
    GroupedDataset,
    ModelOutput,
    SourceExample,
)
from .scoring import ScoringFunction

NORMALIZERS = ("one", "group_count", "pair_count", "cf_source_count")
BACKGROUND_KINDS = ("all_examples", "all_others", "privileged", "source_example")
FAMILIES = ("pcm", "bcm", "vbcm", "mcm")
MODES = ("group", "counterfactual")

CARTESIAN_CAP = 100


@dataclass(frozen=True)
class Background:
    """Reference subset a group is compared against."""

    kind: str
    name: str | None = None  # privileged group name

    def __post_init__(self):
        if self.kind not in BACKGROUND_KINDS:
            raise EvaluationError(f"unknown background kind {self.kind!r}")
        if self.kind == "privileged" and not self.name:
            raise EvaluationError("privileged background needs a group name")


@dataclass(frozen=True)
class MetricSpec:
    """A named parametrization of one generalized metric."""

    name: str
    family: str
    mode: str
    phi: ScoringFunction
    d: ComparisonFunction
    normalizer: str = "one"
    background: Background | None = None
    min_groups: int = 2
    max_groups: int | None = None
    signed: bool = False
    # For non-commutative pairwise d: compare first group over second
    # instead of the default second-over-first operand order.
    swap_operands: bool = False
    # Score defined on single examples; counterfactual evaluation walks
    # Cartesian tuples of variations.
    tuple_mode: bool = False
    # May be evaluated pairwise when sources carry no model outputs.
    pcm_convertible: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise EvaluationError(f"unknown metric family {self.family!r}")
        if self.mode not in MODES:
            raise EvaluationError(f"unknown metric mode {self.mode!r}")
        if self.normalizer not in NORMALIZERS:
            raise EvaluationError(f"unknown normalizer {self.normalizer!r}")
        if self.family in ("bcm", "vbcm") and self.background is None:
            raise EvaluationError(f"{self.name}: background comparisons need a background")
        if self.family in ("pcm", "mcm") and self.background is not None:
            raise EvaluationError(f"{self.name}: {self.family} takes no background")


@dataclass
class MetricResult:
    """Evaluation outcome; per-group contributions are always retained.

    ``per_group`` maps group names (background and multi-group families)
    or "a|b" ordered pair labels (pairwise family) to contribution values.
    ``phi_scores`` holds the underlying scalar scores so relative metrics
    stay interpretable; ``background_scores`` the reference score each
    group was compared against.
    """

    name: str
    family: str
    mode: str
    class_focus: int | str | None
    value: float | None
    per_group: dict[str, float] = field(default_factory=dict)
    phi_scores: dict[str, float] = field(default_factory=dict)
    background_scores: dict[str, float] = field(default_factory=dict)
    n_examples: dict[str, int] = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list)
    sample_caps_hit: int = 0


def normalizer_value(kind: str, n_groups: int) -> float:
    if kind == "group_count":
        return float(n_groups)
    if kind == "pair_count":
        return n_groups * (n_groups - 1) / 2
    # "one" and "cf_source_count": the per-set factor is 1; the 1/|S'|
    # source average is applied uniformly in counterfactual mode.
    return 1.0


class _SkipSubset(Exception):
    """Internal: a subset was skipped under the skip-and-report policy."""


def _policy(exc: UndefinedScoreError, where: str, on_undefined: str,
            skipped: list[str]) -> None:
    if on_undefined == "abort":
        raise EvaluationError(f"{where}: {exc}") from exc
    skipped.append(f"{where}: {exc}")
    raise _SkipSubset from exc


def _resolve_groups(spec: MetricSpec, dataset) -> tuple[str, ...]:
    names = dataset.attribute.group_names
    if spec.background is not None and spec.background.kind == "privileged":
        priv = spec.background.name
        if priv not in names:
            raise EvaluationError(f"{spec.name}: privileged group {priv!r} not in attribute")
        names = tuple(n for n in names if n != priv)
    if len(names) < spec.min_groups:
        raise EvaluationError(
            f"{spec.name}: needs at least {spec.min_groups} groups, got {len(names)}"
        )
    if spec.max_groups is not None and len(names) > spec.max_groups:
        raise EvaluationError(
            f"{spec.name}: defined for at most {spec.max_groups} groups, got {len(names)}"
        )
    return names


def _score(spec: MetricSpec, examples: Sequence[Example],
           outputs: Mapping[str, ModelOutput], dataset, *,
           custom_key: str | None = None,
           custom_scores: Mapping[str, float] | None = None):
    return scoring.score_subset(
        spec.phi, examples, outputs,
        sequence=dataset.task == "sequence",
        tag_labels=dataset.tag_labels,
        custom_scores=custom_scores,
        custom_key=custom_key,
    )


def _pair_label(a: str, b: str) -> str:
    return f"{a}|{b}"


def _compare(spec: MetricSpec, first, second) -> float:
    if spec.swap_operands:
        first, second = second, first
    return spec.d(first, second)


# ---------------------------------------------------------------------------
# Group fairness
# ---------------------------------------------------------------------------

def _group_scores(spec: MetricSpec, dataset: GroupedDataset,
                  outputs: Mapping[str, ModelOutput], groups: Sequence[str],
                  on_undefined: str, skipped: list[str],
                  custom_scores: Mapping[str, float] | None) -> dict:
    scores = {}
    for g in groups:
        try:
            try:
                scores[g] = _score(spec, dataset.subset(g), outputs, dataset,
                                   custom_key=g, custom_scores=custom_scores)
            except UndefinedScoreError as e:
                _policy(e, f"group {g!r}", on_undefined, skipped)
        except _SkipSubset:
            pass
    return scores


def _record_phi(result: MetricResult, scores: Mapping[str, object]) -> None:
    for g, s in scores.items():
        if isinstance(s, (int, float)):
            result.phi_scores[g] = float(s)


def eval_group_pcm(spec: MetricSpec, dataset: GroupedDataset,
                   outputs: Mapping[str, ModelOutput], *,
                   on_undefined: str = "abort",
                   custom_scores: Mapping[str, float] | None = None) -> MetricResult:
    groups = _resolve_groups(spec, dataset)
    result = MetricResult(spec.name, spec.family, spec.mode, spec.phi.class_focus, None)
    scores = _group_scores(spec, dataset, outputs, groups, on_undefined,
                           result.skipped, custom_scores)
    _record_phi(result, scores)
    for g in groups:
        result.n_examples[g] = len(dataset.subset(g))
    total = 0.0
    for a, b in itertools.combinations(groups, 2):
        if a not in scores or b not in scores:
            continue
        try:
            try:
                contrib = _compare(spec, scores[a], scores[b])
            except UndefinedScoreError as e:
                _policy(e, f"pair {a!r}/{b!r}", on_undefined, result.skipped)
                continue
        except _SkipSubset:
            continue
        result.per_group[_pair_label(a, b)] = contrib
        result.n_examples[_pair_label(a, b)] = (
            len(dataset.subset(a)) + len(dataset.subset(b))
        )
        total += contrib
    n = normalizer_value(spec.normalizer, len(groups))
    result.value = total / n
    return result


def eval_group_vbcm(spec: MetricSpec, dataset: GroupedDataset,
                    outputs: Mapping[str, ModelOutput], *,
                    on_undefined: str = "abort",
                    custom_scores: Mapping[str, float] | None = None) -> MetricResult:
    groups = _resolve_groups(spec, dataset)
    result = MetricResult(spec.name, spec.family, spec.mode, spec.phi.class_focus, None)
    all_examples = dataset.examples
    for g in groups:
        sub = dataset.subset(g)
        result.n_examples[g] = len(sub)
        bg_kind = spec.background.kind
        if bg_kind == "all_examples":
            bg = all_examples
        elif bg_kind == "all_others":
            bg = tuple(ex for ex in all_examples if ex.group != g)
        elif bg_kind == "privileged":
            bg = dataset.subset(spec.background.name)
        else:
            raise EvaluationError(
                f"{spec.name}: source-example background is a counterfactual notion"
            )
        try:
            try:
                bg_score = _score(spec, bg, outputs, dataset,
                                  custom_key=f"background:{g}",
                                  custom_scores=custom_scores)
                g_score = _score(spec, sub, outputs, dataset,
                                 custom_key=g, custom_scores=custom_scores)
                contrib = spec.d(bg_score, g_score)
            except UndefinedScoreError as e:
                _policy(e, f"group {g!r}", on_undefined, result.skipped)
                continue
        except _SkipSubset:
            continue
        result.per_group[g] = contrib
        if isinstance(g_score, (int, float)):
            result.phi_scores[g] = float(g_score)
            result.background_scores[g] = float(bg_score)
    return result


def eval_group_bcm(spec: MetricSpec, dataset: GroupedDataset,
                   outputs: Mapping[str, ModelOutput], *,
                   on_undefined: str = "abort",
                   custom_scores: Mapping[str, float] | None = None) -> MetricResult:
    result = eval_group_vbcm(spec, dataset, outputs, on_undefined=on_undefined,
                             custom_scores=custom_scores)
    groups = _resolve_groups(spec, dataset)
    n = normalizer_value(spec.normalizer, len(groups))
    result.value = sum(result.per_group.values()) / n
    return result


def eval_group_mcm(spec: MetricSpec, dataset: GroupedDataset,
                   outputs: Mapping[str, ModelOutput], *,
                   on_undefined: str = "abort",
                   custom_scores: Mapping[str, float] | None = None) -> MetricResult:
    groups = _resolve_groups(spec, dataset)
    result = MetricResult(spec.name, spec.family, spec.mode, spec.phi.class_focus, None)
    scores = _group_scores(spec, dataset, outputs, groups, on_undefined,
                           result.skipped, custom_scores)
    _record_phi(result, scores)
    for g in groups:
        result.n_examples[g] = len(dataset.subset(g))
    retained = [scores[g] for g in groups if g in scores]
    if not retained:
        raise EvaluationError(f"{spec.name}: no group scores left to compare")
    result.value = spec.d(retained)
    return result


# ---------------------------------------------------------------------------
# Counterfactual fairness
# ---------------------------------------------------------------------------

def _sample_product(subsets: Sequence[Sequence[Example]], cap: int,
                    seed_material: int) -> tuple[tuple[str, ...], ...]:
    sizes = [len(s) for s in subsets]
    product_size = math.prod(sizes)

    def unrank(idx: int) -> tuple[str, ...]:
        parts = []
        for size, subset in zip(reversed(sizes), reversed(subsets)):
            idx, pos = divmod(idx, size)
            parts.append(subset[pos].id)
        return tuple(reversed(parts))

    if product_size <= cap:
        return tuple(unrank(i) for i in range(product_size))

    rng = np.random.Generator(np.random.PCG64(seed_material))
    if product_size <= 4 * cap:
        chosen = sorted(rng.permutation(product_size)[:cap].tolist())
    else:
        # Rejection sampling keeps memory flat for huge products.
        picked: set[int] = set()
        while len(picked) < cap:
            for idx in rng.integers(0, product_size, size=2 * cap).tolist():
                picked.add(idx)
                if len(picked) == cap:
                    break
        chosen = sorted(picked)
    return tuple(unrank(i) for i in chosen)


def _seed_material(seed: int, source_id: str) -> int:
    # Stable across runs, unlike hash(); varies per source.
    return seed ^ zlib.crc32(source_id.encode())


def sample_cartesian(dataset: CounterfactualDataset, source_id: str,
                     cap: int = CARTESIAN_CAP, seed: int = 0) -> tuple[tuple[str, ...], ...]:
    """Tuples of example ids, one per group, for one source.

    The full Cartesian product in lexicographic order when it fits the
    cap, otherwise ``cap`` distinct tuples sampled uniformly without
    replacement (deterministic for a given seed).
    """
    subsets = [dataset.variation_subset(source_id, g)
               for g in dataset.attribute.group_names]
    return _sample_product(subsets, cap, _seed_material(seed, source_id))


def _tc_filter_cf(spec: MetricSpec, dataset: CounterfactualDataset,
                  skipped: list[str]):
    """Restrict variation sets to the focus gold class for TC metrics.

    Sources whose subsets empty out are dropped (their gold class is not
    under study); the source average runs over the retained sources.
    """
    tc = spec.phi.tc
    focus = spec.phi.class_focus

    def keep(ex: Example) -> bool:
        if tc is None:
            return True
        if ex.tokens is not None:
            from .adapters import example_term_gold_class
            is_focus = example_term_gold_class(ex) == focus
        else:
            is_focus = ex.gold == focus
        return is_focus if tc == "eq" else not is_focus

    retained: list[str] = []
    filtered: dict[str, dict[str, tuple[Example, ...]]] = {}
    for sid in dataset.source_ids:
        subsets = {
            g: tuple(ex for ex in dataset.variation_subset(sid, g) if keep(ex))
            for g in dataset.attribute.group_names
        }
        if all(subsets.values()):
            retained.append(sid)
            filtered[sid] = subsets
        elif tc is not None:
            skipped.append(f"source {sid!r}: no variations with the studied gold class")
        else:
            raise EvaluationError(f"source {sid!r} has an empty variation subset")
    if not retained:
        raise UndefinedScoreError(
            "counterfactual evaluation", "no sources with the studied gold class"
        )
    return retained, filtered


def _tuple_scores(spec: MetricSpec, dataset: CounterfactualDataset,
                  outputs: Mapping[str, ModelOutput], sid: str,
                  subsets: Mapping[str, tuple[Example, ...]],
                  groups: Sequence[str], cap: int, seed: int,
                  result: MetricResult) -> list[list[float]]:
    """Per sampled tuple, the single-example score of each group's entry."""
    # Sampling runs on the tc-filtered subsets so every tuple is usable.
    ordered = [subsets[g] for g in groups]
    tuples = _sample_product(ordered, cap, _seed_material(seed, sid))
    if math.prod(len(s) for s in ordered) > cap:
        result.sample_caps_hit += 1
    by_id = {ex.id: ex for sub in ordered for ex in sub}
    rows = []
    for tup in tuples:
        rows.append([
            scoring.single_example_prob(spec.phi, by_id[eid], outputs[eid],
                                        dataset.tag_labels)
            for eid in tup
        ])
    return rows


def eval_cf_pcm(spec: MetricSpec, dataset: CounterfactualDataset,
                outputs: Mapping[str, ModelOutput], *,
                on_undefined: str = "abort", seed: int = 0,
                cap: int = CARTESIAN_CAP,
                custom_scores: Mapping[str, float] | None = None) -> MetricResult:
    groups = _resolve_groups(spec, dataset)
    result = MetricResult(spec.name, spec.family, spec.mode, spec.phi.class_focus, None)
    try:
        sources, filtered = _tc_filter_cf(spec, dataset, result.skipped)
    except UndefinedScoreError as e:
        if on_undefined == "abort":
            raise EvaluationError(str(e)) from e
        result.skipped.append(str(e))
        return result

    pair_sums: dict[tuple[str, str], float] = {}
    pair_counts: dict[tuple[str, str], int] = {}
    for sid in sources:
        subsets = filtered[sid]
        if spec.tuple_mode:
            rows = _tuple_scores(spec, dataset, outputs, sid, subsets, groups,
                                 cap, seed, result)
            for ia, ib in itertools.combinations(range(len(groups)), 2):
                pair = (groups[ia], groups[ib])
                vals = [_compare(spec, row[ia], row[ib]) for row in rows]
                pair_sums[pair] = pair_sums.get(pair, 0.0) + sum(vals) / len(vals)
                pair_counts[pair] = pair_counts.get(pair, 0) + 1
        else:
            scores = {}
            for g in groups:
                scores[g] = _score(spec, subsets[g], outputs, dataset,
                                   custom_key=f"{sid}:{g}", custom_scores=custom_scores)
            for a, b in itertools.combinations(groups, 2):
                try:
                    try:
                        contrib = _compare(spec, scores[a], scores[b])
                    except UndefinedScoreError as e:
                        _policy(e, f"source {sid!r} pair {a!r}/{b!r}",
                                on_undefined, result.skipped)
                        continue
                except _SkipSubset:
                    continue
                pair_sums[(a, b)] = pair_sums.get((a, b), 0.0) + contrib
                pair_counts[(a, b)] = pair_counts.get((a, b), 0) + 1

    n = normalizer_value(spec.normalizer, len(groups))
    total = 0.0
    for (a, b), s in pair_sums.items():
        mean = s / pair_counts[(a, b)]
        result.per_group[_pair_label(a, b)] = mean
        total += mean
    for g in groups:
        result.n_examples[g] = sum(len(filtered[sid][g]) for sid in sources)
    result.value = total / n
    return result


def _source_score(spec: MetricSpec, source: SourceExample,
                  outputs: Mapping[str, ModelOutput],
                  dataset: CounterfactualDataset) -> float:
    if source.id not in outputs:
        raise EvaluationError(
            f"{spec.name}: source {source.id!r} has no model output; template-mode "
            "data has no real source example, evaluate the pairwise conversion instead"
        )
    if dataset.task == "sequence":
        raise EvaluationError(f"{spec.name}: source-background scoring is not "
                              "defined for sequence labeling")
    out = outputs[source.id]
    if spec.phi.kind == "target_class_prob":
        if source.gold is None:
            raise EvaluationError(f"source {source.id!r} carries no gold label")
        return out.probs[source.gold]
    return out.probs[spec.phi.class_focus]


def eval_cf_vbcm(spec: MetricSpec, dataset: CounterfactualDataset,
                 outputs: Mapping[str, ModelOutput], *,
                 on_undefined: str = "abort", seed: int = 0,
                 cap: int = CARTESIAN_CAP,
                 custom_scores: Mapping[str, float] | None = None) -> MetricResult:
    if spec.background is None or spec.background.kind != "source_example":
        raise EvaluationError(f"{spec.name}: counterfactual background comparisons "
                              "compare against the source example")
    groups = _resolve_groups(spec, dataset)
    result = MetricResult(spec.name, spec.family, spec.mode, spec.phi.class_focus, None)
    try:
        sources, filtered = _tc_filter_cf(spec, dataset, result.skipped)
    except UndefinedScoreError as e:
        if on_undefined == "abort":
            raise EvaluationError(str(e)) from e
        result.skipped.append(str(e))
        return result

    sums = {g: 0.0 for g in groups}
    for sid in sources:
        src_score = _source_score(spec, dataset.source(sid), outputs, dataset)
        for g in groups:
            vals = [
                spec.d(src_score,
                       scoring.single_example_prob(spec.phi, ex, outputs[ex.id],
                                                   dataset.tag_labels))
                for ex in filtered[sid][g]
            ]
            sums[g] += sum(vals) / len(vals)
    for g in groups:
        result.per_group[g] = sums[g] / len(sources)
        result.n_examples[g] = sum(len(filtered[sid][g]) for sid in sources)
    return result


def eval_cf_bcm(spec: MetricSpec, dataset: CounterfactualDataset,
                outputs: Mapping[str, ModelOutput], *,
                on_undefined: str = "abort", seed: int = 0,
                cap: int = CARTESIAN_CAP,
                custom_scores: Mapping[str, float] | None = None) -> MetricResult:
    result = eval_cf_vbcm(spec, dataset, outputs, on_undefined=on_undefined,
                          seed=seed, cap=cap, custom_scores=custom_scores)
    groups = _resolve_groups(spec, dataset)
    n = normalizer_value(spec.normalizer, len(groups))
    if result.per_group:
        result.value = sum(result.per_group.values()) / n
    return result


def eval_cf_mcm(spec: MetricSpec, dataset: CounterfactualDataset,
                outputs: Mapping[str, ModelOutput], *,
                on_undefined: str = "abort", seed: int = 0,
                cap: int = CARTESIAN_CAP,
                custom_scores: Mapping[str, float] | None = None) -> MetricResult:
    groups = _resolve_groups(spec, dataset)
    result = MetricResult(spec.name, spec.family, spec.mode, spec.phi.class_focus, None)
    try:
        sources, filtered = _tc_filter_cf(spec, dataset, result.skipped)
    except UndefinedScoreError as e:
        if on_undefined == "abort":
            raise EvaluationError(str(e)) from e
        result.skipped.append(str(e))
        return result

    total = 0.0
    for sid in sources:
        if spec.tuple_mode:
            rows = _tuple_scores(spec, dataset, outputs, sid, filtered[sid],
                                 groups, cap, seed, result)
            vals = [spec.d(row) for row in rows]
            total += sum(vals) / len(vals)
        else:
            scores = [
                _score(spec, filtered[sid][g], outputs, dataset,
                       custom_key=f"{sid}:{g}", custom_scores=custom_scores)
                for g in groups
            ]
            total += spec.d(scores)
    for g in groups:
        result.n_examples[g] = sum(len(filtered[sid][g]) for sid in sources)
    result.value = total / len(sources)
    return result


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def _as_pcm(spec: MetricSpec) -> MetricSpec:
    """Pairwise conversion for source-background metrics on template data."""
    return MetricSpec(
        name=spec.name, family="pcm", mode="counterfactual", phi=spec.phi,
        d=spec.d, normalizer="pair_count", background=None,
        min_groups=spec.min_groups, max_groups=spec.max_groups,
        signed=spec.signed, swap_operands=spec.swap_operands, tuple_mode=True,
    )


def evaluate_metric(spec: MetricSpec,
                    dataset: GroupedDataset | CounterfactualDataset,
                    outputs: Mapping[str, ModelOutput], *,
                    class_focus: int | str | None = None,
                    on_undefined: str = "abort",
                    seed: int = 0,
                    cap: int = CARTESIAN_CAP,
                    custom_scores: Mapping[str, float] | None = None) -> MetricResult:
    """Evaluate one metric, overriding the class under study if given."""
    if class_focus is not None:
        spec = MetricSpec(
            name=spec.name, family=spec.family, mode=spec.mode,
            phi=spec.phi.with_focus(class_focus), d=spec.d,
            normalizer=spec.normalizer, background=spec.background,
            min_groups=spec.min_groups, max_groups=spec.max_groups,
            signed=spec.signed, swap_operands=spec.swap_operands,
            tuple_mode=spec.tuple_mode, pcm_convertible=spec.pcm_convertible,
        )
    if spec.mode == "group":
        if isinstance(dataset, CounterfactualDataset):
            dataset = dataset.flatten()
        fn = {"pcm": eval_group_pcm, "bcm": eval_group_bcm,
              "vbcm": eval_group_vbcm, "mcm": eval_group_mcm}[spec.family]
        return fn(spec, dataset, outputs, on_undefined=on_undefined,
                  custom_scores=custom_scores)
    if not isinstance(dataset, CounterfactualDataset):
        raise EvaluationError(
            f"{spec.name} is a counterfactual metric; it needs variation sets, "
            "not a flat grouped dataset"
        )
    if (spec.family in ("bcm", "vbcm") and spec.pcm_convertible
            and not all(s.id in outputs for s in dataset.sources)):
        spec = _as_pcm(spec)
    fn = {"pcm": eval_cf_pcm, "bcm": eval_cf_bcm,
          "vbcm": eval_cf_vbcm, "mcm": eval_cf_mcm}[spec.family]
    return fn(spec, dataset, outputs, on_undefined=on_undefined, seed=seed,
              cap=cap, custom_scores=custom_scores)
