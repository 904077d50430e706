"""Scoring functions: the base measurement computed on a subset of examples.

A score is either a scalar (rates, accuracy, F1, mean probability) or a
multiset of class probabilities. Undefined scores (vanishing denominators)
are first-class errors rather than silent zeros: templated evaluation data
normally prevents them, so hitting one usually means a data bug.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

from . import adapters
from .errors import EvaluationError, UndefinedScoreError
from .model import Example, ModelOutput

RATE_KINDS = ("fpr", "fnr", "tpr", "tnr", "f1", "accuracy", "recall", "parity")
SET_KINDS = ("prob_set", "prob_set_tc")
SCALAR_PROB_KINDS = ("target_class_prob", "mean_prob_set")
ALL_KINDS = RATE_KINDS + SET_KINDS + SCALAR_PROB_KINDS + ("custom_scalar",)

# Span matching has no true negatives, so FPR-family scores are not
# computable for sequence labeling.
SEQUENCE_RATE_KINDS = ("f1", "fnr", "tpr", "recall")


class ConfusionCounts(NamedTuple):
    tp: int
    fp: int
    tn: int
    fn: int


@dataclass(frozen=True)
class ScoringFunction:
    """A named score parametrization.

    ``class_focus`` is the class whose probability (or one-vs-rest
    reduction) is used; entity-class strings for sequence labeling.
    ``tc`` restricts prob sets to examples whose gold label equals ("eq")
    or differs from ("neq") the focus class.
    """

    kind: str
    class_focus: int | str | None = 1
    tc: str | None = None

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise EvaluationError(f"unknown scoring kind {self.kind!r}")
        if self.tc not in (None, "eq", "neq"):
            raise EvaluationError(f"unknown tc filter {self.tc!r}")
        if self.tc is not None and self.kind not in SET_KINDS:
            raise EvaluationError("tc filter only applies to probability sets")

    @property
    def returns_set(self) -> bool:
        return self.kind in SET_KINDS

    def with_focus(self, cls: int | str | None) -> "ScoringFunction":
        if cls is None:
            return self
        return ScoringFunction(kind=self.kind, class_focus=cls, tc=self.tc)


def confusion_counts(examples: Sequence[Example],
                     outputs: Mapping[str, ModelOutput],
                     positive_class: int) -> ConfusionCounts:
    """Prediction counts against one class (one-vs-rest for multi-class)."""
    tp = fp = tn = fn = 0
    for ex in examples:
        if ex.id not in outputs:
            raise EvaluationError(f"no model output for example {ex.id!r}")
        out = outputs[ex.id]
        gold = ex.gold == positive_class
        pred = out.predicted == positive_class
        if gold and pred:
            tp += 1
        elif gold:
            fn += 1
        elif pred:
            fp += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, tn, fn)


def rate_score(kind: str, counts: ConfusionCounts) -> float:
    """Scalar rate from confusion counts.

    F1 keeps the 2TP convention; the fully degenerate case (no positives
    anywhere) counts as a perfect 1.0, while TP=0 with errors present is 0.
    """
    tp, fp, tn, fn = counts
    if kind == "fpr":
        if fp + tn == 0:
            raise UndefinedScoreError("FPR", "FP+TN is zero (no gold-negative examples)")
        return fp / (fp + tn)
    if kind == "fnr":
        if fn + tp == 0:
            raise UndefinedScoreError("FNR", "FN+TP is zero (no gold-positive examples)")
        return fn / (fn + tp)
    if kind in ("tpr", "recall"):
        if tp + fn == 0:
            raise UndefinedScoreError("TPR", "TP+FN is zero (no gold-positive examples)")
        return tp / (tp + fn)
    if kind == "tnr":
        if tn + fp == 0:
            raise UndefinedScoreError("TNR", "TN+FP is zero (no gold-negative examples)")
        return tn / (tn + fp)
    if kind in ("accuracy", "parity"):
        total = tp + fp + tn + fn
        if total == 0:
            raise UndefinedScoreError("accuracy", "empty example set")
        return (tp + tn) / total
    if kind == "f1":
        if 2 * tp + fp + fn == 0:
            return 1.0
        return 2 * tp / (2 * tp + fp + fn)
    raise EvaluationError(f"not a rate kind: {kind!r}")


def _tc_keep(gold_is_focus: bool, tc: str | None) -> bool:
    if tc is None:
        return True
    return gold_is_focus if tc == "eq" else not gold_is_focus


def prob_set(examples: Sequence[Example], outputs: Mapping[str, ModelOutput],
             class_focus: int | str, tc: str | None = None,
             tag_labels: Sequence[str] | None = None) -> list[float]:
    """Class probabilities, one per matching example.

    For sequence labeling every token contributes one probability (the
    summed probability of the focus class' BILOU labels), and the tc
    filter applies per token against the gold tag's class. May be empty.
    """
    values: list[float] = []
    for ex in examples:
        out = outputs[ex.id]
        if ex.tokens is not None:
            if tag_labels is None:
                raise EvaluationError("sequence scoring requires the tag label set")
            for row, tag in zip(out.token_probs or (), ex.tags or ()):
                if _tc_keep(adapters.tag_class(tag) == class_focus, tc):
                    values.append(adapters.class_token_prob(row, tag_labels, class_focus))
        else:
            if _tc_keep(ex.gold == class_focus, tc):
                values.append(out.probs[class_focus])
    return values


def target_class_prob(example: Example, output: ModelOutput,
                      tag_labels: Sequence[str] | None = None) -> float:
    """Probability the model assigns to the example's own gold class."""
    if example.tokens is not None:
        if tag_labels is None:
            raise EvaluationError("sequence scoring requires the tag label set")
        cls = adapters.example_term_gold_class(example)
        return adapters.example_term_prob(example, output, tag_labels, cls)
    return output.probs[example.gold]


def single_example_prob(phi: ScoringFunction, example: Example, output: ModelOutput,
                        tag_labels: Sequence[str] | None = None) -> float:
    """Scalar probability score of one example under ``phi``.

    Used by counterfactual metrics whose score is defined on A = {x}; for
    sequence labeling this is the identity-term probability so that terms
    of different token lengths stay comparable.
    """
    if phi.kind == "target_class_prob":
        return target_class_prob(example, output, tag_labels)
    if phi.kind in SET_KINDS + ("mean_prob_set",):
        if example.tokens is not None:
            if tag_labels is None:
                raise EvaluationError("sequence scoring requires the tag label set")
            return adapters.example_term_prob(example, output, tag_labels, phi.class_focus)
        return output.probs[phi.class_focus]
    raise EvaluationError(f"{phi.kind!r} is not a single-example score")


def mean_prob(examples: Sequence[Example], outputs: Mapping[str, ModelOutput],
              class_focus: int | str, tc: str | None = None,
              tag_labels: Sequence[str] | None = None) -> float:
    values = prob_set(examples, outputs, class_focus, tc, tag_labels)
    if not values:
        raise UndefinedScoreError("mean probability", "empty probability set")
    return sum(values) / len(values)


def sequence_confusion(examples: Sequence[Example],
                       outputs: Mapping[str, ModelOutput],
                       cls: str) -> ConfusionCounts:
    """Exact-span-match counts for one entity class; TN is not defined for
    spans and stays 0."""
    tp = fp = fn = 0
    for ex in examples:
        out = outputs[ex.id]
        if out.predicted_tags is None:
            raise EvaluationError(f"example {ex.id!r}: predicted_tags required "
                                  "for prediction-based sequence scores")
        gold_spans = adapters.extract_spans(ex.tags or ())
        fixed, _ = adapters.repair_tags(out.predicted_tags)
        pred_spans = adapters.extract_spans(fixed)
        a, b, c = adapters.span_scores(gold_spans, pred_spans, cls)
        tp, fp, fn = tp + a, fp + b, fn + c
    return ConfusionCounts(tp, fp, 0, fn)


def score_subset(phi: ScoringFunction, examples: Sequence[Example],
                 outputs: Mapping[str, ModelOutput], *,
                 sequence: bool = False,
                 tag_labels: Sequence[str] | None = None,
                 custom_scores: Mapping[str, float] | None = None,
                 custom_key: str | None = None) -> float | list[float]:
    """Evaluate ``phi`` on a subset; scalar or probability multiset."""
    if phi.kind == "custom_scalar":
        if custom_scores is None or custom_key not in custom_scores:
            raise EvaluationError(
                f"custom scalar score missing for {custom_key!r}; pass custom_scores"
            )
        return custom_scores[custom_key]
    if phi.kind in RATE_KINDS:
        if sequence:
            if phi.kind not in SEQUENCE_RATE_KINDS:
                raise EvaluationError(
                    f"{phi.kind!r} is not defined for span matching "
                    f"(no true negatives); use one of {SEQUENCE_RATE_KINDS}"
                )
            counts = sequence_confusion(examples, outputs, phi.class_focus)
        else:
            counts = confusion_counts(examples, outputs, phi.class_focus)
        return rate_score(phi.kind, counts)
    if phi.kind in SET_KINDS:
        return prob_set(examples, outputs, phi.class_focus, phi.tc, tag_labels)
    if phi.kind == "mean_prob_set":
        return mean_prob(examples, outputs, phi.class_focus, phi.tc, tag_labels)
    if phi.kind == "target_class_prob":
        if len(examples) != 1:
            raise EvaluationError("target_class_prob is defined on single examples")
        return target_class_prob(examples[0], outputs[examples[0].id], tag_labels)
    raise EvaluationError(f"unknown scoring kind {phi.kind!r}")
