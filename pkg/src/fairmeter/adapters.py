"""Task adapters: one-vs-rest reduction for multi-class classification and
BILOU span handling for sequence labeling.

Sequence labeling is treated as per-token classification for probability
scores (label probabilities of the same entity class are summed per token)
and as exact span matching for prediction scores.
"""

from __future__ import annotations

from typing import Iterable, Mapping, NamedTuple, Sequence

from .errors import TagSequenceError, UnknownNameError
from .model import Example, GroupedDataset, ModelOutput


class Span(NamedTuple):
    label: str
    start: int  # token index, inclusive
    end: int    # token index, inclusive


def split_tag(tag: str) -> tuple[str, str | None]:
    """'B-LOC' -> ('B', 'LOC'); 'O' -> ('O', None)."""
    if tag == "O":
        return "O", None
    if len(tag) > 2 and tag[1] == "-" and tag[0] in "BILU":
        return tag[0], tag[2:]
    raise TagSequenceError(f"unrecognized tag {tag!r}", -1)


def extract_spans(tags: Sequence[str]) -> tuple[Span, ...]:
    """Spans of a well-formed BILOU sequence; malformed input raises with
    the offending position."""
    spans: list[Span] = []
    open_label: str | None = None
    open_start = -1
    for i, tag in enumerate(tags):
        try:
            prefix, label = split_tag(tag)
        except TagSequenceError:
            raise TagSequenceError(f"unrecognized tag {tag!r}", i) from None
        if open_label is not None and prefix in ("O", "B", "U"):
            raise TagSequenceError(
                f"span {open_label} opened at {open_start} not closed before {tag!r}", i
            )
        if prefix == "O":
            continue
        if prefix == "U":
            spans.append(Span(label, i, i))
        elif prefix == "B":
            open_label, open_start = label, i
        elif prefix == "I":
            if open_label != label:
                raise TagSequenceError(f"I-{label} without matching B-{label}", i)
        elif prefix == "L":
            if open_label != label:
                raise TagSequenceError(f"L-{label} without matching B-{label}", i)
            spans.append(Span(label, open_start, i))
            open_label = None
    if open_label is not None:
        raise TagSequenceError(
            f"span {open_label} opened at {open_start} never closed", len(tags) - 1
        )
    return tuple(spans)


def repair_tags(tags: Sequence[str]) -> tuple[tuple[str, ...], bool]:
    """Conservative repair of a decoded tag sequence.

    Invalid I becomes B (opens a chain), invalid L becomes U, and chains
    interrupted before an L are closed at their last token. Returns the
    fixed sequence and whether anything changed; gold sequences should
    never go through here.
    """
    fixed = list(tags)
    open_label: str | None = None
    open_start = -1

    def close(last: int) -> None:
        nonlocal open_label
        if open_label is None:
            return
        if last == open_start:
            fixed[last] = f"U-{open_label}"
        else:
            fixed[last] = f"L-{open_label}"
        open_label = None

    for i, tag in enumerate(list(fixed)):
        try:
            prefix, label = split_tag(tag)
        except TagSequenceError:
            fixed[i] = "O"
            close(i - 1)
            continue
        if prefix == "O":
            close(i - 1)
        elif prefix == "U":
            close(i - 1)
        elif prefix == "B":
            close(i - 1)
            open_label, open_start = label, i
        elif prefix == "I":
            if open_label is None:
                fixed[i] = f"B-{label}"
                open_label, open_start = label, i
            elif open_label != label:
                close(i - 1)
                fixed[i] = f"B-{label}"
                open_label, open_start = label, i
        elif prefix == "L":
            if open_label is None:
                fixed[i] = f"U-{label}"
            elif open_label != label:
                close(i - 1)
                fixed[i] = f"U-{label}"
            else:
                open_label = None
    close(len(fixed) - 1)
    result = tuple(fixed)
    return result, result != tuple(tags)


def span_scores(gold_spans: Iterable[Span], pred_spans: Iterable[Span],
                label: str) -> tuple[int, int, int]:
    """Exact-match (TP, FP, FN) for one entity class."""
    gold = {s for s in gold_spans if s.label == label}
    pred = {s for s in pred_spans if s.label == label}
    tp = len(gold & pred)
    return tp, len(pred - gold), len(gold - pred)


def class_token_prob(prob_row: Sequence[float], tag_labels: Sequence[str],
                     cls: str) -> float:
    """Probability of an entity class at one token: the summed probability
    of all its BILOU labels."""
    total = 0.0
    for p, label in zip(prob_row, tag_labels):
        if label != "O" and label.split("-", 1)[1] == cls:
            total += p
    return total


def tag_class(tag: str) -> str | None:
    """Entity class of a gold tag; None for O."""
    prefix, label = split_tag(tag)
    return label


def identity_term_prob(token_prob_rows: Sequence[Sequence[float]],
                       tag_labels: Sequence[str], cls: str) -> float:
    """Mean class probability over the tokens of one identity term.

    Multi-token terms (e.g. multi-word country names) are averaged so that
    term length does not skew counterfactual comparisons.
    """
    if not token_prob_rows:
        raise UnknownNameError("identity term has an empty token range")
    probs = [class_token_prob(row, tag_labels, cls) for row in token_prob_rows]
    return sum(probs) / len(probs)


def example_term_prob(ex: Example, out: ModelOutput,
                      tag_labels: Sequence[str], cls: str) -> float:
    if ex.term_span is None:
        raise UnknownNameError(f"example {ex.id!r} has no identity-term span")
    lo, hi = ex.term_span
    rows = (out.token_probs or ())[lo:hi + 1]
    return identity_term_prob(rows, tag_labels, cls)


def example_term_gold_class(ex: Example) -> str:
    if ex.term_span is None or ex.tags is None:
        raise UnknownNameError(f"example {ex.id!r} has no identity-term span")
    cls = tag_class(ex.tags[ex.term_span[0]])
    if cls is None:
        raise UnknownNameError(f"example {ex.id!r}: identity term is tagged O")
    return cls


def one_vs_rest(dataset: GroupedDataset, outputs: Mapping[str, ModelOutput],
                cls: int) -> tuple[list[int], list[int], list[float]]:
    """Binarize a classification dataset against one class.

    Returns golds, predictions and class probabilities aligned to
    ``dataset.examples``. A binary dataset with cls=1 comes back unchanged.
    """
    if not 0 <= cls < dataset.num_classes:
        raise UnknownNameError(
            f"class {cls} outside 0..{dataset.num_classes - 1}"
        )
    golds, preds, probs = [], [], []
    for ex in dataset.examples:
        out = outputs[ex.id]
        golds.append(1 if ex.gold == cls else 0)
        preds.append(1 if out.predicted == cls else 0)
        probs.append(out.probs[cls])
    return golds, preds, probs
