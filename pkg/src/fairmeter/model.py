"""Core data model: sensitive attributes, evaluation examples, datasets, model outputs.

All types are immutable after construction and joins between datasets and
prediction files go through example ids, never positions, so shuffled
prediction files are handled correctly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import SchemaError, UnknownNameError

TERM_KINDS = (
    "adjective",
    "noun-phrase",
    "person-name",
    "country-name",
    "country-adjective",
)

TASKS = ("binary", "multiclass", "sequence")

PROB_SUM_TOL = 1e-6


@dataclass(frozen=True)
class IdentityTerm:
    """A surface form expressing membership in a protected group.

    ``adjective`` holds the demonym for country-name terms (e.g. the
    adjective used when a template asks for the adjectival form of the
    country), since those are supplied as data rather than derived.
    """

    surface: str
    kind: str = "noun-phrase"
    adjective: str | None = None

    def __post_init__(self):
        if not self.surface:
            raise SchemaError("identity term surface must be non-empty")
        if self.kind not in TERM_KINDS:
            raise SchemaError(
                f"unknown term kind {self.kind!r}; expected one of {TERM_KINDS}"
            )


@dataclass(frozen=True)
class ProtectedGroup:
    name: str
    terms: tuple[IdentityTerm, ...]

    def __post_init__(self):
        if not self.name:
            raise SchemaError("group name must be non-empty")
        if len(self.terms) < 1:
            raise SchemaError(f"group {self.name!r} has no identity terms")
        surfaces = [t.surface for t in self.terms]
        if len(set(surfaces)) != len(surfaces):
            dupes = sorted({s for s in surfaces if surfaces.count(s) > 1})
            raise SchemaError(f"duplicate term surfaces in group {self.name!r}: {dupes}")


@dataclass(frozen=True)
class AttributeSpec:
    """A sensitive attribute with its protected groups and identity terms.

    Group order is meaningful: non-commutative comparisons (signed
    differences, ratios) follow the declared order.
    """

    name: str
    groups: tuple[ProtectedGroup, ...]

    def __post_init__(self):
        if len(self.groups) < 2:
            raise SchemaError(f"attribute {self.name!r} needs at least 2 groups")
        names = [g.name for g in self.groups]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate group names in attribute {self.name!r}")

    @property
    def group_names(self) -> tuple[str, ...]:
        return tuple(g.name for g in self.groups)

    def group(self, name: str) -> ProtectedGroup:
        for g in self.groups:
            if g.name == name:
                return g
        raise UnknownNameError(
            f"unknown group {name!r} in attribute {self.name!r}; "
            f"groups are {list(self.group_names)}"
        )

    @classmethod
    def from_dict(cls, obj: Mapping) -> "AttributeSpec":
        try:
            groups = tuple(
                ProtectedGroup(
                    name=g["name"],
                    terms=tuple(
                        IdentityTerm(
                            surface=t["surface"],
                            kind=t.get("kind", "noun-phrase"),
                            adjective=t.get("adjective"),
                        )
                        for t in g["terms"]
                    ),
                )
                for g in obj["groups"]
            )
            return cls(name=obj["attribute"], groups=groups)
        except KeyError as e:
            raise SchemaError(f"groups file missing key: {e}") from e

    def to_dict(self) -> dict:
        return {
            "attribute": self.name,
            "groups": [
                {
                    "name": g.name,
                    "terms": [
                        {"surface": t.surface, "kind": t.kind}
                        | ({"adjective": t.adjective} if t.adjective else {})
                        for t in g.terms
                    ],
                }
                for g in self.groups
            ],
        }


@dataclass(frozen=True)
class Example:
    """One evaluation sentence.

    ``gold`` is the class id for classification tasks and None for sequence
    labeling, where ``tags`` carries the gold BILOU sequence. ``term_span``
    is the inclusive token range of the identity term (sequence tasks only).
    """

    id: str
    text: str
    group: str
    template_id: str
    gold: int | None = None
    tokens: tuple[str, ...] | None = None
    tags: tuple[str, ...] | None = None
    term_span: tuple[int, int] | None = None

    def __post_init__(self):
        if self.tokens is not None or self.tags is not None:
            if self.tokens is None or self.tags is None:
                raise SchemaError(f"example {self.id!r}: tokens and tags must come together")
            if len(self.tokens) != len(self.tags):
                raise SchemaError(
                    f"example {self.id!r}: {len(self.tokens)} tokens vs {len(self.tags)} tags"
                )
            if self.term_span is not None:
                lo, hi = self.term_span
                if not (0 <= lo <= hi < len(self.tokens)):
                    raise SchemaError(f"example {self.id!r}: term_span out of range")


def _check_examples(examples: tuple[Example, ...], attribute: AttributeSpec,
                    num_classes: int, task: str) -> None:
    if task not in TASKS:
        raise SchemaError(f"unknown task {task!r}; expected one of {TASKS}")
    known = set(attribute.group_names)
    seen_ids = set()
    for ex in examples:
        if ex.id in seen_ids:
            raise SchemaError(f"duplicate example id {ex.id!r}")
        seen_ids.add(ex.id)
        if ex.group not in known:
            raise UnknownNameError(
                f"example {ex.id!r} references unknown group {ex.group!r}"
            )
        if task == "sequence":
            if ex.tokens is None:
                raise SchemaError(f"example {ex.id!r}: sequence task requires tokens/tags")
        else:
            if ex.gold is None:
                raise SchemaError(f"example {ex.id!r}: classification task requires gold")
            if not 0 <= ex.gold < num_classes:
                raise SchemaError(
                    f"example {ex.id!r}: gold {ex.gold} outside 0..{num_classes - 1}"
                )


def _validate_gold_tags(examples: Iterable[Example]) -> None:
    # Gold tag sequences must be well-formed BILOU; malformed gold aborts.
    from .adapters import extract_spans

    for ex in examples:
        if ex.tags is not None:
            extract_spans(ex.tags)


@dataclass(frozen=True)
class GroupedDataset:
    """Evaluation set partitioned into per-group subsets, with gold labels."""

    attribute: AttributeSpec
    examples: tuple[Example, ...]
    num_classes: int = 2
    task: str = "binary"
    tag_labels: tuple[str, ...] | None = None
    index: Mapping[str, tuple[str, ...]] = field(init=False, compare=False)

    def __post_init__(self):
        _check_examples(self.examples, self.attribute, self.num_classes, self.task)
        if self.task == "sequence":
            if not self.tag_labels:
                raise SchemaError("sequence dataset requires tag_labels in its header")
            _validate_gold_tags(self.examples)
        idx: dict[str, list[str]] = {name: [] for name in self.attribute.group_names}
        for ex in self.examples:
            idx[ex.group].append(ex.id)
        object.__setattr__(
            self, "index", {k: tuple(sorted(v)) for k, v in idx.items()}
        )
        object.__setattr__(
            self, "_by_id", {ex.id: ex for ex in self.examples}
        )

    def subset(self, group: str) -> tuple[Example, ...]:
        """All examples of one protected group, stable order by id."""
        if group not in self.index:
            raise UnknownNameError(
                f"unknown group {group!r}; groups are {list(self.attribute.group_names)}"
            )
        by_id = getattr(self, "_by_id")
        return tuple(by_id[i] for i in self.index[group])

    def example(self, example_id: str) -> Example:
        by_id = getattr(self, "_by_id")
        if example_id not in by_id:
            raise UnknownNameError(f"unknown example id {example_id!r}")
        return by_id[example_id]

    @property
    def entity_classes(self) -> tuple[str, ...]:
        """Entity classes derivable from the tag label set (sequence tasks)."""
        if not self.tag_labels:
            return ()
        classes = []
        for label in self.tag_labels:
            if "-" in label:
                cls = label.split("-", 1)[1]
                if cls not in classes:
                    classes.append(cls)
        return tuple(classes)


@dataclass(frozen=True)
class SourceExample:
    """A pre-perturbation sentence or template underlying a variation set."""

    id: str
    text: str
    gold: int | None = None


@dataclass(frozen=True)
class CounterfactualDataset:
    """Source examples plus, per source, one variation subset per group.

    Every (source, group) subset must be non-empty: each group contributes
    at least one sentence variation for every source example.
    """

    attribute: AttributeSpec
    sources: tuple[SourceExample, ...]
    variation_sets: Mapping[str, Mapping[str, tuple[Example, ...]]]
    num_classes: int = 2
    task: str = "binary"
    tag_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        source_ids = [s.id for s in self.sources]
        if len(set(source_ids)) != len(source_ids):
            raise SchemaError("duplicate source ids")
        if set(source_ids) != set(self.variation_sets.keys()):
            missing = set(source_ids) ^ set(self.variation_sets.keys())
            raise SchemaError(
                f"sources and variation sets must correspond one-to-one; mismatch: {sorted(missing)}"
            )
        for sid in source_ids:
            subsets = self.variation_sets[sid]
            for gname in self.attribute.group_names:
                if not subsets.get(gname):
                    raise SchemaError(
                        f"source {sid!r} has no variations for group {gname!r}; "
                        "every group needs at least one variation per source"
                    )
        _check_examples(self.all_examples(), self.attribute, self.num_classes, self.task)
        if self.task == "sequence":
            if not self.tag_labels:
                raise SchemaError("sequence dataset requires tag_labels in its header")
            _validate_gold_tags(self.all_examples())

    @property
    def source_ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.sources)

    def source(self, source_id: str) -> SourceExample:
        for s in self.sources:
            if s.id == source_id:
                return s
        raise UnknownNameError(f"unknown source id {source_id!r}")

    def variation_subset(self, source_id: str, group: str) -> tuple[Example, ...]:
        if source_id not in self.variation_sets:
            raise UnknownNameError(f"unknown source id {source_id!r}")
        subsets = self.variation_sets[source_id]
        if group not in subsets:
            raise UnknownNameError(
                f"unknown group {group!r}; groups are {list(self.attribute.group_names)}"
            )
        return tuple(subsets[group])

    def all_examples(self) -> tuple[Example, ...]:
        out: list[Example] = []
        for s in self.sources:
            for gname in self.attribute.group_names:
                out.extend(self.variation_sets[s.id][gname])
        return tuple(out)

    def flatten(self) -> GroupedDataset:
        """Grouped view of all variations; template_id is preserved so
        per-template aggregation still works on the flat dataset."""
        return GroupedDataset(
            attribute=self.attribute,
            examples=self.all_examples(),
            num_classes=self.num_classes,
            task=self.task,
            tag_labels=self.tag_labels,
        )


@dataclass(frozen=True)
class ModelOutput:
    """Model predictions for one example.

    Classification outputs carry ``predicted`` and ``probs``; sequence
    outputs carry ``predicted_tags`` and per-token ``token_probs`` ordered
    to match the dataset's tag label set.
    """

    example_id: str
    predicted: int | None = None
    probs: tuple[float, ...] | None = None
    token_probs: tuple[tuple[float, ...], ...] | None = None
    predicted_tags: tuple[str, ...] | None = None


def index_outputs(outputs: Iterable[ModelOutput]) -> dict[str, ModelOutput]:
    out: dict[str, ModelOutput] = {}
    for o in outputs:
        if o.example_id in out:
            raise SchemaError(f"duplicate output for example {o.example_id!r}")
        out[o.example_id] = o
    return out


@dataclass
class ValidationReport:
    """Join problems between a dataset and a prediction file.

    Problems are collected, never raised, so one pass reports everything.
    """

    missing: list[str] = field(default_factory=list)
    orphans: list[str] = field(default_factory=list)
    duplicates: list[str] = field(default_factory=list)
    malformed: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.missing or self.orphans or self.duplicates or self.malformed)

    def summary(self) -> str:
        if self.ok:
            return "ok"
        parts = []
        for label, items in (
            ("missing outputs", self.missing),
            ("orphan outputs", self.orphans),
            ("duplicate outputs", self.duplicates),
            ("malformed outputs", self.malformed),
        ):
            if items:
                shown = ", ".join(items[:5]) + ("..." if len(items) > 5 else "")
                parts.append(f"{len(items)} {label} ({shown})")
        return "; ".join(parts)


def _check_output_shape(ex: Example, out: ModelOutput, num_classes: int,
                        task: str, tag_labels: tuple[str, ...] | None,
                        report: ValidationReport) -> None:
    eid = ex.id
    if task == "sequence":
        if out.token_probs is None:
            report.malformed.append(f"{eid}: token_probs required for sequence task")
            return
        if len(out.token_probs) != len(ex.tokens or ()):
            report.malformed.append(
                f"{eid}: {len(out.token_probs)} token_probs rows vs {len(ex.tokens or ())} tokens"
            )
            return
        width = len(tag_labels or ())
        for i, row in enumerate(out.token_probs):
            if len(row) != width:
                report.malformed.append(f"{eid}: token {i} has {len(row)} probs, expected {width}")
                return
            if any(p < 0 or p > 1 for p in row):
                report.malformed.append(f"{eid}: token {i} probability outside [0,1]")
                return
            if abs(sum(row) - 1.0) > PROB_SUM_TOL:
                report.malformed.append(f"{eid}: token {i} probabilities sum to {sum(row):.6f}")
                return
        if out.predicted_tags is not None and len(out.predicted_tags) != len(ex.tokens or ()):
            report.malformed.append(f"{eid}: predicted_tags length mismatch")
    else:
        if out.token_probs is not None:
            report.malformed.append(f"{eid}: token_probs given for a classification task")
            return
        if out.probs is None or out.predicted is None:
            report.malformed.append(f"{eid}: predicted and probs required")
            return
        if len(out.probs) != num_classes:
            report.malformed.append(
                f"{eid}: {len(out.probs)} probs, expected {num_classes}"
            )
            return
        if any(p < 0 or p > 1 for p in out.probs):
            report.malformed.append(f"{eid}: probability outside [0,1]")
            return
        if abs(sum(out.probs) - 1.0) > PROB_SUM_TOL:
            report.malformed.append(f"{eid}: probabilities sum to {sum(out.probs):.6f}")
            return
        if not 0 <= out.predicted < num_classes:
            report.malformed.append(f"{eid}: predicted class {out.predicted} out of range")


def validate_grouped(dataset: GroupedDataset,
                     outputs: Iterable[ModelOutput]) -> ValidationReport:
    """Check that outputs cover the dataset exactly once and look sane.

    An empty report means every example id has exactly one well-formed output.
    """
    report = ValidationReport()
    seen: dict[str, ModelOutput] = {}
    for o in outputs:
        if o.example_id in seen:
            report.duplicates.append(o.example_id)
            continue
        seen[o.example_id] = o
    example_ids = {ex.id for ex in dataset.examples}
    report.missing = sorted(example_ids - seen.keys())
    report.orphans = sorted(seen.keys() - example_ids)
    for ex in dataset.examples:
        out = seen.get(ex.id)
        if out is not None:
            _check_output_shape(ex, out, dataset.num_classes, dataset.task,
                                dataset.tag_labels, report)
    return report


def validate_counterfactual(dataset: CounterfactualDataset,
                            outputs: Iterable[ModelOutput]) -> ValidationReport:
    """Same checks as :func:`validate_grouped`, over all variations.

    Outputs keyed by a source id are treated as optional source-example
    scores (perturbation mode), not orphans.
    """
    report = ValidationReport()
    seen: dict[str, ModelOutput] = {}
    for o in outputs:
        if o.example_id in seen:
            report.duplicates.append(o.example_id)
            continue
        seen[o.example_id] = o
    example_ids = {ex.id for ex in dataset.all_examples()}
    source_ids = set(dataset.source_ids)
    report.missing = sorted(example_ids - seen.keys())
    report.orphans = sorted(seen.keys() - example_ids - source_ids)
    for ex in dataset.all_examples():
        out = seen.get(ex.id)
        if out is not None:
            _check_output_shape(ex, out, dataset.num_classes, dataset.task,
                                dataset.tag_labels, report)
    return report
