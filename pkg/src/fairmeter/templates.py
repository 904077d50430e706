"""Template parsing and expansion into grouped / counterfactual datasets.

Classification templates are sentences with exactly one identity slot
(``{identity_adj}``, ``{a:identity_np}``, ``{person}``, ``{country}``,
``{country_adj}``); the slot's capitalization in the template controls the
capitalization of the filled term. Sequence-labeling templates are
pre-tokenized with one gold tag per token and a ``{country}`` token tagged
U-LOC, which is re-tagged to a B/I/L run when the country name spans
several tokens.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import TemplateError
from .model import (
    AttributeSpec,
    CounterfactualDataset,
    Example,
    GroupedDataset,
    IdentityTerm,
    ProtectedGroup,
    SourceExample,
)

SLOT_KINDS = ("identity_adj", "identity_np", "person", "country", "country_adj")

_SLOT_RE = re.compile(r"\{(?P<article>[aA]:)?(?P<name>[A-Za-z_]+)\}")

LABELS = ("neg", "neut", "pos")

# Class ids per task; the binary task has no neutral class, so neutral
# templates are dropped from binary expansions (and counted).
LABEL_CLASSES = {
    "binary": {"neg": 0, "pos": 1},
    "multiclass": {"neg": 0, "neut": 1, "pos": 2},
}

# Words whose spelling starts with a vowel letter but not a vowel sound
# (prefix match, lowercase). Deliberately small; it is a heuristic.
_A_BEFORE = ("euro", "ewe", "once", "one", "ufo", "uk", "uni", "ural",
             "usab", "usag", "use", "user", "usu", "utah", "ute", "utop")
# ... and the reverse: consonant letter, vowel sound.
_AN_BEFORE = ("heir", "honest", "honor", "honour", "hour", "x-")


def article_for(phrase: str) -> str:
    word = phrase.split()[0].lower()
    if word.startswith(_AN_BEFORE):
        return "an"
    if word[0] in "aeiou" and not word.startswith(_A_BEFORE):
        return "an"
    return "a"


@dataclass(frozen=True)
class Slot:
    kind: str
    article: bool
    capitalized: bool
    raw: str  # the literal "{...}" text to substitute


@dataclass(frozen=True)
class Template:
    id: str
    text: str | None = None
    label: str | None = None
    tokens: tuple[str, ...] | None = None
    tags: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.tokens is not None:
            if self.tags is None or len(self.tokens) != len(self.tags):
                raise TemplateError(f"template {self.id!r}: tokens/tags mismatch")
            return
        if self.text is None or self.label is None:
            raise TemplateError(f"template {self.id!r}: needs text and label")
        if self.label not in LABELS:
            raise TemplateError(
                f"template {self.id!r}: label {self.label!r} not in {LABELS}"
            )
        if len(self.slots) != 1:
            raise TemplateError(
                f"template {self.id!r}: expected exactly one identity slot, "
                f"found {len(self.slots)}"
            )

    @property
    def is_sequence(self) -> bool:
        return self.tokens is not None

    @property
    def slots(self) -> tuple[Slot, ...]:
        found = []
        for m in _SLOT_RE.finditer(self.text or ""):
            name = m.group("name")
            kind = name.lower()
            if kind not in SLOT_KINDS:
                raise TemplateError(f"template {self.id!r}: unknown slot {m.group(0)!r}")
            article = m.group("article") is not None
            capitalized = (m.group("article") or name)[0].isupper()
            found.append(Slot(kind=kind, article=article,
                              capitalized=capitalized or m.start() == 0,
                              raw=m.group(0)))
        return tuple(found)

    @property
    def country_slot_index(self) -> int:
        if not self.is_sequence:
            raise TemplateError(f"template {self.id!r} is not a sequence template")
        hits = [i for i, tok in enumerate(self.tokens)
                if tok.lower() == "{country}"]
        if len(hits) != 1:
            raise TemplateError(
                f"template {self.id!r}: expected exactly one {{country}} token"
            )
        return hits[0]


@dataclass(frozen=True)
class ExpansionConfig:
    attribute: AttributeSpec
    task: str = "binary"
    honor_slot_case: bool = True

    def class_of(self, label: str) -> int | None:
        return LABEL_CLASSES[self.task].get(label)


def _fillers(group: ProtectedGroup, kind: str) -> list[str]:
    """Surfaces a group offers for one slot kind."""
    wanted = {
        "identity_adj": "adjective",
        "identity_np": "noun-phrase",
        "person": "person-name",
        "country": "country-name",
        "country_adj": "country-adjective",
    }[kind]
    out = [t.surface for t in group.terms if t.kind == wanted]
    if kind == "country_adj":
        # Country adjectives may also ride along on the country-name term.
        out += [t.adjective for t in group.terms
                if t.kind == "country-name" and t.adjective]
    return out


def _render(template: Template, slot: Slot, surface: str,
            config: ExpansionConfig) -> str:
    filled = surface
    if slot.article:
        filled = f"{article_for(surface)} {surface}"
    if slot.capitalized and config.honor_slot_case:
        filled = filled[0].upper() + filled[1:]
    return (template.text or "").replace(slot.raw, filled, 1)


def expand(template: Template, config: ExpansionConfig) -> dict[str, list[Example]]:
    """One example per (group, compatible term); keyed by group name."""
    if template.is_sequence:
        return expand_ner(template, config)
    slot = template.slots[0]
    gold = config.class_of(template.label)
    out: dict[str, list[Example]] = {}
    for group in config.attribute.groups:
        surfaces = _fillers(group, slot.kind)
        if not surfaces:
            raise TemplateError(
                f"template {template.id!r} needs a {slot.kind!r} term but group "
                f"{group.name!r} has none"
            )
        out[group.name] = [
            Example(
                id=f"{template.id}.{group.name}.{i}",
                text=_render(template, slot, surface, config),
                group=group.name,
                template_id=template.id,
                gold=gold,
            )
            for i, surface in enumerate(surfaces)
        ]
    return out


def adjust_country_tags(n_tokens: int) -> list[str]:
    """U-LOC for one token, B-LOC (I-LOC...) L-LOC for longer names."""
    if n_tokens == 1:
        return ["U-LOC"]
    return ["B-LOC"] + ["I-LOC"] * (n_tokens - 2) + ["L-LOC"]


def expand_ner(template: Template,
               config: ExpansionConfig) -> dict[str, list[Example]]:
    idx = template.country_slot_index
    if template.tags[idx] != "U-LOC":
        raise TemplateError(
            f"template {template.id!r}: the {{country}} token must be tagged "
            f"U-LOC, found {template.tags[idx]!r}"
        )
    capitalized = template.tokens[idx][1].isupper() or idx == 0
    out: dict[str, list[Example]] = {}
    for group in config.attribute.groups:
        surfaces = _fillers(group, "country")
        if not surfaces:
            raise TemplateError(
                f"template {template.id!r} needs a country name but group "
                f"{group.name!r} has none"
            )
        examples = []
        for i, surface in enumerate(surfaces):
            name = surface[0].upper() + surface[1:] if capitalized and config.honor_slot_case else surface
            country_tokens = name.split()
            tokens = (list(template.tokens[:idx]) + country_tokens
                      + list(template.tokens[idx + 1:]))
            tags = (list(template.tags[:idx]) + adjust_country_tags(len(country_tokens))
                    + list(template.tags[idx + 1:]))
            examples.append(Example(
                id=f"{template.id}.{group.name}.{i}",
                text=" ".join(tokens),
                group=group.name,
                template_id=template.id,
                tokens=tuple(tokens),
                tags=tuple(tags),
                term_span=(idx, idx + len(country_tokens) - 1),
            ))
        out[group.name] = examples
    return out


def _usable(templates: Sequence[Template], config: ExpansionConfig
            ) -> tuple[list[Template], list[str]]:
    kept, skipped = [], []
    for t in templates:
        if not t.is_sequence and config.class_of(t.label) is None:
            skipped.append(t.id)
        else:
            kept.append(t)
    return kept, skipped


def _tag_label_set(examples: Iterable[Example]) -> tuple[str, ...]:
    labels = sorted({tag for ex in examples for tag in ex.tags or ()} - {"O"})
    return tuple(labels) + ("O",)


def expand_grouped(templates: Sequence[Template],
                   config: ExpansionConfig) -> GroupedDataset:
    kept, _ = _usable(templates, config)
    if not kept:
        raise TemplateError("no usable templates for this task")
    examples: list[Example] = []
    for t in kept:
        for group_examples in expand(t, config).values():
            examples.extend(group_examples)
    sequence = kept[0].is_sequence
    return GroupedDataset(
        attribute=config.attribute,
        examples=tuple(examples),
        num_classes=len(LABEL_CLASSES.get(config.task, {})) or 2,
        task=config.task,
        tag_labels=_tag_label_set(examples) if sequence else None,
    )


def expand_counterfactual(templates: Sequence[Template],
                          config: ExpansionConfig) -> CounterfactualDataset:
    kept, _ = _usable(templates, config)
    if not kept:
        raise TemplateError("no usable templates for this task")
    sources = []
    variation_sets = {}
    all_examples: list[Example] = []
    for t in kept:
        per_group = expand(t, config)
        text = t.text if t.text is not None else " ".join(t.tokens or ())
        sources.append(SourceExample(
            id=t.id, text=text,
            gold=None if t.is_sequence else config.class_of(t.label),
        ))
        variation_sets[t.id] = {g: tuple(v) for g, v in per_group.items()}
        for v in per_group.values():
            all_examples.extend(v)
    sequence = kept[0].is_sequence
    return CounterfactualDataset(
        attribute=config.attribute,
        sources=tuple(sources),
        variation_sets=variation_sets,
        num_classes=len(LABEL_CLASSES.get(config.task, {})) or 2,
        task=config.task,
        tag_labels=_tag_label_set(all_examples) if sequence else None,
    )


@dataclass
class DatasetCounts:
    """Expected expansion sizes, computed without expanding."""

    grouped_total: int
    variation_sets: int
    subset_sizes: dict[str, dict[str, int]] = field(default_factory=dict)
    skipped_templates: list[str] = field(default_factory=list)
    label_histogram: dict[str, int] = field(default_factory=dict)


def dataset_counts(attribute: AttributeSpec, templates: Sequence[Template],
                   task: str = "binary") -> DatasetCounts:
    config = ExpansionConfig(attribute=attribute, task=task)
    kept, skipped = _usable(templates, config)
    counts = DatasetCounts(grouped_total=0, variation_sets=len(kept),
                           skipped_templates=skipped)
    for t in templates:
        if not t.is_sequence:
            counts.label_histogram[t.label] = counts.label_histogram.get(t.label, 0) + 1
    for t in kept:
        kind = "country" if t.is_sequence else t.slots[0].kind
        sizes = {}
        for group in attribute.groups:
            n = len(_fillers(group, kind))
            if n == 0:
                raise TemplateError(
                    f"template {t.id!r} needs a {kind!r} term but group "
                    f"{group.name!r} has none"
                )
            sizes[group.name] = n
        counts.subset_sizes[t.id] = sizes
        counts.grouped_total += sum(sizes.values())
    return counts


def load_templates(path) -> tuple[Template, ...]:
    import json

    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, list) or not raw:
        raise TemplateError(f"{path}: expected a non-empty JSON array of templates")
    templates = []
    for obj in raw:
        templates.append(Template(
            id=obj["id"],
            text=obj.get("text"),
            label=obj.get("label"),
            tokens=tuple(obj["tokens"]) if "tokens" in obj else None,
            tags=tuple(obj["tags"]) if "tags" in obj else None,
        ))
    ids = [t.id for t in templates]
    if len(set(ids)) != len(ids):
        raise TemplateError(f"{path}: duplicate template ids")
    return tuple(templates)
