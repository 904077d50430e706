"""File formats: groups JSON, dataset JSONL, predictions JSONL.

Dataset files optionally start with a header line ``{"header": {...}}``
declaring task, class count and (for sequence labeling) the tag label
set. Counterfactual files additionally contain ``{"source": {...}}``
lines; example lines of counterfactual files carry a ``source_id``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

from .errors import SchemaError
from .model import (
    AttributeSpec,
    CounterfactualDataset,
    Example,
    GroupedDataset,
    ModelOutput,
    SourceExample,
)


def load_attribute(path: str | Path) -> AttributeSpec:
    with open(path, encoding="utf-8") as f:
        obj = json.load(f)
    return AttributeSpec.from_dict(obj)


def save_attribute(attribute: AttributeSpec, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(attribute.to_dict(), f, indent=2)
        f.write("\n")


def _example_from_dict(obj: dict, line_no: int) -> Example:
    try:
        return Example(
            id=obj["id"],
            text=obj["text"],
            group=obj["group"],
            template_id=obj.get("template_id", obj.get("source_id", "")),
            gold=obj.get("gold"),
            tokens=tuple(obj["tokens"]) if "tokens" in obj else None,
            tags=tuple(obj["tags"]) if "tags" in obj else None,
            term_span=tuple(obj["term_span"]) if obj.get("term_span") else None,
        )
    except KeyError as e:
        raise SchemaError(f"dataset line {line_no}: missing key {e}") from e


def _example_to_dict(ex: Example, source_id: str | None = None) -> dict:
    obj: dict = {"id": ex.id, "text": ex.text, "group": ex.group,
                 "template_id": ex.template_id}
    if source_id is not None:
        obj["source_id"] = source_id
    if ex.gold is not None:
        obj["gold"] = ex.gold
    if ex.tokens is not None:
        obj["tokens"] = list(ex.tokens)
        obj["tags"] = list(ex.tags or ())
    if ex.term_span is not None:
        obj["term_span"] = list(ex.term_span)
    return obj


def _read_lines(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise SchemaError(f"{path}: line {n} is not valid JSON: {e}") from e
    if not records:
        raise SchemaError(f"{path}: empty file")
    return records


def load_dataset(path: str | Path,
                 attribute: AttributeSpec) -> GroupedDataset | CounterfactualDataset:
    """Load a dataset JSONL; the shape (grouped vs counterfactual) is
    detected from the file content."""
    records = _read_lines(path)
    header: dict = {}
    sources: list[SourceExample] = []
    examples: list[tuple[Example, str | None]] = []
    for n, obj in enumerate(records, start=1):
        if "header" in obj:
            header = obj["header"]
        elif "source" in obj:
            s = obj["source"]
            sources.append(SourceExample(id=s["id"], text=s["text"], gold=s.get("gold")))
        else:
            examples.append((_example_from_dict(obj, n), obj.get("source_id")))

    task = header.get("task", "binary")
    num_classes = int(header.get("num_classes", 2))
    tag_labels = tuple(header["tag_labels"]) if "tag_labels" in header else None

    counterfactual = bool(sources) or any(sid is not None for _, sid in examples)
    if not counterfactual:
        return GroupedDataset(
            attribute=attribute,
            examples=tuple(ex for ex, _ in examples),
            num_classes=num_classes,
            task=task,
            tag_labels=tag_labels,
        )

    by_source: dict[str, dict[str, list[Example]]] = {}
    for ex, sid in examples:
        if sid is None:
            raise SchemaError(f"example {ex.id!r}: missing source_id in counterfactual file")
        by_source.setdefault(sid, {}).setdefault(ex.group, []).append(ex)
    if not sources:
        # Sources may be implicit when variations were built elsewhere.
        sources = [SourceExample(id=sid, text="") for sid in by_source]
    return CounterfactualDataset(
        attribute=attribute,
        sources=tuple(sources),
        variation_sets={
            sid: {g: tuple(v) for g, v in groups.items()}
            for sid, groups in by_source.items()
        },
        num_classes=num_classes,
        task=task,
        tag_labels=tag_labels,
    )


def _header_dict(dataset: GroupedDataset | CounterfactualDataset) -> dict:
    header = {"task": dataset.task, "num_classes": dataset.num_classes}
    if dataset.tag_labels:
        header["tag_labels"] = list(dataset.tag_labels)
    header["attribute"] = dataset.attribute.name
    return {"header": header}


def save_grouped(dataset: GroupedDataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(_header_dict(dataset)) + "\n")
        for ex in dataset.examples:
            f.write(json.dumps(_example_to_dict(ex)) + "\n")


def save_counterfactual(dataset: CounterfactualDataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(_header_dict(dataset)) + "\n")
        for s in dataset.sources:
            src: dict = {"id": s.id, "text": s.text}
            if s.gold is not None:
                src["gold"] = s.gold
            f.write(json.dumps({"source": src}) + "\n")
            for gname in dataset.attribute.group_names:
                for ex in dataset.variation_sets[s.id][gname]:
                    f.write(json.dumps(_example_to_dict(ex, source_id=s.id)) + "\n")


def load_predictions(path: str | Path) -> list[ModelOutput]:
    outputs = []
    for n, obj in enumerate(_read_lines(path), start=1):
        if "example_id" not in obj:
            raise SchemaError(f"{path}: line {n}: missing example_id")
        outputs.append(ModelOutput(
            example_id=obj["example_id"],
            predicted=obj.get("predicted"),
            probs=tuple(obj["probs"]) if "probs" in obj else None,
            token_probs=tuple(tuple(row) for row in obj["token_probs"])
            if "token_probs" in obj else None,
            predicted_tags=tuple(obj["predicted_tags"]) if "predicted_tags" in obj else None,
        ))
    return outputs


def save_predictions(outputs: Iterable[ModelOutput], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for o in outputs:
            obj: dict = {"example_id": o.example_id}
            if o.predicted is not None:
                obj["predicted"] = o.predicted
            if o.probs is not None:
                obj["probs"] = list(o.probs)
            if o.token_probs is not None:
                obj["token_probs"] = [list(r) for r in o.token_probs]
            if o.predicted_tags is not None:
                obj["predicted_tags"] = list(o.predicted_tags)
            f.write(json.dumps(obj) + "\n")
