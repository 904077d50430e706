"""Shared builders turning plain oracle fixtures into package objects."""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from fairmeter.model import (
    AttributeSpec,
    CounterfactualDataset,
    Example,
    GroupedDataset,
    IdentityTerm,
    ModelOutput,
    ProtectedGroup,
    SourceExample,
)

from oracles import CFFixture, GroupFixture


def make_attribute(names, kind="adjective"):
    return AttributeSpec(
        name="attr",
        groups=tuple(
            ProtectedGroup(n, (IdentityTerm(f"{n}-term", kind),)) for n in names
        ),
    )


def build_grouped(fx: GroupFixture):
    attribute = make_attribute(fx.groups)
    examples, outputs = [], {}
    for grp in fx.groups:
        for i, (gold, pred, probs) in enumerate(fx.rows[grp]):
            eid = f"{grp}.{i}"
            examples.append(Example(id=eid, text=eid, group=grp,
                                    template_id="t", gold=gold))
            outputs[eid] = ModelOutput(example_id=eid, predicted=pred, probs=probs)
    task = "binary" if fx.num_classes == 2 else "multiclass"
    dataset = GroupedDataset(attribute=attribute, examples=tuple(examples),
                             num_classes=fx.num_classes, task=task)
    return dataset, outputs


def build_cf(fx: CFFixture, with_source_outputs=True):
    attribute = make_attribute(fx.groups)
    outputs = {}
    sources = []
    variation_sets = {}
    for s in fx.sources:
        sources.append(SourceExample(id=s, text=s, gold=fx.gold[s]))
        if with_source_outputs:
            probs = fx.source_probs[s]
            outputs[s] = ModelOutput(example_id=s,
                                     predicted=int(max(range(len(probs)),
                                                       key=probs.__getitem__)),
                                     probs=probs)
        per_group = {}
        for grp in fx.groups:
            examples = []
            for i, probs in enumerate(fx.variations[s][grp]):
                eid = f"{s}.{grp}.{i}"
                examples.append(Example(id=eid, text=eid, group=grp,
                                        template_id=s, gold=fx.gold[s]))
                outputs[eid] = ModelOutput(
                    example_id=eid,
                    predicted=int(max(range(len(probs)), key=probs.__getitem__)),
                    probs=probs,
                )
            per_group[grp] = tuple(examples)
        variation_sets[s] = per_group
    task = "binary" if fx.num_classes == 2 else "multiclass"
    dataset = CounterfactualDataset(
        attribute=attribute, sources=tuple(sources),
        variation_sets=variation_sets, num_classes=fx.num_classes, task=task,
    )
    return dataset, outputs
