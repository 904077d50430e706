"""Command-line interface: expand, evaluate, stats, list-metrics.

Exit codes: 0 on success, 2 when the dataset/prediction join fails
validation, 3 when evaluation itself fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import io as fio
from . import report as rep
from . import stats as st
from . import templates as tpl
from .engine import evaluate_metric
from .errors import FairmeterError
from .model import CounterfactualDataset, index_outputs, validate_counterfactual, validate_grouped
from .registry import REGISTRY, SELF_CONTAINED, registry_dump, registry_lookup

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_EVALUATION = 3


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--groups", required=True, help="groups JSON file")
    p.add_argument("--out", required=True, help="output path prefix")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairmeter",
        description="Expand templated evaluation data and score model "
                    "predictions with group and counterfactual fairness metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("expand", help="expand templates into datasets")
    _add_common(p)
    p.add_argument("--templates", required=True)
    p.add_argument("--task", choices=["binary", "multiclass", "sequence"],
                   default="binary")
    p.add_argument("--mode", choices=["grouped", "counterfactual", "both"],
                   default="both")

    p = sub.add_parser("evaluate", help="compute fairness metrics on predictions")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--metrics", default="all",
                   help="comma-separated registry names, or 'all'")
    p.add_argument("--classes", default=None,
                   help="comma-separated class ids (or entity classes)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--on-undefined", choices=["abort", "skip"], default="abort")
    p.add_argument("--format", choices=["csv", "json", "both"], default="both")

    p = sub.add_parser("stats", help="significance tests on counterfactual data")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--classes", default=None, help="single class focus")
    p.add_argument("--format", choices=["csv", "json", "both"], default="both")

    p = sub.add_parser("list-metrics", help="show the metric registry")
    p.add_argument("--json", action="store_true", dest="as_json",
                   help="dump full parametrizations as JSON")
    return parser


def _parse_class(token: str) -> int | str:
    token = token.strip()
    return int(token) if token.lstrip("-").isdigit() else token


def _default_classes(dataset) -> list[int | str]:
    if dataset.task == "sequence":
        flat = dataset.flatten() if isinstance(dataset, CounterfactualDataset) else dataset
        return list(flat.entity_classes)
    if dataset.num_classes == 2:
        return [1]
    return list(range(dataset.num_classes))


def _compatible(name: str, dataset) -> bool:
    spec = REGISTRY[name]
    n_groups = len(dataset.attribute.group_names)
    if spec.max_groups is not None and n_groups > spec.max_groups:
        return False
    if spec.mode == "counterfactual" and not isinstance(dataset, CounterfactualDataset):
        return False
    if dataset.task == "sequence":
        if spec.phi.kind in ("fpr", "tnr", "accuracy", "parity"):
            return False
        if spec.background is not None and spec.background.kind == "source_example":
            # Template sources carry no tokens; only the pairwise
            # conversion applies, which the dispatcher selects anyway.
            pass
    return True


def cmd_expand(args) -> int:
    attribute = fio.load_attribute(args.groups)
    templates = tpl.load_templates(args.templates)
    config = tpl.ExpansionConfig(attribute=attribute, task=args.task)
    counts = tpl.dataset_counts(attribute, templates, task=args.task)
    written = []
    if args.mode in ("grouped", "both"):
        dataset = tpl.expand_grouped(templates, config)
        path = f"{args.out}.grouped.jsonl"
        fio.save_grouped(dataset, path)
        written.append((path, len(dataset.examples)))
    if args.mode in ("counterfactual", "both"):
        dataset = tpl.expand_counterfactual(templates, config)
        path = f"{args.out}.counterfactual.jsonl"
        fio.save_counterfactual(dataset, path)
        written.append((path, len(dataset.all_examples())))

    print(f"attribute: {attribute.name} "
          f"({len(attribute.group_names)} groups)")
    if counts.label_histogram:
        hist = ", ".join(f"{k}={v}" for k, v in sorted(counts.label_histogram.items()))
        print(f"template labels: {hist}")
        if len(set(counts.label_histogram.values())) > 1:
            print("note: template classes are not balanced")
    if counts.skipped_templates:
        print(f"skipped {len(counts.skipped_templates)} template(s) without a "
              f"class under task {args.task!r}: "
              + ", ".join(counts.skipped_templates))
    print(f"expected grouped examples: {counts.grouped_total}; "
          f"variation sets: {counts.variation_sets}")
    for path, n in written:
        print(f"wrote {path} ({n} examples)")
    return EXIT_OK


def _load_eval_inputs(args):
    attribute = fio.load_attribute(args.groups)
    dataset = fio.load_dataset(args.dataset, attribute)
    outputs = fio.load_predictions(args.predictions)
    if isinstance(dataset, CounterfactualDataset):
        report = validate_counterfactual(dataset, outputs)
    else:
        report = validate_grouped(dataset, outputs)
    return dataset, outputs, report


def _write_report(report: rep.Report, out: str, fmt: str) -> list[str]:
    written = []
    if fmt in ("csv", "both"):
        path = f"{out}.csv"
        Path(path).write_text(rep.to_csv(report), encoding="utf-8")
        written.append(path)
    if fmt in ("json", "both"):
        path = f"{out}.json"
        Path(path).write_text(rep.to_json(report), encoding="utf-8")
        written.append(path)
    return written


def cmd_evaluate(args) -> int:
    dataset, outputs, validation = _load_eval_inputs(args)
    if not validation.ok:
        print(f"validation failed: {validation.summary()}", file=sys.stderr)
        return EXIT_VALIDATION
    outputs_by_id = index_outputs(outputs)

    if args.metrics == "all":
        names = [n for n in SELF_CONTAINED if _compatible(n, dataset)]
    else:
        names = [n.strip() for n in args.metrics.split(",") if n.strip()]
        for n in names:
            registry_lookup(n)

    if args.classes:
        classes = [_parse_class(t) for t in args.classes.split(",")]
    else:
        classes = _default_classes(dataset)

    evaluated = []
    try:
        for name in names:
            spec = registry_lookup(name)
            if spec.phi.kind == "target_class_prob":
                # Target-class scores are class-agnostic; evaluate once.
                result = evaluate_metric(
                    spec, dataset, outputs_by_id, on_undefined=args.on_undefined,
                    seed=args.seed)
                evaluated.append((spec, result))
                continue
            for cls in classes:
                result = evaluate_metric(
                    spec, dataset, outputs_by_id, class_focus=cls,
                    on_undefined=args.on_undefined, seed=args.seed)
                evaluated.append((spec, result))
    except FairmeterError as e:
        print(f"evaluation failed: {e}", file=sys.stderr)
        return EXIT_EVALUATION

    report = rep.normalize_rows(rep.build_report(evaluated))
    for path in _write_report(report, args.out, args.format):
        print(f"wrote {path}")
    for note in report.diagnostics:
        print(f"note: {note}")
    return EXIT_OK


def cmd_stats(args) -> int:
    dataset, outputs, validation = _load_eval_inputs(args)
    if not validation.ok:
        print(f"validation failed: {validation.summary()}", file=sys.stderr)
        return EXIT_VALIDATION
    if not isinstance(dataset, CounterfactualDataset):
        print("stats needs a counterfactual dataset (per-template variation sets)",
              file=sys.stderr)
        return EXIT_EVALUATION
    focus = _parse_class(args.classes) if args.classes else _default_classes(dataset)[0]
    try:
        row = st.run_significance(dataset, index_outputs(outputs), focus)
    except FairmeterError as e:
        print(f"stats failed: {e}", file=sys.stderr)
        return EXIT_EVALUATION

    if args.format in ("json", "both"):
        path = f"{args.out}.json"
        Path(path).write_text(json.dumps(row, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {path}")
    if args.format in ("csv", "both"):
        path = f"{args.out}.csv"
        lines = ["attribute,test,statistic,p_value,n_templates",
                 f"{row['attribute']},{row['test']},{row['statistic']!r},"
                 f"{row['p_value']!r},{row['n_templates']}"]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"wrote {path}")
    print(f"{row['attribute']}: {row['test']} statistic={row['statistic']:.6g} "
          f"p={row['p_value']:.6g}")
    return EXIT_OK


def cmd_list_metrics(args) -> int:
    if args.as_json:
        print(registry_dump())
        return EXIT_OK
    print(f"{'name':<18} {'family':<6} {'mode':<15} {'score':<18} "
          f"{'comparison':<13} groups")
    for spec in REGISTRY.values():
        groups = f"<= {spec.max_groups}" if spec.max_groups else "any >= 2"
        print(f"{spec.name:<18} {spec.family.upper():<6} {spec.mode:<15} "
              f"{spec.phi.kind:<18} {spec.d.kind:<13} {groups}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "expand":
            return cmd_expand(args)
        if args.command == "evaluate":
            return cmd_evaluate(args)
        if args.command == "stats":
            return cmd_stats(args)
        return cmd_list_metrics(args)
    except FairmeterError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION if args.command == "expand" else EXIT_EVALUATION


if __name__ == "__main__":
    sys.exit(main())
