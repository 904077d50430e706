"""Acceptance suite.

Each criterion prints one pass/fail line (visible with -s, and in the
failure report otherwise) and asserts at its stated tolerance.
"""

import json
import math
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from fairmeter.adapters import extract_spans
from fairmeter.cli import main
from fairmeter.comparison import mwu_gap, wasserstein1
from fairmeter.engine import evaluate_metric, sample_cartesian
from fairmeter.model import (
    AttributeSpec,
    Example,
    GroupedDataset,
    IdentityTerm,
    ModelOutput,
    ProtectedGroup,
)
from fairmeter.registry import REGISTRY, registry_lookup
from fairmeter.scoring import rate_score, sequence_confusion
from fairmeter.stats import friedman_test, wilcoxon_signed_rank
from fairmeter.templates import ExpansionConfig, Template, expand_ner

from conftest import build_cf, build_grouped, make_attribute
from oracles import (
    GroupFixture,
    brute_mwu_gap,
    oracle_cf_metric,
    oracle_group_metric,
    random_cf_fixture,
    random_group_fixture,
    w1_grid_oracle,
)
from test_registry import CF_ANY, CF_TWO, GROUP_ANY, GROUP_TWO
from test_report_cli import _write_predictions
from test_stats import (
    FRIEDMAN_8X4,
    FRIEDMAN_8X4_EXPECTED,
    FRIEDMAN_PERFECT,
    FRIEDMAN_PERFECT_EXPECTED,
    FRIEDMAN_TIES,
    FRIEDMAN_TIES_EXPECTED,
    WILCOXON_DOM_X,
    WILCOXON_DOM_Y,
    WILCOXON_EXPECTED,
    WILCOXON_TIES_X,
    WILCOXON_TIES_Y,
    WILCOXON_TIES_EXPECTED,
    WILCOXON_X,
    WILCOXON_Y,
)

DATA = Path(__file__).resolve().parents[1] / "src" / "fairmeter" / "data"

N_INSTANCES = 200


@contextmanager
def criterion(num, desc):
    try:
        yield
    except BaseException:
        print(f"[criterion {num:02d}] FAIL - {desc}")
        raise
    print(f"[criterion {num:02d}] PASS - {desc}")


# -- 1 ----------------------------------------------------------------------

def test_criterion_01_registry_oracle_equivalence():
    with criterion(1, "registry matches independent formula transcriptions "
                      f"on {N_INSTANCES} randomized instances per entry, 1e-9, <30s"):
        start = time.monotonic()
        rng = np.random.default_rng(20240801)
        pool_any = [random_group_fixture(rng) for _ in range(N_INSTANCES)]
        pool_two = [random_group_fixture(rng, two_groups=True)
                    for _ in range(N_INSTANCES)]
        pool_cf = [random_cf_fixture(rng) for _ in range(N_INSTANCES)]
        pool_cf_two = [random_cf_fixture(rng, two_groups=True)
                       for _ in range(N_INSTANCES)]
        built_any = [build_grouped(fx) for fx in pool_any]
        built_two = [build_grouped(fx) for fx in pool_two]
        built_cf = [build_cf(fx) for fx in pool_cf]
        built_cf_two = [build_cf(fx) for fx in pool_cf_two]

        checked = 0
        for name in GROUP_ANY + GROUP_TWO:
            fixtures, built = ((pool_any, built_any) if name in GROUP_ANY
                               else (pool_two, built_two))
            for fx, (ds, outs) in zip(fixtures, built):
                result = evaluate_metric(registry_lookup(name), ds, outs,
                                         class_focus=fx.focus)
                expected = oracle_group_metric(name, fx)
                if isinstance(expected, dict):
                    for g, v in expected.items():
                        assert abs(result.per_group[g] - v) < 1e-9, (name, g)
                else:
                    assert abs(result.value - expected) < 1e-9, name
                checked += 1
        for name in CF_ANY + CF_TWO:
            fixtures, built = ((pool_cf, built_cf) if name in CF_ANY
                               else (pool_cf_two, built_cf_two))
            for fx, (ds, outs) in zip(fixtures, built):
                result = evaluate_metric(registry_lookup(name), ds, outs,
                                         class_focus=fx.focus)
                expected = oracle_cf_metric(name, fx)
                if isinstance(expected, dict):
                    for g, v in expected.items():
                        assert abs(result.per_group[g] - v) < 1e-9, (name, g)
                else:
                    assert abs(result.value - expected) < 1e-9, name
                checked += 1

        elapsed = time.monotonic() - start
        assert checked == 29 * N_INSTANCES
        assert elapsed < 30, f"took {elapsed:.1f}s"


# -- 2 ----------------------------------------------------------------------

def _identical_group_fixture(n_groups):
    rng = np.random.default_rng(42)
    bank = []
    for _ in range(12):
        gold = int(rng.integers(0, 2))
        pred = int(rng.integers(0, 2))
        p = float(rng.random())
        bank.append((gold, pred, (1 - p, p)))
    # Every confusion cell present so no rate is undefined.
    bank += [(1, 1, (0.3, 0.7)), (1, 0, (0.6, 0.4)),
             (0, 1, (0.45, 0.55)), (0, 0, (0.8, 0.2))]
    groups = [f"g{i}" for i in range(n_groups)]
    fx = GroupFixture(groups=groups, rows={g: list(bank) for g in groups},
                      num_classes=2, focus=1)
    return build_grouped(fx)


def _identical_cf_fixture(n_groups):
    from oracles import CFFixture

    rng = np.random.default_rng(43)
    groups = [f"g{i}" for i in range(n_groups)]
    sources = [f"s{j}" for j in range(4)]
    gold, source_probs, variations = {}, {}, {}
    for j, s in enumerate(sources):
        gold[s] = j % 2
        p = float(rng.random())
        vec = (1 - p, p)
        source_probs[s] = vec  # model scores source and variations alike
        variations[s] = {g: [vec, vec] for g in groups}
    fx = CFFixture(groups=groups, sources=sources, gold=gold,
                   source_probs=source_probs, variations=variations,
                   num_classes=2, focus=1)
    return build_cf(fx)


def test_criterion_02_zero_bias_soundness():
    with criterion(2, "identical per-group behavior: difference metrics 0, "
                      "ratio metrics 1, exactly"):
        for name, spec in REGISTRY.items():
            if spec.phi.kind == "custom_scalar":
                continue
            n_groups = 2 if spec.max_groups == 2 else 3
            if spec.mode == "group":
                ds, outs = _identical_group_fixture(n_groups)
            else:
                ds, outs = _identical_cf_fixture(n_groups)
            result = evaluate_metric(spec, ds, outs)
            target = 1.0 if spec.d.kind == "ratio" else 0.0
            if result.value is not None:
                assert result.value == target, name
            for g, v in result.per_group.items():
                assert v == target, (name, g)


# -- 3 ----------------------------------------------------------------------

def _replicated_dataset(k):
    """k copies of two groups with equal F1 but different FPR/FNR mixes.

    Copy A: TP=2 FP=1 TN=1 FN=0 (F1 0.8, FPR 1/2, FNR 0).
    Copy B: TP=2 FP=0 TN=1 FN=1 (F1 0.8, FPR 0, FNR 1/3).
    """
    rows_a = [(1, 1, (0.4, 0.6)), (1, 1, (0.3, 0.7)), (0, 1, (0.45, 0.55)),
              (0, 0, (0.8, 0.2))]
    rows_b = [(1, 1, (0.4, 0.6)), (1, 1, (0.3, 0.7)), (0, 0, (0.7, 0.3)),
              (1, 0, (0.55, 0.45))]
    groups, rows = [], {}
    for i in range(k):
        for tag, bank in (("a", rows_a), ("b", rows_b)):
            name = f"{tag}{i}"
            groups.append(name)
            rows[name] = list(bank)
    fx = GroupFixture(groups=groups, rows=rows, num_classes=2, focus=1)
    return build_grouped(fx)


def test_criterion_03_normalization_invariance():
    with criterion(3, "starred variants invariant (<1e-9) under group "
                      "replication; unnormalized FPED/FNED grow"):
        base = {}
        for name in ("FPED", "FNED", "FPED*", "FNED*", "DisparityScore*",
                     "DisparityScore"):
            ds, outs = _replicated_dataset(1)
            base[name] = evaluate_metric(registry_lookup(name), ds, outs).value
        assert base["FPED"] > 0 and base["FNED"] > 0
        for k in (2, 3):
            ds, outs = _replicated_dataset(k)
            for name in ("FPED*", "FNED*", "DisparityScore*"):
                value = evaluate_metric(registry_lookup(name), ds, outs).value
                assert abs(value - base[name]) < 1e-9, (name, k)
            for name in ("FPED", "FNED"):
                value = evaluate_metric(registry_lookup(name), ds, outs).value
                assert value > base[name], (name, k)
                assert abs(value - k * base[name]) < 1e-9, (name, k)
            # The corrected variant stays below the unnormalized one here.
            fped = evaluate_metric(registry_lookup("FPED"), ds, outs).value
            fped_star = evaluate_metric(registry_lookup("FPED*"), ds, outs).value
            assert fped_star < fped


# -- 4 ----------------------------------------------------------------------

def test_criterion_04_wasserstein():
    with criterion(4, "W1: equal sizes = mean |sorted diff| to 1e-12; mixed "
                      "sizes match 1e4-point quantile integration to 1e-6"):
        rng = np.random.default_rng(44)
        for _ in range(150):
            n = int(rng.integers(1, 60))
            x = rng.random(n)
            y = rng.random(n)
            expected = float(np.mean(np.abs(np.sort(x) - np.sort(y))))
            assert abs(wasserstein1(x.tolist(), y.tolist()) - expected) < 1e-12
        sizes = [1, 2, 4, 5, 8, 10, 16, 20, 25, 40, 50]
        for _ in range(150):
            n, m = rng.choice(sizes, 2).tolist()
            x = rng.random(int(n)).tolist()
            y = rng.random(int(m)).tolist()
            assert abs(wasserstein1(x, y) - w1_grid_oracle(x, y)) < 1e-6


# -- 5 ----------------------------------------------------------------------

def test_criterion_05_mwu_gap():
    with criterion(5, "MWU gap matches brute-force pairwise counting exactly "
                      "for sizes <= 50, ties included; antisymmetry exact"):
        rng = np.random.default_rng(45)
        for _ in range(300):
            n, m = rng.integers(1, 51, 2).tolist()
            x = (rng.integers(0, 12, n) / 12).tolist()
            y = (rng.integers(0, 12, m) / 12).tolist()
            assert mwu_gap(x, y) == brute_mwu_gap(x, y)
            assert mwu_gap(x, y) == -mwu_gap(y, x)


# -- 6 ----------------------------------------------------------------------

def test_criterion_06_statistics_oracles():
    with criterion(6, "Friedman and Wilcoxon match precomputed oracle values "
                      "to 1e-6; fully tied matrix gives p = 1"):
        for matrix, (stat_e, p_e) in (
            (FRIEDMAN_PERFECT, FRIEDMAN_PERFECT_EXPECTED),
            (FRIEDMAN_TIES, FRIEDMAN_TIES_EXPECTED),
            (FRIEDMAN_8X4, FRIEDMAN_8X4_EXPECTED),
        ):
            stat, p = friedman_test(matrix)
            assert abs(stat - stat_e) < 1e-6
            assert abs(p - p_e) < 1e-6
        assert friedman_test([[0.2, 0.2, 0.2]] * 6) == (0.0, 1.0)

        for x, y, (stat_e, p_e) in (
            (WILCOXON_X, WILCOXON_Y, WILCOXON_EXPECTED),
            (WILCOXON_DOM_X, WILCOXON_DOM_Y, (0.0, None)),
            (WILCOXON_TIES_X, WILCOXON_TIES_Y, WILCOXON_TIES_EXPECTED),
        ):
            stat, p = wilcoxon_signed_rank(x, y)
            assert abs(stat - stat_e) < 1e-6
            if p_e is None:
                assert p < 0.001
            else:
                assert abs(p - p_e) < 1e-6


# -- 7 ----------------------------------------------------------------------

def test_criterion_07_expansion_counts_and_sampling():
    with criterion(7, "60 templates x (3,3) terms -> 360 grouped examples and "
                      "60 (3,3) variation sets; Cartesian sampling "
                      "min(product, 100), distinct, seeded"):
        from fairmeter.io import load_attribute
        from fairmeter.templates import (
            dataset_counts,
            expand_counterfactual,
            expand_grouped,
            load_templates,
        )

        attribute = load_attribute(DATA / "gender_names_groups.json")
        templates = load_templates(DATA / "name_templates.json")
        assert len(templates) == 60
        config = ExpansionConfig(attribute=attribute, task="multiclass")

        counts = dataset_counts(attribute, templates, task="multiclass")
        grouped = expand_grouped(templates, config)
        cf = expand_counterfactual(templates, config)
        assert counts.grouped_total == len(grouped.examples) == 360
        assert counts.variation_sets == len(cf.sources) == 60
        for sid in cf.source_ids:
            assert len(cf.variation_subset(sid, "female")) == 3
            assert len(cf.variation_subset(sid, "male")) == 3

        sid = cf.source_ids[0]
        tuples = sample_cartesian(cf, sid, cap=100, seed=3)
        assert len(tuples) == 9 == len(set(tuples))  # product below the cap

        from oracles import CFFixture

        big = CFFixture(
            groups=["a", "b"], sources=["s"], gold={"s": 1},
            source_probs={"s": (0.5, 0.5)},
            variations={"s": {g: [(0.5, 0.5)] * 20 for g in ("a", "b")}},
            num_classes=2, focus=1,
        )
        ds, _ = build_cf(big, with_source_outputs=False)
        sampled = sample_cartesian(ds, "s", cap=100, seed=5)
        assert len(sampled) == 100 == len(set(sampled))
        assert sample_cartesian(ds, "s", cap=100, seed=5) == sampled


# -- 8 ----------------------------------------------------------------------

def test_criterion_08_ner_adapter():
    with criterion(8, "country slot re-tagging, BILOU probability summation, "
                      "exact span F1 on a hand-built fixture"):
        attribute = AttributeSpec("nat", (
            ProtectedGroup("a", (IdentityTerm("France", "country-name"),
                                 IdentityTerm("New Zealand", "country-name"))),
            ProtectedGroup("b", (IdentityTerm("Madagascar", "country-name"),)),
        ))
        template = Template(
            id="t", tokens=("Flights", "to", "{country}", "resumed", "."),
            tags=("O", "O", "U-LOC", "O", "O"),
        )
        out = expand_ner(template, ExpansionConfig(attribute=attribute,
                                                   task="sequence"))
        nz = out["a"][1]
        assert nz.tokens[2:4] == ("New", "Zealand")
        assert nz.tags[2:4] == ("B-LOC", "L-LOC")

        # Summed class probabilities and P(O) add to 1 per token.
        from fairmeter.adapters import class_token_prob

        labels = ("B-LOC", "I-LOC", "L-LOC", "U-LOC", "B-PER", "L-PER", "O")
        rng = np.random.default_rng(46)
        for _ in range(100):
            row = rng.random(len(labels))
            row = (row / row.sum()).tolist()
            total = (class_token_prob(row, labels, "LOC")
                     + class_token_prob(row, labels, "PER")
                     + row[-1])
            assert abs(total - 1.0) <= 1e-6

        # Hand-built 5-sentence span fixture: TP=2, FP=3, FN=3.
        gold_tags = [
            ("O", "O", "U-LOC", "O"),
            ("B-LOC", "L-LOC", "O"),
            ("O", "U-LOC", "O"),
            ("O", "O", "O", "O"),
            ("O", "B-LOC", "I-LOC", "L-LOC"),
        ]
        pred_tags = [
            ("O", "O", "U-LOC", "O"),
            ("B-LOC", "L-LOC", "O"),
            ("U-LOC", "O", "O"),
            ("O", "O", "O", "U-LOC"),
            ("O", "U-LOC", "O", "O"),
        ]
        attr2 = make_attribute(("a", "b"))
        examples, outputs = [], {}
        width = 5  # tag label set below
        seq_labels = ("B-LOC", "I-LOC", "L-LOC", "U-LOC", "O")
        for i, (g, p) in enumerate(zip(gold_tags, pred_tags)):
            eid = f"e{i}"
            examples.append(Example(id=eid, text=eid, group="a", template_id="t",
                                    tokens=tuple(f"w{j}" for j in range(len(g))),
                                    tags=g))
            uniform = tuple(tuple(1 / width for _ in range(width)) for _ in g)
            outputs[eid] = ModelOutput(example_id=eid, predicted_tags=p,
                                       token_probs=uniform)
        ds = GroupedDataset(attribute=attr2, examples=tuple(examples),
                            task="sequence", tag_labels=seq_labels)
        counts = sequence_confusion(list(ds.examples), outputs, "LOC")
        assert (counts.tp, counts.fp, counts.fn) == (2, 3, 3)
        assert rate_score("f1", counts) == 2 * 2 / (2 * 2 + 3 + 3)
        assert rate_score("fnr", counts) == 3 / 5


# -- 9 ----------------------------------------------------------------------

def test_criterion_09_signed_metric_direction():
    with criterion(9, "group with uniformly lower positive-gold probabilities "
                      "gets PosAvgEG exactly -0.5"):
        fx = GroupFixture(groups=["low", "m1", "m2"], rows={
            "low": [(1, 1, (0.9, 0.1)), (1, 1, (0.8, 0.2)), (0, 0, (0.6, 0.4))],
            "m1": [(1, 1, (0.3, 0.7)), (1, 1, (0.2, 0.8)), (0, 0, (0.6, 0.4))],
            "m2": [(1, 1, (0.4, 0.6)), (1, 1, (0.1, 0.9)), (0, 0, (0.6, 0.4))],
        }, num_classes=2, focus=1)
        ds, outs = build_grouped(fx)
        result = evaluate_metric(registry_lookup("PosAvgEG"), ds, outs)
        assert result.per_group["low"] == -0.5
        assert result.per_group["m1"] > 0
        assert result.per_group["m2"] > 0


# -- 10 ---------------------------------------------------------------------

def _pipeline(workdir: Path) -> list[Path]:
    groups = DATA / "gender_names_groups.json"
    templates = DATA / "name_templates.json"
    assert main(["expand", "--groups", str(groups), "--templates",
                 str(templates), "--task", "binary", "--mode", "both",
                 "--out", str(workdir / "data")]) == 0
    cf_path = workdir / "data.counterfactual.jsonl"
    preds = workdir / "preds.jsonl"
    _write_predictions(cf_path, preds, groups,
                       skew={"female": 0.06, "male": -0.06}, seed=13)
    assert main(["evaluate", "--groups", str(groups), "--dataset", str(cf_path),
                 "--predictions", str(preds), "--seed", "7",
                 "--out", str(workdir / "report")]) == 0
    assert main(["stats", "--groups", str(groups), "--dataset", str(cf_path),
                 "--predictions", str(preds),
                 "--out", str(workdir / "stats")]) == 0
    return [workdir / "data.grouped.jsonl", cf_path, preds,
            workdir / "report.csv", workdir / "report.json",
            workdir / "stats.csv", workdir / "stats.json"]


def test_criterion_10_end_to_end_determinism(tmp_path):
    with criterion(10, "expand -> evaluate -> stats on the shipped sample is "
                       "byte-identical across runs and finishes in <60s"):
        start = time.monotonic()
        run1 = tmp_path / "run1"
        run2 = tmp_path / "run2"
        run1.mkdir()
        run2.mkdir()
        files1 = _pipeline(run1)
        files2 = _pipeline(run2)
        for f1, f2 in zip(files1, files2):
            assert f1.read_bytes() == f2.read_bytes(), f1.name
        elapsed = time.monotonic() - start
        assert elapsed < 60, f"took {elapsed:.1f}s"
        report = json.loads((run1 / "report.json").read_text())
        assert report["rows"], "report should not be empty"
