"""fairmeter: extrinsic fairness measurement for model outputs.

Expands templated evaluation data, ingests prediction files, and computes
fairness metrics as parametrizations (score, comparison, normalizer,
background) of three generalized comparisons - pairwise, background and
multi-group - in group and counterfactual variants, plus significance tests.
"""

from .comparison import (
    ComparisonFunction,
    abs_diff,
    mwu_gap,
    range_spread,
    ratio,
    signed_diff,
    std_dev,
    wasserstein1,
)
from .engine import (
    Background,
    MetricResult,
    MetricSpec,
    eval_cf_bcm,
    eval_cf_mcm,
    eval_cf_pcm,
    eval_cf_vbcm,
    eval_group_bcm,
    eval_group_mcm,
    eval_group_pcm,
    eval_group_vbcm,
    evaluate_metric,
    sample_cartesian,
)
from .errors import (
    EvaluationError,
    FairmeterError,
    SchemaError,
    TagSequenceError,
    TemplateError,
    UndefinedScoreError,
    UnknownNameError,
)
from .model import (
    AttributeSpec,
    CounterfactualDataset,
    Example,
    GroupedDataset,
    IdentityTerm,
    ModelOutput,
    ProtectedGroup,
    SourceExample,
    index_outputs,
    validate_counterfactual,
    validate_grouped,
)
from .registry import REGISTRY, metric_names, registry_dump, registry_lookup
from .scoring import ConfusionCounts, ScoringFunction
from .stats import (
    TemplateScoreMatrix,
    build_matrix,
    friedman_test,
    run_significance,
    wilcoxon_signed_rank,
)
from .templates import (
    ExpansionConfig,
    Template,
    dataset_counts,
    expand,
    expand_counterfactual,
    expand_grouped,
    expand_ner,
    load_templates,
)

__version__ = "0.1.0"
