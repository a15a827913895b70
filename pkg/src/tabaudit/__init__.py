"""tabaudit: distribution auditing for tabular pre-training corpora.

Ingest corpora of delimited tables, embed them in fixed-dimension feature
spaces, measure pairwise distinguishability (discriminator AUC) and
coverage (k-NN recall/precision), generate synthetic tables from a
parameterized SCM prior, search the prior's parameter space, and correlate
prior proximity with downstream performance tables.
"""

__version__ = "0.1.0"

from .tables import Table, Column, ColumnKind, CorpusHandle, infer_column_kind, load_table
from .features import FeatureMatrix, FeatureSchema, SCHEMAS, featurize_corpus, full_features
from .coverage import CoverageParams, CoverageReport, coverage_pair, coverage_threshold
from .discriminator import AucReport, auc, bootstrap_auc
from .gbdt import GbdtParams, fit_gbdt
from .prior import PriorConfig, ScmType, TreeFamily, GenerationRequest, generate_table, generate_corpus
from .optimize import (
    SearchSpace,
    TrialRecord,
    GaParams,
    prior_search_space,
    grid_enumerate,
    triple_loss,
    tpe_optimize,
    ga_optimize,
)
from .analysis import (
    PerformanceTable,
    CorrelationReport,
    pearson,
    partial_correlation,
    detectable_r,
    proximity_scores,
)

__all__ = [
    "__version__",
    "Table",
    "Column",
    "ColumnKind",
    "CorpusHandle",
    "infer_column_kind",
    "load_table",
    "FeatureMatrix",
    "FeatureSchema",
    "SCHEMAS",
    "featurize_corpus",
    "full_features",
    "CoverageParams",
    "CoverageReport",
    "coverage_pair",
    "coverage_threshold",
    "AucReport",
    "auc",
    "bootstrap_auc",
    "GbdtParams",
    "fit_gbdt",
    "PriorConfig",
    "ScmType",
    "TreeFamily",
    "GenerationRequest",
    "generate_table",
    "generate_corpus",
    "SearchSpace",
    "TrialRecord",
    "GaParams",
    "prior_search_space",
    "grid_enumerate",
    "triple_loss",
    "tpe_optimize",
    "ga_optimize",
    "PerformanceTable",
    "CorrelationReport",
    "pearson",
    "partial_correlation",
    "detectable_r",
    "proximity_scores",
]
