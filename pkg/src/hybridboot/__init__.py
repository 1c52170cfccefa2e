"""Hybrid bootstrap regularization: dropout-style corruption that
resamples features from other training points, plus a small deterministic
neural-net engine and tabular data expansion built around it."""

from .core import Rng, matmul, rng_new, rng_uniform
from .corruptor import (
    CorruptionRecord,
    CorruptionSpec,
    corrupt_minibatch,
    corrupt_minibatch_recorded,
    dropout_apply,
    hybrid_apply,
    partner_index,
    sample_level,
    sample_mask,
)
from .data import (
    Dataset,
    StandardizeStats,
    Table,
    load_csv,
    load_idx,
    standardize,
    stratified_split,
    stratified_subset,
    write_csv,
)
from .expander import ExpansionSpec, expand
from .metrics import CorrelationReport, filter_correlation

__version__ = "0.1.0"

__all__ = [
    "Rng", "matmul", "rng_new", "rng_uniform",
    "CorruptionRecord", "CorruptionSpec", "corrupt_minibatch",
    "corrupt_minibatch_recorded", "dropout_apply", "hybrid_apply",
    "partner_index", "sample_level", "sample_mask",
    "Dataset", "StandardizeStats", "Table", "load_csv", "load_idx",
    "standardize", "stratified_split", "stratified_subset", "write_csv",
    "ExpansionSpec", "expand",
    "CorrelationReport", "filter_correlation",
    "__version__",
]
