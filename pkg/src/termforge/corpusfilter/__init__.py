"""Bitext filtering: pair features, a random-forest classifier, uncertainty
sampling for expert feedback, and threshold selection."""

from .features import FEATURE_NAMES, Resources, extract_features, feature_matrix, load_features, save_features
from .forest import (
    FilterReport,
    Forest,
    apply_filter,
    feedback_round,
    read_labels,
    select_uncertain,
    train_forest,
    write_candidates,
)
from .langid import LangId

__all__ = [
    "FEATURE_NAMES",
    "FilterReport",
    "Forest",
    "LangId",
    "Resources",
    "apply_filter",
    "extract_features",
    "feature_matrix",
    "feedback_round",
    "load_features",
    "read_labels",
    "save_features",
    "select_uncertain",
    "train_forest",
    "write_candidates",
]
