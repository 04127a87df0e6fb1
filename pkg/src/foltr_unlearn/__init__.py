"""Federated online learning to rank with client unlearning."""

from foltr_unlearn.dataset import FeatureDataset, QueryGroup, load_dataset, iterate_folds
from foltr_unlearn.ranker import LinearRanker, rank_descending, score

__all__ = [
    "FeatureDataset",
    "LinearRanker",
    "QueryGroup",
    "iterate_folds",
    "load_dataset",
    "rank_descending",
    "score",
]

__version__ = "0.1.0"
