"""Small generated LETOR-style dataset for desk-scale runs without licensed data."""

from __future__ import annotations

from pathlib import Path
from typing import List, Tuple

import numpy as np

from foltr_unlearn.dataset import FeatureDataset, QueryGroup, normalize_query

SYNTHETIC_FEATURES = 20


def _make_queries(rng: np.random.Generator, true_w: np.ndarray, num_queries: int, prefix: str,
                  min_docs: int, max_docs: int, noise: float) -> List[QueryGroup]:
    nf = true_w.shape[0]
    groups = []
    for q in range(num_queries):
        n = int(rng.integers(min_docs, max_docs + 1))
        x = rng.normal(size=(n, nf))
        latent = x @ true_w + noise * rng.normal(size=n)
        # ~10% highly relevant, ~25% partially relevant, relative to the query
        hi, mid = np.quantile(latent, [0.9, 0.65])
        grades = np.where(latent >= hi, 2, np.where(latent >= mid, 1, 0))
        groups.append(QueryGroup(f"{prefix}{q}", normalize_query(x), grades))
    return groups


def make_synthetic_fold(seed: int = 0, num_train: int = 300, num_test: int = 100,
                        num_features: int = SYNTHETIC_FEATURES, min_docs: int = 10, max_docs: int = 40,
                        noise: float = 4.0) -> Tuple[FeatureDataset, FeatureDataset]:
    """A (train, test) pair with 3-level grades driven by a hidden linear scorer plus noise."""
    rng = np.random.default_rng([seed, 7919])
    true_w = rng.normal(size=num_features)
    true_w[rng.random(num_features) < 0.3] = 0.0
    train = _make_queries(rng, true_w, num_train, "tr", min_docs, max_docs, noise)
    test = _make_queries(rng, true_w, num_test, "te", min_docs, max_docs, noise)
    return (FeatureDataset(tuple(train), num_features, 2, "train", normalized=True),
            FeatureDataset(tuple(test), num_features, 2, "test", normalized=True))


def synthetic_folds(num_folds: int = 5, seed: int = 0, **kwargs) -> List[Tuple[FeatureDataset, FeatureDataset]]:
    return [make_synthetic_fold(seed * 1000 + f, **kwargs) for f in range(num_folds)]


def write_synthetic_root(root, num_folds: int = 5, seed: int = 0, **kwargs) -> Path:
    """Write folds as ``Fold<i>/{train,vali,test}.txt``; vali duplicates test."""
    root = Path(root)
    for i, (train, test) in enumerate(synthetic_folds(num_folds, seed, **kwargs), start=1):
        d = root / f"Fold{i}"
        d.mkdir(parents=True, exist_ok=True)
        train.write_letor(d / "train.txt")
        test.write_letor(d / "test.txt")
        test.write_letor(d / "vali.txt")
    return root
