"""Linear ranking model and weight-space updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class LinearRanker:
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1:
            raise ValueError("weights must be a vector")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")

    @classmethod
    def zeros(cls, num_features: int) -> "LinearRanker":
        return cls(np.zeros(num_features))

    @property
    def num_features(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "LinearRanker":
        return LinearRanker(self.weights.copy())

    def scores(self, doc_features: np.ndarray) -> np.ndarray:
        if doc_features.shape[-1] != self.num_features:
            raise ValueError(f"dimension mismatch: {doc_features.shape[-1]} features, {self.num_features} weights")
        return doc_features @ self.weights

    def __add__(self, delta: "ModelDelta") -> "LinearRanker":
        _check_dims(self.weights, delta.delta)
        return LinearRanker(self.weights + delta.delta)

    def __sub__(self, other: "LinearRanker") -> "ModelDelta":
        _check_dims(self.weights, other.weights)
        return ModelDelta(self.weights - other.weights)


@dataclass(eq=False)
class ModelDelta:
    """Difference between a client's local weights and the global weights it started from."""

    delta: np.ndarray

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=np.float64)
        if self.delta.ndim != 1:
            raise ValueError("delta must be a vector")
        if not np.all(np.isfinite(self.delta)):
            raise ValueError("delta must be finite")

    @classmethod
    def zeros(cls, num_features: int) -> "ModelDelta":
        return cls(np.zeros(num_features))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.delta))

    def __len__(self) -> int:
        return self.delta.shape[0]


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")


def score(ranker: LinearRanker, features) -> float:
    x = np.asarray(features, dtype=np.float64)
    if x.shape != ranker.weights.shape:
        raise ValueError(f"dimension mismatch: {x.shape} features, {ranker.weights.shape} weights")
    return float(ranker.weights @ x)


def order_by_scores(scores: np.ndarray) -> np.ndarray:
    """Indices by descending score; ties keep ascending original index."""
    return np.argsort(-scores, kind="stable")


def rank_descending(ranker: LinearRanker, group) -> np.ndarray:
    return order_by_scores(ranker.scores(group.doc_features))
