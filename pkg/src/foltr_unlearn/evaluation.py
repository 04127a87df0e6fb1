"""Offline nDCG@k of a ranker on held-out queries."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from foltr_unlearn.ranker import LinearRanker, order_by_scores

logger = logging.getLogger(__name__)

_DISCOUNTS = np.array([1.0 / math.log2(p + 1) for p in range(1, 1025)])


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class EvalPoint:
    phase: str
    round: int
    ndcg10: float
    scenario: str = ""

    def __post_init__(self):
        if self.phase not in ("train", "unlearn"):
            raise ValueError(f"phase must be 'train' or 'unlearn', got {self.phase!r}")
        if not 0.0 <= self.ndcg10 <= 1.0:
            raise ValueError(f"nDCG must lie in [0, 1], got {self.ndcg10}")


def dcg_at_k(grades: Sequence[int], k: int = 10) -> float:
    """Exponential-gain DCG: sum (2^g - 1) / log2(p + 1) over the first k positions."""
    if k < 1:
        raise EvaluationError(f"k must be >= 1, got {k}")
    g = np.asarray(grades, dtype=np.float64)[:k]
    if g.size and g.min() < 0:
        raise EvaluationError("relevance grades must be non-negative")
    n = g.shape[0]
    if n > _DISCOUNTS.shape[0]:
        disc = np.array([1.0 / math.log2(p + 1) for p in range(1, n + 1)])
    else:
        disc = _DISCOUNTS[:n]
    # exactly rounded, so the value does not depend on summation order
    return math.fsum(((np.exp2(g) - 1.0) * disc).tolist())


def ndcg_from_scores(scores: np.ndarray, relevance: np.ndarray, k: int = 10) -> Optional[float]:
    ideal = dcg_at_k(np.sort(relevance)[::-1], k)
    if ideal == 0.0:
        return None
    return dcg_at_k(relevance[order_by_scores(scores)], k) / ideal


def ndcg_at_k(ranker: LinearRanker, group, k: int = 10) -> Optional[float]:
    """nDCG@k of the ranker's ordering, or ``None`` for a query with no relevant document."""
    return ndcg_from_scores(ranker.scores(group.doc_features), group.relevance, k)


class TestSetEvaluator:
    """Scores a whole test split in one matrix product; reused across evaluation rounds."""

    __test__ = False  # not a pytest class

    def __init__(self, test, k: int = 10):
        if len(test) == 0:
            raise EvaluationError("test set is empty")
        self.k = k
        self._features = np.concatenate([q.doc_features for q in test])
        bounds = np.cumsum([0] + [q.num_docs for q in test])
        self._slices = []
        skipped = 0
        for q, lo, hi in zip(test, bounds[:-1], bounds[1:]):
            ideal = dcg_at_k(np.sort(q.relevance)[::-1], k)
            if ideal == 0.0:
                skipped += 1
                continue
            self._slices.append((int(lo), int(hi), q.relevance, ideal))
        self.skipped = skipped
        if not self._slices:
            raise EvaluationError("every test query lacks relevant documents; nDCG is undefined")
        if skipped:
            logger.debug("skipping %d test queries without relevant documents", skipped)

    def __call__(self, weights: np.ndarray) -> float:
        scores = self._features @ weights
        total = 0.0
        for lo, hi, rel, ideal in self._slices:
            total += dcg_at_k(rel[order_by_scores(scores[lo:hi])], self.k) / ideal
        return total / len(self._slices)


def evaluate_model(ranker: LinearRanker, test, k: int = 10) -> float:
    return TestSetEvaluator(test, k)(ranker.weights)
