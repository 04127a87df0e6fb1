"""Pairwise Differentiable Gradient Descent for a linear ranker.

One interaction samples a result list from the Plackett-Luce distribution
over the ranker's scores, simulates clicks on it, turns the clicks into
pairwise preferences and takes a debiased pairwise gradient step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import expit

from foltr_unlearn.clicksim import ClickModelParams, simulate_session
from foltr_unlearn.ranker import LinearRanker


@dataclass(frozen=True)
class PdgdConfig:
    learning_rate: float = 0.1
    serp_size: int = 10

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.serp_size < 1:
            raise ValueError(f"serp_size must be >= 1, got {self.serp_size}")


def _log_pools(scores: np.ndarray, ranking: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Log softmax denominators along a displayed list, computed without subtraction.

    Returns ``log_pool`` of length k + 1, where ``log_pool[p]`` is the log of
    the summed exp-scores of every document not placed before position p
    (``log_pool[k]`` covers the undisplayed documents only), and ``runs`` with
    ``runs[p, q] = log sum_{r=p..q} exp(score of position r)``, -inf for q < p.
    """
    shifted = scores - scores.max()
    shown = shifted[ranking]
    k = shown.shape[0]
    hidden = np.ones(shifted.shape[0], dtype=bool)
    hidden[ranking] = False
    if hidden.any():
        hid = shifted[hidden]
        top = hid.max()
        log_hidden = top + np.log(np.exp(hid - top).sum())
    else:
        log_hidden = -np.inf
    upper = np.where(np.arange(k)[None, :] >= np.arange(k)[:, None], shown[None, :], -np.inf)
    runs = np.logaddexp.accumulate(upper, axis=1)
    log_pool = np.append(np.logaddexp(runs[:, -1], log_hidden), log_hidden)
    return log_pool, runs


def sample_ranking(scores: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Plackett-Luce sample of the top ``min(k, n)`` positions.

    Sorting scores perturbed by standard Gumbel noise draws the whole list
    with exactly the sequential softmax-without-replacement probabilities.
    """
    n = scores.shape[0]
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    keys = scores + rng.gumbel(size=n)
    k = min(k, n)
    if k < n:
        top = np.argpartition(-keys, k - 1)[:k]
        return top[np.argsort(-keys[top])]
    return np.argsort(-keys)


def sample_serp(ranker: LinearRanker, group, k: int, rng: np.random.Generator) -> np.ndarray:
    return sample_ranking(ranker.scores(group.doc_features), k, rng)


def log_list_probability(scores: np.ndarray, ranking: Sequence[int]) -> float:
    """Log Plackett-Luce probability of drawing ``ranking`` as the first positions.

    The pool at each position is every document not yet placed, including
    documents that never make it onto the page.
    """
    scores = np.asarray(scores, dtype=np.float64)
    ranking = np.asarray(ranking, dtype=np.int64)
    log_pool, _ = _log_pools(scores, ranking)
    shifted = scores - scores.max()
    return float(np.sum(shifted[ranking] - log_pool[:-1]))


def infer_preference_positions(clicks: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(winner, loser) positions: each click beats every unclicked position above
    it and the first unclicked position below it. Pairs come ordered by winner
    position, then loser position."""
    clicks = np.asarray(clicks, dtype=bool)
    n = clicks.shape[0]
    if not clicks.any() or clicks.all():
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    pos = np.arange(n)
    # first unclicked position at or after each position (n if none)
    first_unclicked = np.minimum.accumulate(np.where(clicks, n, pos)[::-1])[::-1]
    next_after = np.append(first_unclicked[1:], n)
    unclicked = ~clicks
    beats = clicks[:, None] & unclicked[None, :] & (
        (pos[None, :] < pos[:, None]) | (pos[None, :] == next_after[:, None]))
    win, lose = np.nonzero(beats)
    return win, lose


def infer_preferences(displayed: Sequence, clicks: Sequence[bool]) -> List[Tuple]:
    """Document-level ``(winner, loser)`` pairs inferred from clicks on ``displayed``."""
    clicks = np.asarray(clicks, dtype=bool)
    if clicks.shape[0] != len(displayed):
        raise ValueError("clicks must align with the displayed list")
    win, lose = infer_preference_positions(clicks)
    return [(displayed[w], displayed[l]) for w, l in zip(win.tolist(), lose.tolist())]


def debias_weights(scores: np.ndarray, ranking: np.ndarray,
                   pos_a: np.ndarray, pos_b: np.ndarray) -> np.ndarray:
    """rho = P(R*) / (P(R) + P(R*)) for each position pair, R* swapping the two.

    Only the pools at positions after the upper document and up to the lower
    one differ between R and R*: there the lower document is still in the
    pool of R*, the upper one is not.
    """
    log_pool, runs = _log_pools(scores, ranking)
    shown = (scores - scores.max())[ranking]
    lo = np.minimum(pos_a, pos_b)
    hi = np.maximum(pos_a, pos_b)
    k = ranking.shape[0]
    pos = np.arange(k)
    span = (pos[None, :] > lo[:, None]) & (pos[None, :] <= hi[:, None])
    # pool of R* at position p in the span: positions p..hi-1, everything after hi, and the upper document
    between = runs[:, np.maximum(hi - 1, 0)].T
    between = np.where(pos[None, :] <= (hi - 1)[:, None], between, -np.inf)
    swapped = np.logaddexp(np.logaddexp(between, log_pool[hi + 1][:, None]), shown[lo][:, None])
    diff = np.where(span, swapped - log_pool[None, :-1], 0.0)
    log_ratio = diff.sum(axis=1)  # log P(R) - log P(R*)
    return expit(-log_ratio)


def pair_debias_weight(ranker: LinearRanker, group, displayed: Sequence[int], pair: Tuple[int, int]) -> float:
    ranking = np.asarray(displayed, dtype=np.int64)
    where = {int(d): p for p, d in enumerate(ranking)}
    try:
        a, b = where[int(pair[0])], where[int(pair[1])]
    except KeyError:
        raise ValueError(f"pair {pair} is not on the displayed list") from None
    scores = ranker.scores(group.doc_features)
    return float(debias_weights(scores, ranking, np.array([a]), np.array([b]))[0])


def pairwise_gradient(scores: np.ndarray, features: np.ndarray, winners: np.ndarray,
                      losers: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """sum rho * d/dw P(winner > loser) for the pairwise softmax preference.

    d/dw [e^si / (e^si + e^sj)] = e^si e^sj / (e^si + e^sj)^2 * (x_i - x_j),
    written through the sigmoid of the score gap so it cannot overflow.
    """
    p = expit(scores[winners] - scores[losers])
    coef = rho * p * (1.0 - p)
    return coef @ (features[winners] - features[losers])


def pdgd_step(weights: np.ndarray, group, config: PdgdConfig, model: ClickModelParams,
              rng: np.random.Generator) -> np.ndarray:
    """New weight vector after one interaction; returns ``weights`` itself when no pair is inferred."""
    feats = group.doc_features
    scores = feats @ weights
    ranking = sample_ranking(scores, config.serp_size, rng)
    clicks = simulate_session(model, group.relevance[ranking], rng)
    win_pos, lose_pos = infer_preference_positions(clicks)
    if win_pos.size == 0:
        return weights
    rho = debias_weights(scores, ranking, win_pos, lose_pos)
    grad = pairwise_gradient(scores, feats, ranking[win_pos], ranking[lose_pos], rho)
    return weights + config.learning_rate * grad


def pdgd_update(ranker: LinearRanker, group, config: PdgdConfig, model: ClickModelParams,
                rng: np.random.Generator) -> LinearRanker:
    return LinearRanker(pdgd_step(ranker.weights, group, config, model, rng).copy())
