"""Compiled single-interaction PDGD step.

Mirrors ``pdgd.pdgd_step`` given the same random draws: Gumbel keys for the
ranking, then click and stop uniforms for the displayed positions.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None


def _logaddexp(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


def _expit(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _step(weights, features, relevance, gumbel, uniforms, click_prob, stop_prob, learning_rate, serp_size):
    n, nf = features.shape
    scores = np.empty(n)
    top = -np.inf
    for d in range(n):
        s = 0.0
        for f in range(nf):
            s += features[d, f] * weights[f]
        scores[d] = s
        if s > top:
            top = s

    m = min(serp_size, n)
    if n == 1:
        ranking = np.zeros(1, dtype=np.int64)
    else:
        keys = np.empty(n)
        for d in range(n):
            keys[d] = -(scores[d] + gumbel[d])
        ranking = np.argsort(keys)[:m]

    clicks = np.zeros(m, dtype=np.bool_)
    any_click = False
    for p in range(m):
        g = relevance[ranking[p]]
        if uniforms[p] < click_prob[g]:
            clicks[p] = True
            any_click = True
            if uniforms[m + p] < stop_prob[g]:
                break
    if not any_click:
        return weights

    # pools of the displayed list, in log space
    shown = np.empty(m)
    placed = np.zeros(n, dtype=np.bool_)
    for p in range(m):
        shown[p] = scores[ranking[p]] - top
        placed[ranking[p]] = True
    log_pool = np.empty(m + 1)
    acc = -np.inf
    for d in range(n):
        if not placed[d]:
            acc = _logaddexp(acc, scores[d] - top)
    log_pool[m] = acc
    for p in range(m - 1, -1, -1):
        acc = _logaddexp(acc, shown[p])
        log_pool[p] = acc

    out = weights.copy()
    for c in range(m):
        if not clicks[c]:
            continue
        for l in range(m):
            if clicks[l]:
                continue
            if l > c:
                # first unclicked below the click
                below = True
                for q in range(c + 1, l):
                    if not clicks[q]:
                        below = False
                        break
                if not below:
                    continue
            lo, hi = min(c, l), max(c, l)
            acc = _logaddexp(log_pool[hi + 1], shown[lo])
            log_ratio = acc - log_pool[hi]
            for p in range(hi - 1, lo, -1):
                acc = _logaddexp(acc, shown[p])
                log_ratio += acc - log_pool[p]
            rho = _expit(-log_ratio)
            wi, li = ranking[c], ranking[l]
            prob = _expit(scores[wi] - scores[li])
            coef = learning_rate * rho * prob * (1.0 - prob)
            for f in range(nf):
                out[f] += coef * (features[wi, f] - features[li, f])
    return out


if njit is not None:
    _logaddexp = njit(cache=True)(_logaddexp)
    _expit = njit(cache=True)(_expit)
    _step = njit(cache=True)(_step)
    AVAILABLE = True
else:  # pragma: no cover
    AVAILABLE = False


def compiled_step(weights, group, config, model, rng):
    """Same random-stream consumption as the reference step."""
    n = group.num_docs
    gumbel = rng.gumbel(size=n) if n > 1 else _EMPTY
    uniforms = rng.random(2 * min(config.serp_size, n))
    return _step(weights, group.doc_features, group.relevance, gumbel, uniforms,
                 model.click_prob, model.stop_prob, config.learning_rate, config.serp_size)


_EMPTY = np.zeros(0)
