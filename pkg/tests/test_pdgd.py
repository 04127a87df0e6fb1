import itertools
import math
from collections import Counter

import numpy as np
import pytest

from foltr_unlearn import _kernel
from foltr_unlearn.clicksim import builtin_model
from foltr_unlearn.dataset import QueryGroup
from foltr_unlearn.pdgd import (PdgdConfig, debias_weights, infer_preferences, log_list_probability,
                                pair_debias_weight, pairwise_gradient, pdgd_step, pdgd_update, sample_ranking,
                                sample_serp)
from foltr_unlearn.ranker import LinearRanker

from conftest import random_group


# --- independent oracles -----------------------------------------------------

def pl_probability(scores, ranking):
    """Sequential softmax without replacement, by direct enumeration of the pool."""
    pool = list(range(len(scores)))
    p = 1.0
    for d in ranking:
        p *= math.exp(scores[d]) / sum(math.exp(scores[r]) for r in pool)
        pool.remove(d)
    return p


def rho_oracle(scores, ranking, a, b):
    swapped = list(ranking)
    swapped[a], swapped[b] = swapped[b], swapped[a]
    p, p_star = pl_probability(scores, ranking), pl_probability(scores, swapped)
    return p_star / (p + p_star)


def pairwise_objective(w, features, pairs, rho):
    total = 0.0
    for (i, j), r in zip(pairs, rho):
        gap = float(features[i] @ w - features[j] @ w)
        total += r / (1.0 + math.exp(-gap))
    return total


def finite_difference_gradient(f, w, h=1e-6):
    grad = np.zeros_like(w)
    for k in range(w.size):
        up, down = w.copy(), w.copy()
        up[k] += h
        down[k] -= h
        grad[k] = (f(up) - f(down)) / (2 * h)
    return grad


# --- sampling ----------------------------------------------------------------

def test_single_document_always_shown(rng):
    for _ in range(20):
        assert sample_ranking(np.array([3.0]), 10, rng).tolist() == [0]


def test_equal_scores_give_uniform_orderings():
    rng = np.random.default_rng(0)
    counts = Counter(tuple(sample_ranking(np.zeros(3), 10, rng)) for _ in range(100_000))
    assert len(counts) == 6
    for perm in itertools.permutations(range(3)):
        assert abs(counts[perm] / 100_000 - 1 / 6) <= 0.01


def test_two_documents_follow_softmax():
    expected = pl_probability([math.log(2), 0.0], [0, 1])
    assert expected == pytest.approx(2 / 3)
    rng = np.random.default_rng(1)
    scores = np.array([math.log(2), 0.0])
    hits = sum(sample_ranking(scores, 10, rng)[0] == 0 for _ in range(100_000))
    assert abs(hits / 100_000 - expected) <= 0.01


def test_truncated_sample_matches_enumerated_prefix_probabilities():
    scores = np.array([0.7, -0.2, 1.1, 0.0])
    rng = np.random.default_rng(2)
    n = 100_000
    counts = Counter(tuple(sample_ranking(scores, 2, rng)) for _ in range(n))
    for prefix in itertools.permutations(range(4), 2):
        assert abs(counts[prefix] / n - pl_probability(scores, prefix)) <= 0.01


def test_sample_serp_length_and_distinctness(rng):
    group = random_group(rng, 25, 4)
    ranker = LinearRanker(rng.normal(size=4))
    for k in (1, 5, 10, 30):
        serp = sample_serp(ranker, group, k, rng)
        assert len(serp) == min(k, 25) == len(set(serp.tolist()))


def test_sampling_invariant_to_score_shift():
    scores = np.random.default_rng(3).normal(size=12)
    a, b = np.random.default_rng(4), np.random.default_rng(4)
    for _ in range(1000):
        assert sample_ranking(scores, 10, a).tolist() == sample_ranking(scores + 512.0, 10, b).tolist()


def test_log_list_probability_matches_enumeration(rng):
    for _ in range(50):
        n = int(rng.integers(2, 9))
        scores = rng.normal(size=n)
        ranking = rng.permutation(n)[:min(n, 5)]
        assert log_list_probability(scores, ranking) == pytest.approx(
            math.log(pl_probability(scores, ranking)), rel=1e-12, abs=1e-12)


# --- preferences -------------------------------------------------------------

def test_click_on_middle_document():
    assert set(infer_preferences(["a", "b", "c"], [False, True, False])) == {("b", "a"), ("b", "c")}


def test_no_clicks_no_pairs():
    assert infer_preferences(["a", "b", "c"], [False] * 3) == []


def test_all_clicked_no_pairs():
    assert infer_preferences(["a", "b"], [True, True]) == []


def test_two_clicks_enumerated_by_hand():
    prefs = infer_preferences(["a", "b", "c", "d"], [True, False, True, False])
    assert set(prefs) == {("a", "b"), ("c", "b"), ("c", "d")}
    assert len(prefs) == 3


def test_preference_rule_against_direct_enumeration(rng):
    for _ in range(300):
        n = int(rng.integers(1, 11))
        clicks = rng.random(n) < 0.4
        expected = set()
        for c in range(n):
            if not clicks[c]:
                continue
            expected |= {(c, u) for u in range(c) if not clicks[u]}
            below = [u for u in range(c + 1, n) if not clicks[u]]
            if below:
                expected.add((c, below[0]))
        got = infer_preferences(list(range(n)), clicks)
        assert set(got) == expected and len(got) == len(expected)
        assert all(clicks[w] and not clicks[l] for w, l in got)


def test_misaligned_clicks_rejected():
    with pytest.raises(ValueError):
        infer_preferences([0, 1], [True])


# --- debiasing ---------------------------------------------------------------

def test_equal_scores_give_half(rng):
    group = random_group(rng, 6, 3)
    ranker = LinearRanker.zeros(3)
    shown = rng.permutation(6)[:4].tolist()
    for a, b in itertools.permutations(shown, 2):
        assert pair_debias_weight(ranker, group, shown, (a, b)) == pytest.approx(0.5)


def test_three_docs_by_enumeration():
    group = QueryGroup("q", np.array([[1.0], [0.0], [0.0]]), [0, 0, 0])
    got = pair_debias_weight(LinearRanker(np.ones(1)), group, [0, 1, 2], (1, 2))
    assert got == pytest.approx(rho_oracle([1.0, 0.0, 0.0], [0, 1, 2], 1, 2), rel=1e-12)
    got = pair_debias_weight(LinearRanker(np.ones(1)), group, [0, 1, 2], (0, 2))
    assert got == pytest.approx(rho_oracle([1.0, 0.0, 0.0], [0, 1, 2], 0, 2), rel=1e-12)


def test_debias_weights_against_enumeration(rng):
    for _ in range(300):
        n = int(rng.integers(2, 16))
        scores = rng.normal(scale=2.0, size=n)
        ranking = rng.permutation(n)[:min(n, 10)]
        k = ranking.size
        a, b = rng.choice(k, size=2, replace=k < 2)
        got = debias_weights(scores, ranking, np.array([a]), np.array([b]))[0]
        assert got == pytest.approx(rho_oracle(scores, ranking.tolist(), a, b), rel=1e-9, abs=1e-12)
        assert 0.0 <= got <= 1.0
        swapped = ranking.copy()
        swapped[[a, b]] = swapped[[b, a]]
        back = debias_weights(scores, swapped, np.array([b]), np.array([a]))[0]
        assert got + back == pytest.approx(1.0, abs=1e-12)


def test_debias_weights_invariant_to_shift_and_finite_for_large_scores(rng):
    scores = rng.normal(size=12) * 50
    ranking = rng.permutation(12)[:10]
    a, b = np.array([0, 2, 9, 4]), np.array([5, 1, 3, 4])
    base = debias_weights(scores, ranking, a, b)
    np.testing.assert_allclose(debias_weights(scores + 700.0, ranking, a, b), base, rtol=1e-9, atol=1e-15)
    huge = debias_weights(scores * 40, ranking, a, b)
    assert np.all(np.isfinite(huge)) and np.all((huge >= 0) & (huge <= 1))


def test_pair_not_on_page_rejected(rng):
    with pytest.raises(ValueError):
        pair_debias_weight(LinearRanker.zeros(3), random_group(rng, 5, 3), [0, 1], (0, 4))


# --- gradient ----------------------------------------------------------------

def test_pairwise_gradient_matches_finite_differences(rng):
    for _ in range(100):
        n, nf = int(rng.integers(2, 10)), int(rng.integers(1, 8))
        features = rng.normal(size=(n, nf))
        w = rng.normal(size=nf)
        m = int(rng.integers(1, 6))
        pairs = [tuple(rng.choice(n, 2, replace=False)) for _ in range(m)]
        rho = rng.random(m)
        analytic = pairwise_gradient(features @ w, features, np.array([p[0] for p in pairs]),
                                     np.array([p[1] for p in pairs]), rho)
        numeric = finite_difference_gradient(lambda v: pairwise_objective(v, features, pairs, rho), w)
        assert np.linalg.norm(analytic - numeric) <= 1e-5 * max(np.linalg.norm(numeric), 1e-12)


def test_pairwise_gradient_does_not_overflow():
    features = np.array([[1.0], [0.0]])
    g = pairwise_gradient(np.array([2000.0, -2000.0]), features, np.array([1]), np.array([0]), np.array([1.0]))
    assert np.all(np.isfinite(g))


# --- full update ---------------------------------------------------------------

def test_no_clicks_leaves_weights_unchanged(rng):
    group = QueryGroup("q", rng.normal(size=(8, 3)), np.zeros(8, int))
    ranker = LinearRanker(rng.normal(size=3))
    out = pdgd_update(ranker, group, PdgdConfig(), builtin_model("perfect", 3), rng)
    np.testing.assert_array_equal(out.weights, ranker.weights)


def test_identical_features_leave_weights_unchanged(rng):
    group = QueryGroup("q", np.tile(rng.normal(size=3), (6, 1)), [2, 0, 1, 0, 2, 0])
    ranker = LinearRanker(rng.normal(size=3))
    for _ in range(20):
        out = pdgd_update(ranker, group, PdgdConfig(), builtin_model("perfect", 3), rng)
        np.testing.assert_array_equal(out.weights, ranker.weights)


@pytest.mark.parametrize("w0", [[0.0, 0.0], [0.8, -0.3]])
def test_single_pair_update_closed_form(w0):
    # perfect user: grade 2 always clicked, grade 0 never, no stopping -> exactly one pair (0 beats 1)
    x = np.array([[0.9, 0.2], [0.1, 0.6]])
    group = QueryGroup("q", x, [2, 0])
    w0 = np.array(w0)
    s0, s1 = x @ w0
    seed = 11
    shown_first = sample_ranking(x @ w0, 10, np.random.default_rng(seed))[0]
    # two-document lists: rho is the probability of the swapped list
    p_doc0_first = math.exp(s0) / (math.exp(s0) + math.exp(s1))
    rho = p_doc0_first if shown_first == 1 else 1 - p_doc0_first
    sigma = math.exp(s0) * math.exp(s1) / (math.exp(s0) + math.exp(s1)) ** 2
    expected = w0 + 0.1 * rho * sigma * (x[0] - x[1])
    out = pdgd_update(LinearRanker(w0), group, PdgdConfig(0.1), builtin_model("perfect", 3),
                      np.random.default_rng(seed))
    np.testing.assert_allclose(out.weights, expected, rtol=1e-12, atol=1e-15)


def test_update_is_deterministic_given_seed(rng):
    group = random_group(rng, 20, 5)
    ranker = LinearRanker(rng.normal(size=5))
    model = builtin_model("informational", 3)
    a = pdgd_update(ranker, group, PdgdConfig(), model, np.random.default_rng(5))
    b = pdgd_update(ranker, group, PdgdConfig(), model, np.random.default_rng(5))
    np.testing.assert_array_equal(a.weights, b.weights)


def test_pdgd_learns_on_a_separable_query():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(10, 3))
    grades = (x @ np.array([1.0, -1.0, 0.5]) > 0).astype(int) * 2
    group = QueryGroup("q", x, grades)
    w = np.zeros(3)
    for _ in range(300):
        w = pdgd_step(w, group, PdgdConfig(), builtin_model("perfect", 3), rng)
    assert np.corrcoef(x @ w, grades)[0, 1] > 0.5


def test_config_validation():
    with pytest.raises(ValueError):
        PdgdConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        PdgdConfig(serp_size=0)


# --- compiled step against the numpy composition -------------------------------

@pytest.mark.skipif(not _kernel.AVAILABLE, reason="numba not installed")
@pytest.mark.parametrize("name,scale", [("perfect", 5), ("navigational", 3), ("informational", 5)])
def test_compiled_step_matches_reference(name, scale):
    model = builtin_model(name, scale)
    config = PdgdConfig(learning_rate=0.3, serp_size=10)
    gen = np.random.default_rng([7, scale])
    groups = [random_group(gen, n, 5, max_grade=scale - 1) for n in (1, 2, 4, 10, 11, 30)]
    # large weights push scores far apart, exercising the log-space pools
    for w0 in (np.zeros(5), 25.0 * gen.normal(size=5)):
        r_ref, r_fast = np.random.default_rng(3), np.random.default_rng(3)
        w_ref, w_fast = w0.copy(), w0.copy()
        for t in range(600):
            g = groups[t % len(groups)]
            w_ref = pdgd_step(w_ref, g, config, model, r_ref)
            w_fast = _kernel.compiled_step(w_fast, g, config, model, r_fast)
            np.testing.assert_allclose(w_fast, w_ref, rtol=1e-11, atol=1e-11)
        # both consumed the same number of draws
        assert r_ref.random() == r_fast.random()
