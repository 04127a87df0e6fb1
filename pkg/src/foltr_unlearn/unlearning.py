"""Client removal by replaying stored update norms along fresh short-round directions."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np

from foltr_unlearn.clicksim import ClickModelParams
from foltr_unlearn.evaluation import EvalPoint, TestSetEvaluator
from foltr_unlearn.federation import (UNLEARN_PHASE, FederationConfig, _eval_rounds, _local_weights,
                                      client_rng, weighted_sum)
from foltr_unlearn.pdgd import PdgdConfig
from foltr_unlearn.ranker import LinearRanker, ModelDelta
from foltr_unlearn.runlog import HistoryStore, RunLog

logger = logging.getLogger(__name__)

EPSILON_NORM = 1e-12


class UnlearningError(ValueError):
    pass


class DegenerateDirectionError(UnlearningError):
    """The fresh update is (numerically) zero, so it has no direction to keep."""


@dataclass(frozen=True)
class UnlearnConfig:
    local_steps: int
    delta_t: int
    global_rounds: int
    train_local_steps: int = 5
    epsilon_norm: float = EPSILON_NORM

    def __post_init__(self):
        if self.delta_t < 1:
            raise UnlearningError("delta_t must be >= 1")
        if self.global_rounds < 1:
            raise UnlearningError("global_rounds must be >= 1")
        if not 1 <= self.local_steps < self.train_local_steps:
            raise UnlearningError(
                f"unlearning local steps must satisfy 1 <= {self.local_steps} < {self.train_local_steps}")
        if not self.epsilon_norm > 0:
            raise UnlearningError("epsilon_norm must be positive")

    @property
    def unlearn_rounds(self) -> int:
        return math.ceil(self.global_rounds / self.delta_t)

    @classmethod
    def for_training(cls, fed: FederationConfig, local_steps: int,
                     epsilon_norm: float = EPSILON_NORM) -> "UnlearnConfig":
        return cls(local_steps, fed.delta_t, fed.global_rounds, fed.local_steps, epsilon_norm)


def calibrate_array(stored: np.ndarray, fresh: np.ndarray, epsilon_norm: float = EPSILON_NORM) -> np.ndarray:
    if stored.shape != fresh.shape:
        raise UnlearningError(f"dimension mismatch: {stored.shape} vs {fresh.shape}")
    fresh_norm = np.linalg.norm(fresh)
    if fresh_norm < epsilon_norm:
        raise DegenerateDirectionError(f"fresh update norm {fresh_norm:.3g} below {epsilon_norm:g}")
    return np.linalg.norm(stored) * fresh / fresh_norm


def calibrate(stored: ModelDelta, fresh: ModelDelta, epsilon_norm: float = EPSILON_NORM) -> ModelDelta:
    """Fresh update's direction scaled to the stored update's L2 norm."""
    return ModelDelta(calibrate_array(stored.delta, fresh.delta, epsilon_norm))


@dataclass
class UnlearningResult:
    model: LinearRanker
    log: RunLog
    degenerate_updates: int


def run_unlearning(history: HistoryStore, config: UnlearnConfig, fed_config: FederationConfig,
                   train_set, test_set, pdgd_config: PdgdConfig, click_model: ClickModelParams,
                   client_ids: Optional[Sequence[int]] = None, scenario: str = "") -> UnlearningResult:
    """Rebuild the global model from zero using only the clients in ``client_ids``.

    Iteration j pairs each client's fresh ``config.local_steps``-step update
    with its stored update from original round 1 + (j - 1) * delta_t.
    Only the listed clients' records are read from ``history``.
    """
    if client_ids is None:
        client_ids = history.client_ids
    ids = sorted(client_ids)
    if not ids:
        raise UnlearningError("no remaining clients to unlearn with")
    rounds = config.unlearn_rounds
    if rounds < 1:
        raise UnlearningError("empty history: nothing to replay")
    stored = {}
    for c in ids:
        recs = history.records(c)
        if len(recs) != rounds:
            raise UnlearningError(f"client {c} has {len(recs)} stored updates, expected {rounds}")
        for j, r in enumerate(recs):
            expected = 1 + j * config.delta_t
            if r.round_index != expected:
                raise UnlearningError(f"client {c}: stored record {j} is round {r.round_index}, expected {expected}")
        stored[c] = recs

    nf = train_set.num_features
    evaluator = TestSetEvaluator(test_set)
    eval_every = max(1, fed_config.eval_every // config.delta_t)
    eval_at = _eval_rounds(rounds, eval_every)
    log = RunLog(config={"phase": "unlearn", "scenario": scenario, "clients": ids, **asdict(config),
                         "seed": fed_config.seed, "learning_rate": pdgd_config.learning_rate,
                         "serp_size": pdgd_config.serp_size, "click_model": click_model.name})
    started = time.perf_counter()
    global_w = np.zeros(nf)
    log.evals.append(EvalPoint("unlearn", 0, evaluator(global_w), scenario))
    weights = [float(config.local_steps)] * len(ids)
    degenerate = 0

    for j in range(1, rounds + 1):
        calibrated = []
        for c in ids:
            rng = client_rng(fed_config.seed, UNLEARN_PHASE, c, j)
            local = _local_weights(global_w, train_set, config.local_steps, pdgd_config, click_model, rng)
            try:
                calibrated.append(calibrate_array(stored[c][j - 1].delta, local - global_w, config.epsilon_norm))
            except DegenerateDirectionError:
                degenerate += 1
                logger.debug("client %d iteration %d: degenerate fresh update, sending zero", c, j)
                calibrated.append(np.zeros(nf))
        global_w = global_w + weighted_sum(calibrated, weights)
        if j in eval_at:
            log.evals.append(EvalPoint("unlearn", j, evaluator(global_w), scenario))

    log.counters = {
        "unlearn_rounds": rounds,
        "aggregations": rounds,
        "uploads": rounds * len(ids),
        "local_updates": rounds * config.local_steps * len(ids),
        "local_updates_per_client": rounds * config.local_steps,
        "degenerate_updates": degenerate,
    }
    log.timings = {"unlearn_seconds": time.perf_counter() - started}
    log.final_weights = global_w.tolist()
    return UnlearningResult(LinearRanker(global_w), log, degenerate)


def efficiency_report(train_log: RunLog, unlearn_log: RunLog) -> Dict[str, Any]:
    """Savings of unlearning over retraining from scratch, from the two run logs."""
    tc, uc = train_log.config, unlearn_log.config
    T, n_train = int(tc["global_rounds"]), int(tc["local_steps"])
    delta_t, n_unlearn = int(uc["delta_t"]), int(uc["local_steps"])
    retrain_updates = train_log.counters["local_updates_per_client"]
    unlearn_updates = unlearn_log.counters["local_updates_per_client"]
    unlearn_rounds = unlearn_log.counters["aggregations"]
    stored = train_log.counters["stored_records_per_client"]
    return {
        "retrain_local_updates_per_client": retrain_updates,
        "unlearn_local_updates_per_client": unlearn_updates,
        "local_update_reduction": retrain_updates / unlearn_updates,
        "local_update_reduction_formula": n_train / n_unlearn * delta_t,
        "retrain_aggregations": train_log.counters["aggregations"],
        "unlearn_aggregations": unlearn_rounds,
        "communication_reduction": T / unlearn_rounds,
        "stored_records_per_client": stored,
        "stored_values_per_client": train_log.counters["stored_values_per_client"],
    }
