"""Federated training loop: local PDGD rounds, weighted averaging, history snapshots."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from foltr_unlearn.clicksim import SERP_CAP, ClickModelParams
from foltr_unlearn.evaluation import EvalPoint, TestSetEvaluator
from foltr_unlearn import _kernel
from foltr_unlearn.pdgd import PdgdConfig, pdgd_step
from foltr_unlearn.ranker import LinearRanker, ModelDelta
from foltr_unlearn.runlog import HistoryStore, RunLog, UpdateRecord

logger = logging.getLogger(__name__)

TRAIN_PHASE = 0
UNLEARN_PHASE = 1

# (client_id, submitted delta, global weights) -> delta the server receives
SubmitHook = Callable[[int, np.ndarray, np.ndarray], np.ndarray]


class FederationError(ValueError):
    pass


@dataclass(frozen=True)
class FederationConfig:
    num_clients: int = 10
    local_steps: int = 5
    global_rounds: int = 10_000
    delta_t: int = 10
    seed: int = 0
    eval_every: int = 100

    def __post_init__(self):
        if self.num_clients < 2:
            raise FederationError("need at least 2 clients")
        if self.local_steps < 1:
            raise FederationError("local_steps must be >= 1")
        if self.global_rounds < 1:
            raise FederationError("global_rounds must be >= 1")
        if self.delta_t < 1:
            raise FederationError("delta_t must be >= 1")
        if self.eval_every < 1:
            raise FederationError("eval_every must be >= 1")
        if self.seed < 0:
            raise FederationError("seed must be non-negative")

    @property
    def stored_per_client(self) -> int:
        return math.ceil(self.global_rounds / self.delta_t)


def client_rng(seed: int, phase: int, client_id: int, round_index: int) -> np.random.Generator:
    """Independent stream keyed by (seed, phase, client, round); execution order never matters."""
    return np.random.default_rng([seed, phase, client_id, round_index])


def is_recorded_round(round_index: int, delta_t: int) -> bool:
    return (round_index - 1) % delta_t == 0


@dataclass
class ClientState:
    client_id: int
    local_ranker: LinearRanker
    local_steps: int
    history: List[UpdateRecord] = field(default_factory=list)
    local_updates: int = 0

    def __post_init__(self):
        if self.local_steps < 1:
            raise FederationError("local_steps must be >= 1")


def _local_weights(global_w: np.ndarray, train_set, steps: int, pdgd_config: PdgdConfig,
                   click_model: ClickModelParams, rng: np.random.Generator) -> np.ndarray:
    if train_set.max_grade > click_model.max_grade:
        raise FederationError(f"dataset grades reach {train_set.max_grade} but click model "
                              f"{click_model.name} covers only {click_model.max_grade}")
    step = _kernel.compiled_step if _kernel.AVAILABLE and pdgd_config.serp_size <= SERP_CAP else pdgd_step
    queries = train_set.queries
    w = global_w
    for q in rng.integers(len(queries), size=steps):
        w = step(w, queries[q], pdgd_config, click_model, rng)
    return w


def local_round(client: ClientState, global_model: LinearRanker, train_set, steps: int,
                pdgd_config: PdgdConfig, click_model: ClickModelParams,
                rng: np.random.Generator) -> ModelDelta:
    """Reset the client to the global model, run ``steps`` PDGD interactions, return the local update."""
    if steps < 1:
        raise FederationError("steps must be >= 1")
    if len(train_set) == 0:
        raise FederationError("training set is empty")
    local = _local_weights(global_model.weights, train_set, steps, pdgd_config, click_model, rng)
    delta = ModelDelta(local - global_model.weights)
    # the local model is global + delta, so the two always reconstruct each other exactly
    client.local_ranker = global_model + delta
    client.local_updates += steps
    return delta


def weighted_sum(deltas: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    """sum_i (w_i / sum w) delta_i, accumulated in list order."""
    total = float(sum(weights))
    acc = np.zeros_like(deltas[0], dtype=np.float64)
    for d, w in zip(deltas, weights):
        acc += (w / total) * d
    return acc


def aggregate(global_model: LinearRanker, deltas: Sequence[Tuple[ModelDelta, float]]) -> LinearRanker:
    """Weighted federated average of local updates added onto the global model."""
    if not deltas:
        raise FederationError("need at least one update to aggregate")
    vecs, weights = [], []
    for d, w in deltas:
        if not w > 0:
            raise FederationError(f"aggregation weights must be positive, got {w}")
        if d.delta.shape != global_model.weights.shape:
            raise FederationError(
                f"dimension mismatch: update has {len(d)} entries, model has {global_model.num_features}")
        vecs.append(d.delta)
        weights.append(w)
    return LinearRanker(global_model.weights + weighted_sum(vecs, weights))


@dataclass
class TrainingResult:
    model: LinearRanker
    clients: Dict[int, ClientState]
    history: HistoryStore
    log: RunLog


def _eval_rounds(total: int, every: int) -> set:
    rounds = set(range(0, total + 1, every))
    rounds.add(total)
    return rounds


def run_training(config: FederationConfig, train_set, test_set, pdgd_config: PdgdConfig,
                 click_model: ClickModelParams, hook: Optional[SubmitHook] = None,
                 client_ids: Optional[Sequence[int]] = None, scenario: str = "",
                 record_every: Optional[int] = None) -> TrainingResult:
    """Run ``config.global_rounds`` rounds of federated PDGD from zero weights.

    ``client_ids`` defaults to ``range(config.num_clients)``; a scenario that
    drops a client passes the survivors so their random streams are unchanged.
    ``hook`` rewrites a client's update before the server sees it, and the
    rewritten update is what that client stores. Snapshots are kept every
    ``record_every`` rounds (default ``config.delta_t``).
    """
    ids = sorted(range(config.num_clients) if client_ids is None else client_ids)
    if len(ids) < 1 or len(set(ids)) != len(ids):
        raise FederationError(f"invalid client ids {ids}")
    if len(train_set) == 0:
        raise FederationError("training set is empty")
    every = config.delta_t if record_every is None else record_every
    nf = train_set.num_features
    clients = {c: ClientState(c, LinearRanker.zeros(nf), config.local_steps) for c in ids}
    history = HistoryStore({c: [] for c in ids})
    evaluator = TestSetEvaluator(test_set)
    eval_at = _eval_rounds(config.global_rounds, config.eval_every)

    started = time.perf_counter()
    log = RunLog(config={"phase": "train", "scenario": scenario, "clients": ids, **asdict(config),
                         "learning_rate": pdgd_config.learning_rate, "serp_size": pdgd_config.serp_size,
                         "click_model": click_model.name})
    global_w = np.zeros(nf)
    log.evals.append(EvalPoint("train", 0, evaluator(global_w), scenario))
    weights = [float(config.local_steps)] * len(ids)
    aggregations = 0

    for t in range(1, config.global_rounds + 1):
        record = is_recorded_round(t, every)
        submitted = []
        for c in ids:
            rng = client_rng(config.seed, TRAIN_PHASE, c, t)
            local = _local_weights(global_w, train_set, config.local_steps, pdgd_config, click_model, rng)
            clients[c].local_updates += config.local_steps
            delta = local - global_w
            if hook is not None:
                delta = hook(c, delta, global_w)
            if record:
                history.append(c, UpdateRecord(t, delta))
            submitted.append(delta)
        global_w = global_w + weighted_sum(submitted, weights)
        aggregations += 1
        if not np.all(np.isfinite(global_w)):
            raise FederationError(f"global model diverged at round {t}")
        if t in eval_at:
            log.evals.append(EvalPoint("train", t, evaluator(global_w), scenario))

    for c in ids:
        clients[c].local_ranker = LinearRanker(global_w.copy())
        clients[c].history = history._records[c]
    log.counters = {
        "local_updates": sum(cl.local_updates for cl in clients.values()),
        "local_updates_per_client": config.local_steps * config.global_rounds,
        "aggregations": aggregations,
        "uploads": aggregations * len(ids),
        "stored_records_per_client": {str(c): history.count(c) for c in ids},
        "stored_values_per_client": history.count(ids[0]) * nf,
        "skipped_test_queries": evaluator.skipped,
    }
    log.timings = {"train_seconds": time.perf_counter() - started}
    log.final_weights = global_w.tolist()
    return TrainingResult(LinearRanker(global_w), clients, history, log)
