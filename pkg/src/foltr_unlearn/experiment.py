"""Experiment configs, scenario runs over folds and repeats, and result summaries."""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import reduce
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from foltr_unlearn.adversary import Scenario, ScenarioConfig, scenario_hooks
from foltr_unlearn.clicksim import CLICK_MODELS, builtin_model
from foltr_unlearn.dataset import DATASET_KINDS, iterate_folds
from foltr_unlearn.federation import FederationConfig, run_training
from foltr_unlearn.pdgd import PdgdConfig
from foltr_unlearn.runlog import HistoryStore, RunLog
from foltr_unlearn.synthetic import synthetic_folds
from foltr_unlearn.unlearning import UnlearnConfig, efficiency_report, run_unlearning

logger = logging.getLogger(__name__)

DATASETS = tuple(DATASET_KINDS) + ("synthetic",)


class ExperimentError(RuntimeError):
    def __init__(self, phase: str, message: str):
        self.phase = phase
        super().__init__(f"[{phase}] {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "mq2007"
    data_root: str = ""
    click_model: str = "perfect"
    clients: int = 10
    local_steps: int = 5
    global_steps: int = 10_000
    delta_t: int = 10
    unlearn_local_steps: int = 3
    scenario: str = Scenario.UNLEARN_NINE_H_ONE_M.value
    z: float = 2.0
    target_client: int = 0
    seed: int = 0
    repeats: int = 1
    eval_every: int = 100
    normalize: Optional[bool] = None
    learning_rate: float = 0.1
    serp_size: int = 10
    folds: Optional[int] = None
    out: str = "runs"

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ValueError(f"unknown dataset {self.dataset!r}; expected one of {DATASETS}")
        if self.click_model not in CLICK_MODELS:
            raise ValueError(f"unknown click model {self.click_model!r}; expected one of {CLICK_MODELS}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.folds is not None and self.folds < 1:
            raise ValueError("folds must be >= 1")
        object.__setattr__(self, "scenario", Scenario.parse(self.scenario).value)
        # constructing the sub-configs validates them
        self.federation()
        self.scenario_config()
        self.pdgd()
        if self.scenario_kind == Scenario.UNLEARN_NINE_H_ONE_M:
            self.unlearn()

    @property
    def scenario_kind(self) -> Scenario:
        return Scenario(self.scenario)

    @property
    def grade_scale(self) -> int:
        if self.dataset == "synthetic":
            return 3
        return DATASET_KINDS[self.dataset].max_grade + 1

    def federation(self, seed: Optional[int] = None) -> FederationConfig:
        return FederationConfig(self.clients, self.local_steps, self.global_steps, self.delta_t,
                                self.seed if seed is None else seed, self.eval_every)

    def unlearn(self) -> UnlearnConfig:
        return UnlearnConfig(self.unlearn_local_steps, self.delta_t, self.global_steps, self.local_steps)

    def scenario_config(self) -> ScenarioConfig:
        return ScenarioConfig(self.scenario_kind, self.z, self.target_client)

    def pdgd(self) -> PdgdConfig:
        return PdgdConfig(self.learning_rate, self.serp_size)

    def repeat_seeds(self) -> List[int]:
        if self.repeats == 1:
            return [self.seed]
        return [int(np.random.SeedSequence([self.seed, r]).generate_state(1)[0]) for r in range(self.repeats)]

    def to_yaml(self) -> str:
        return yaml.safe_dump(asdict(self), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        data = yaml.safe_load(text) or {}
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def save(self, path) -> None:
        Path(path).write_text(self.to_yaml())

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_yaml(Path(path).read_text())


def load_folds(config: ExperimentConfig) -> List[Tuple]:
    try:
        if config.dataset == "synthetic":
            folds = synthetic_folds(config.folds or 5)
        else:
            if not config.data_root:
                raise ValueError(f"--data-root is required for dataset {config.dataset}")
            folds = []
            for pair in iterate_folds(config.data_root, config.dataset, config.normalize):
                folds.append(pair)
                if config.folds is not None and len(folds) >= config.folds:
                    break
    except (OSError, ValueError) as exc:
        raise ExperimentError("load", str(exc)) from exc
    return folds


@dataclass
class JobResult:
    fold: int
    seed: int
    logs: List[RunLog] = field(default_factory=list)
    efficiency: Optional[Dict] = None
    history: Optional[HistoryStore] = None


def _tag(log: RunLog, config: ExperimentConfig, fold: int) -> RunLog:
    log.config.update({"dataset": config.dataset, "fold": fold, "z": config.z,
                       "target_client": config.target_client,
                       "normalize": config.normalize, "experiment": asdict(config)})
    return log


def run_job(config: ExperimentConfig, fold: int, seed: int, train, test,
            job_dir: Optional[Path] = None) -> JobResult:
    """One (fold, seed) run of the configured scenario; writes histories and logs into ``job_dir``."""
    fed = config.federation(seed)
    pdgd = config.pdgd()
    clicks = builtin_model(config.click_model, config.grade_scale)
    sc = config.scenario_config()
    kind = sc.kind
    train_kind = Scenario.NINE_H_ONE_M if kind == Scenario.UNLEARN_NINE_H_ONE_M else kind
    result = JobResult(fold, seed)
    if job_dir is not None:
        job_dir.mkdir(parents=True, exist_ok=True)

    try:
        trained = run_training(fed, train, test, pdgd, clicks, scenario_hooks(sc, config.clients),
                               sc.training_clients(config.clients), train_kind.value)
    except Exception as exc:
        raise ExperimentError("train", f"fold {fold} seed {seed}: {exc}") from exc
    result.logs.append(_tag(trained.log, config, fold))
    result.history = trained.history
    if job_dir is not None:
        trained.history.write(job_dir / f"history_{train_kind.value}.jsonl")
        trained.log.write(job_dir / f"train_{train_kind.value}.jsonl")

    if kind == Scenario.UNLEARN_NINE_H_ONE_M:
        try:
            unlearned = run_unlearning(trained.history, config.unlearn(), fed, train, test, pdgd, clicks,
                                       sc.remaining_clients(config.clients), kind.value)
        except Exception as exc:
            raise ExperimentError("unlearn", f"fold {fold} seed {seed}: {exc}") from exc
        result.logs.append(_tag(unlearned.log, config, fold))
        result.efficiency = efficiency_report(trained.log, unlearned.log)
        if job_dir is not None:
            unlearned.log.write(job_dir / f"unlearn_n{config.unlearn_local_steps}_dt{config.delta_t}.jsonl")
    return result


def _job_entry(args):
    config, fold, seed, train, test, job_dir = args
    return run_job(config, fold, seed, train, test, job_dir)


def run_experiment(config: ExperimentConfig, jobs: int = 1, write: bool = True) -> List[JobResult]:
    """All folds x repeats of one scenario. Jobs are independent and may run in parallel processes."""
    out = Path(config.out)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        config.save(out / "config.yaml")
    folds = load_folds(config)
    tasks = []
    for f, (train, test) in enumerate(folds, start=1):
        for r, seed in enumerate(config.repeat_seeds()):
            job_dir = out / f"fold{f}_rep{r}" if write else None
            tasks.append((config, f, seed, train, test, job_dir))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_job_entry, tasks))
    else:
        results = [_job_entry(t) for t in tasks]
    if write:
        write_summary(summarize([log for res in results for log in res.logs]), out)
    return results


def run_sweep(config: ExperimentConfig, unlearn_steps: Sequence[int], delta_ts: Sequence[int],
              jobs: int = 1, write: bool = True) -> List[RunLog]:
    """The n'_i x delta_t grid: per fold and seed, one 9H-0M retrain, one 9H-1M training
    recording every gcd(delta_ts) rounds, and one unlearning run per grid cell."""
    logs: List[RunLog] = []
    every = reduce(math.gcd, delta_ts)
    base = replace(config, delta_t=every, scenario=Scenario.NINE_H_ONE_M.value)
    out = Path(config.out)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        config.save(out / "config.yaml")
    retrain = replace(config, scenario=Scenario.NINE_H_ZERO_M.value, out=str(out / "retrain"))
    for res in run_experiment(retrain, jobs, write):
        logs.extend(res.logs)
    poisoned = run_experiment(replace(base, out=str(out / "poisoned")), jobs, write)
    folds = load_folds(config)
    clicks = builtin_model(config.click_model, config.grade_scale)
    sc = config.scenario_config()
    for res in poisoned:
        train, test = folds[res.fold - 1]
        train_log = res.logs[0]
        logs.append(train_log)
        store = res.history
        for dt in delta_ts:
            sub = store.subsample(dt)
            for n in unlearn_steps:
                cell = replace(config, delta_t=dt, unlearn_local_steps=n,
                               scenario=Scenario.UNLEARN_NINE_H_ONE_M.value)
                try:
                    u = run_unlearning(sub, cell.unlearn(), cell.federation(res.seed), train, test,
                                       cell.pdgd(), clicks, sc.remaining_clients(config.clients), cell.scenario)
                except Exception as exc:
                    raise ExperimentError("unlearn", f"fold {res.fold} n'={n} dt={dt}: {exc}") from exc
                logs.append(_tag(u.log, cell, res.fold))
                if write:
                    job_dir = out / "unlearn" / f"fold{res.fold}_seed{res.seed}"
                    job_dir.mkdir(parents=True, exist_ok=True)
                    u.log.write(job_dir / f"unlearn_n{n}_dt{dt}.jsonl")
    if write:
        write_summary(summarize(logs), out)
    return logs


# --- summaries -------------------------------------------------------------

@dataclass
class Summary:
    curves: List[Dict]
    table: List[Dict]


def _cell_key(log: RunLog) -> Tuple[str, str, int, int]:
    c = log.config
    if c.get("phase") == "unlearn":
        return (c.get("phase"), c.get("scenario", ""), int(c["local_steps"]), int(c["delta_t"]))
    return (c.get("phase", "train"), c.get("scenario", ""), 0, 0)


def summarize(logs: Iterable[RunLog]) -> Summary:
    """Mean curves per run type and a final-score table over the unlearning grid.

    Logs must share dataset and click model.
    """
    logs = list(logs)
    if not logs:
        raise ValueError("no run logs to summarize")
    shared = {(log.config.get("dataset"), log.config.get("click_model")) for log in logs}
    if len(shared) > 1:
        raise ValueError(f"run logs mix datasets/click models: {sorted(map(str, shared))}")
    dataset, click_model = next(iter(shared))

    groups: Dict[Tuple, List[RunLog]] = defaultdict(list)
    for log in logs:
        groups[_cell_key(log)].append(log)

    curves = []
    table = []
    for key in sorted(groups):
        phase, scenario, n_unlearn, dt = key
        members = groups[key]
        by_round: Dict[int, List[float]] = defaultdict(list)
        for log in members:
            for rnd, v in log.curve().items():
                by_round[rnd].append(v)
        for rnd in sorted(by_round):
            vals = by_round[rnd]
            curves.append({"dataset": dataset, "click_model": click_model, "phase": phase, "scenario": scenario,
                           "unlearn_local_steps": n_unlearn, "delta_t": dt, "round": rnd,
                           "ndcg10": float(np.mean(vals)), "runs": len(vals)})
        finals = [log.final_ndcg for log in members]
        table.append({"dataset": dataset, "click_model": click_model, "phase": phase, "scenario": scenario,
                      "unlearn_local_steps": n_unlearn, "delta_t": dt,
                      "final_ndcg10": float(np.mean(finals)),
                      "std": float(np.std(finals)), "runs": len(finals)})

    baseline = [row for row in table if row["scenario"] == Scenario.NINE_H_ZERO_M.value]
    for row in table:
        row["gap_vs_9H-0M"] = row["final_ndcg10"] - baseline[0]["final_ndcg10"] if baseline else None
    return Summary(curves, table)


def table2_layout(summary: Summary, delta_ts: Sequence[int]) -> List[List[str]]:
    """Rows: 9H-0M then U(9H-1M) for n'_i = 4..1; columns: delta_t values."""
    header = ["Ranker"] + [f"dt={dt}" for dt in delta_ts]
    rows = [header]
    base = next((r for r in summary.table if r["scenario"] == Scenario.NINE_H_ZERO_M.value), None)
    if base is not None:
        rows.append(["9H-0M"] + [f"{base['final_ndcg10']:.3f}"] * len(delta_ts))
    cells = {(r["unlearn_local_steps"], r["delta_t"]): r for r in summary.table if r["phase"] == "unlearn"}
    for n in sorted({n for n, _ in cells}, reverse=True):
        rows.append([f"U(9H-1M), n'={n}"] + [
            f"{cells[(n, dt)]['final_ndcg10']:.3f}" if (n, dt) in cells else "-" for dt in delta_ts])
    return rows


def _write_csv(path: Path, rows: List[Dict]) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def write_summary(summary: Summary, out) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "curves.csv", summary.curves)
    _write_csv(out / "summary.csv", summary.table)
