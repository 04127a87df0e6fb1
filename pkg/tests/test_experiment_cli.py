import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from foltr_unlearn.cli import main
from foltr_unlearn.evaluation import EvalPoint
from foltr_unlearn.experiment import ExperimentConfig, ExperimentError, run_experiment, run_sweep, summarize
from foltr_unlearn.runlog import HistoryStore, RunLog

TOY = dict(dataset="synthetic", folds=1, global_steps=10, delta_t=3, eval_every=5, unlearn_local_steps=2)


def _rows(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def test_config_snapshot_round_trip(tmp_path):
    cfg = ExperimentConfig(dataset="mslr10k", data_root="/data/x", click_model="navigational", z=1.5,
                           normalize=True, folds=2, repeats=3, scenario="9h-0m")
    assert ExperimentConfig.from_yaml(cfg.to_yaml()) == cfg
    cfg.save(tmp_path / "c.yaml")
    assert ExperimentConfig.load(tmp_path / "c.yaml") == cfg
    assert cfg.scenario == "9H-0M"


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(dataset="letor9")
    with pytest.raises(ValueError):
        ExperimentConfig(unlearn_local_steps=5)
    with pytest.raises(ValueError):
        ExperimentConfig.from_yaml("dataset: synthetic\nbogus: 1\n")
    with pytest.raises(ValueError):
        ExperimentConfig(click_model="random")


def test_repeat_seeds_are_distinct_and_stable():
    cfg = ExperimentConfig(repeats=4, seed=9)
    seeds = cfg.repeat_seeds()
    assert len(set(seeds)) == 4 and seeds == cfg.repeat_seeds()
    assert ExperimentConfig(seed=9).repeat_seeds() == [9]


def test_unlearn_run_writes_history_logs_and_summary(tmp_path):
    cfg = ExperimentConfig(out=str(tmp_path), **TOY)
    (res,) = run_experiment(cfg)
    job = tmp_path / "fold1_rep0"
    history = HistoryStore.read(job / "history_9H-1M.jsonl")
    assert all(history.count(c) == 4 for c in range(10))
    train = RunLog.read(job / "train_9H-1M.jsonl")
    unlearn = RunLog.read(job / "unlearn_n2_dt3.jsonl")
    assert train.payload() == res.logs[0].payload()
    assert unlearn.payload() == res.logs[1].payload()
    assert unlearn.config["clients"] == list(range(1, 10))
    assert res.efficiency["communication_reduction"] == pytest.approx(10 / 4)
    table = _rows(tmp_path / "summary.csv")
    assert {r["scenario"] for r in table} == {"9H-1M", "U(9H-1M)"}
    assert ExperimentConfig.load(tmp_path / "config.yaml") == cfg


def test_identical_config_reproduces_payload(tmp_path):
    cfg = ExperimentConfig(out=str(tmp_path), **TOY)
    a = run_experiment(cfg, write=False)
    b = run_experiment(cfg, write=False)
    assert [log.payload() for log in a[0].logs] == [log.payload() for log in b[0].logs]


def test_parallel_jobs_match_serial(tmp_path):
    cfg = ExperimentConfig(out=str(tmp_path), repeats=2, scenario="9H-0M", **TOY)
    serial = run_experiment(cfg, jobs=1, write=False)
    parallel = run_experiment(cfg, jobs=2, write=False)
    assert [r.logs[0].payload() for r in serial] == [r.logs[0].payload() for r in parallel]


def test_failing_phase_is_named(tmp_path):
    cfg = ExperimentConfig(dataset="mq2007", data_root=str(tmp_path / "missing"), out=str(tmp_path))
    with pytest.raises(ExperimentError) as err:
        run_experiment(cfg)
    assert err.value.phase == "load"


def _log(scenario, values, phase="train", **extra):
    log = RunLog(config={"phase": phase, "scenario": scenario, "dataset": "synthetic",
                         "click_model": "perfect", **extra})
    log.evals = [EvalPoint(phase, r, v, scenario) for r, v in values]
    return log


def test_summarize_averages_and_reports_gap():
    a = _log("9H-0M", [(0, 0.2), (10, 0.6)])
    assert [r["ndcg10"] for r in summarize([a, a]).curves] == [0.2, 0.6]
    logs = [_log("9H-0M", [(0, 0.1), (10, v)]) for v in (0.5, 0.6, 0.7, 0.4, 0.8)]
    logs += [_log("U(9H-1M)", [(0, 0.1), (1, 0.58)], phase="unlearn", local_steps=3, delta_t=10)]
    s = summarize(logs)
    base = next(r for r in s.table if r["scenario"] == "9H-0M")
    cell = next(r for r in s.table if r["phase"] == "unlearn")
    assert base["final_ndcg10"] == pytest.approx(0.6) and base["runs"] == 5
    assert cell["gap_vs_9H-0M"] == pytest.approx(0.58 - 0.6)


def test_summarize_rejects_mixed_logs():
    a = _log("9H-0M", [(0, 0.2)])
    b = _log("9H-0M", [(0, 0.2)])
    b.config["click_model"] = "informational"
    with pytest.raises(ValueError):
        summarize([a, b])
    with pytest.raises(ValueError):
        summarize([])


def test_sweep_grid_has_twelve_unlearning_cells(tmp_path):
    cfg = ExperimentConfig(out=str(tmp_path), **{**TOY, "global_steps": 20})
    logs = run_sweep(cfg, [1, 2, 3, 4], [5, 10, 20])
    table = summarize(logs).table
    cells = [r for r in table if r["phase"] == "unlearn"]
    assert len(cells) == 12
    assert {(r["unlearn_local_steps"], r["delta_t"]) for r in cells} == {(n, d) for n in (1, 2, 3, 4)
                                                                          for d in (5, 10, 20)}
    assert {r["scenario"] for r in table if r["phase"] == "train"} == {"9H-0M", "9H-1M"}
    assert len(_rows(tmp_path / "summary.csv")) == 14


def test_sweep_cells_equal_dedicated_runs(tmp_path):
    """Subsampled history from a finer schedule gives the same unlearning as a dedicated run."""
    cfg = ExperimentConfig(out=str(tmp_path), **{**TOY, "global_steps": 20})
    logs = run_sweep(cfg, [2], [5, 10], write=False)
    cell = next(log for log in logs if log.config.get("phase") == "unlearn" and log.config["delta_t"] == 10)
    direct = run_experiment(replace(cfg, delta_t=10, unlearn_local_steps=2), write=False)[0].logs[1]
    assert np.array_equal(cell.final_weights, direct.final_weights)


# --- command line ------------------------------------------------------------

def test_cli_run_summarize_and_unlearn(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--dataset", "synthetic", "--folds", "1", "--global-steps", "10", "--delta-t", "3",
                 "--eval-every", "5", "--unlearn-local-steps", "2", "--out", str(out)]) == 0
    assert "U(9H-1M)=" in capsys.readouterr().out
    lines = (out / "fold1_rep0" / "history_9H-1M.jsonl").read_text().splitlines()
    assert len(lines) == 10 * 4
    assert set(json.loads(lines[0])) == {"client_id", "round_index", "delta"}

    assert main(["unlearn", str(out), "--unlearn-local-steps", "1"]) == 0
    assert (out / "fold1_rep0" / "unlearn_n1_dt3.jsonl").is_file()

    assert main(["summarize", str(out), "--out", str(tmp_path / "sum")]) == 0
    rows = _rows(tmp_path / "sum" / "summary.csv")
    assert {(r["scenario"], r["unlearn_local_steps"]) for r in rows} == {("9H-1M", "0"), ("U(9H-1M)", "1"),
                                                                         ("U(9H-1M)", "2")}
    assert (tmp_path / "sum" / "curves.csv").is_file()


def test_cli_config_file_with_overrides(tmp_path):
    ExperimentConfig(out=str(tmp_path / "a"), scenario="10H-0M", **TOY).save(tmp_path / "c.yaml")
    assert main(["run", "--config", str(tmp_path / "c.yaml"), "--seed", "3", "--out", str(tmp_path / "b")]) == 0
    cfg = ExperimentConfig.load(tmp_path / "b" / "config.yaml")
    assert (cfg.seed, cfg.scenario, cfg.global_steps) == (3, "10H-0M", 10)


def test_cli_make_synthetic_and_load_as_letor(tmp_path, capsys):
    root = tmp_path / "syn"
    assert main(["make-synthetic", str(root), "--folds", "5"]) == 0
    assert (root / "Fold5" / "vali.txt").is_file()
    # 20-feature lines load as the 46-feature kind, missing indices read as zero
    assert main(["run", "--dataset", "mq2007", "--data-root", str(root), "--folds", "1", "--global-steps", "2",
                 "--delta-t", "1", "--unlearn-local-steps", "1", "--out", str(tmp_path / "o")]) == 0
    log = RunLog.read(tmp_path / "o" / "fold1_rep0" / "train_9H-1M.jsonl")
    assert len(log.final_weights) == 46 and log.config["dataset"] == "mq2007"

    partial = tmp_path / "partial"
    main(["make-synthetic", str(partial), "--folds", "2"])
    capsys.readouterr()
    assert main(["run", "--dataset", "mq2007", "--data-root", str(partial), "--out", str(tmp_path / "p")]) == 2
    err = capsys.readouterr().err
    assert "[load]" in err and "Fold3" in err


def test_cli_errors(tmp_path, capsys):
    assert main(["run", "--dataset", "synthetic", "--unlearn-local-steps", "7", "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err
    assert main(["unlearn", str(tmp_path / "nothing")]) == 1
    with pytest.raises(SystemExit):
        main(["run", "--dataset", "nope"])
