"""Command-line entry point: ``foltr-unlearn {run,sweep,unlearn,summarize,make-synthetic}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import List, Optional

from foltr_unlearn.adversary import Scenario
from foltr_unlearn.clicksim import CLICK_MODELS, builtin_model
from foltr_unlearn.experiment import (DATASETS, ExperimentConfig, ExperimentError, load_folds, run_experiment,
                                      run_sweep, summarize, table2_layout, write_summary)
from foltr_unlearn.runlog import HistoryStore, RunLog
from foltr_unlearn.synthetic import write_synthetic_root
from foltr_unlearn.unlearning import run_unlearning

logger = logging.getLogger("foltr_unlearn")

_CONFIG_FLAGS = ("dataset", "data_root", "click_model", "clients", "local_steps", "global_steps", "delta_t",
                 "unlearn_local_steps", "scenario", "z", "target_client", "seed", "repeats", "eval_every",
                 "normalize", "learning_rate", "folds", "out")


def _int_list(text: str) -> List[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _normalize(text: str) -> Optional[bool]:
    return {"auto": None, "on": True, "off": False}[text]


def _add_experiment_flags(p: argparse.ArgumentParser, sweep: bool = False) -> None:
    p.add_argument("--config", type=Path, help="YAML config snapshot; flags given explicitly override it")
    p.add_argument("--dataset", choices=DATASETS)
    p.add_argument("--data-root")
    p.add_argument("--click-model", choices=CLICK_MODELS)
    p.add_argument("--clients", type=int)
    p.add_argument("--local-steps", type=int, help="local PDGD steps per round during training (n_i)")
    p.add_argument("--global-steps", type=int, help="training rounds T")
    if sweep:
        p.add_argument("--delta-t", type=_int_list, default=[5, 10, 20], help="comma-separated grid")
        p.add_argument("--unlearn-local-steps", type=_int_list, default=[1, 2, 3, 4], help="comma-separated grid")
    else:
        p.add_argument("--delta-t", type=int, help="rounds between stored updates")
        p.add_argument("--unlearn-local-steps", type=int, help="local steps per unlearning iteration (n'_i)")
        p.add_argument("--scenario", choices=[s.value for s in Scenario] + ["unlearn"])
    p.add_argument("--z", type=float, help="poison strength")
    p.add_argument("--target-client", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--normalize", type=_normalize, default=argparse.SUPPRESS, metavar="{auto,on,off}")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--folds", type=int, help="use only the first N folds")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes over folds/repeats")


def config_from_args(args: argparse.Namespace, skip=()) -> ExperimentConfig:
    base = ExperimentConfig.load(args.config) if getattr(args, "config", None) else None
    values = {} if base is None else {f.name: getattr(base, f.name) for f in fields(ExperimentConfig)}
    for name in _CONFIG_FLAGS:
        if name in skip or not hasattr(args, name):
            continue
        v = getattr(args, name)
        if v is not None or name == "normalize":
            values[name] = v
    return ExperimentConfig(**values)


def cmd_run(args) -> int:
    config = config_from_args(args)
    results = run_experiment(config, jobs=args.jobs)
    for res in results:
        finals = ", ".join(f"{log.config['scenario']}={log.final_ndcg:.4f}" for log in res.logs)
        print(f"fold {res.fold} seed {res.seed}: {finals}")
        if res.efficiency:
            logger.info("efficiency: %s", json.dumps(res.efficiency))
    print(f"wrote {config.out}/summary.csv and curves.csv")
    return 0


def cmd_sweep(args) -> int:
    config = config_from_args(args, skip=("delta_t", "unlearn_local_steps"))
    config = replace(config, delta_t=min(args.delta_t), unlearn_local_steps=min(args.unlearn_local_steps))
    logs = run_sweep(config, args.unlearn_local_steps, args.delta_t, jobs=args.jobs)
    for row in table2_layout(summarize(logs), args.delta_t):
        print("\t".join(row))
    return 0


def cmd_unlearn(args) -> int:
    """Replay stored histories from an earlier ``run`` in a separate process."""
    run_dir = Path(args.run_dir)
    config = ExperimentConfig.load(run_dir / "config.yaml")
    overrides = {k: v for k, v in (("unlearn_local_steps", args.unlearn_local_steps),) if v is not None}
    config = replace(config, **overrides)
    folds = load_folds(config)
    clicks = builtin_model(config.click_model, config.grade_scale)
    remaining = config.scenario_config().remaining_clients(config.clients)
    logs = []
    for f, (train, test) in enumerate(folds, start=1):
        for r, seed in enumerate(config.repeat_seeds()):
            job_dir = run_dir / f"fold{f}_rep{r}"
            path = job_dir / f"history_{Scenario.NINE_H_ONE_M.value}.jsonl"
            if not path.is_file():
                raise ExperimentError("unlearn", f"missing history file {path}")
            result = run_unlearning(HistoryStore.read(path), config.unlearn(), config.federation(seed), train,
                                    test, config.pdgd(), clicks, remaining, Scenario.UNLEARN_NINE_H_ONE_M.value)
            result.log.config.update({"dataset": config.dataset, "fold": f})
            result.log.write(job_dir / f"unlearn_n{config.unlearn_local_steps}_dt{config.delta_t}.jsonl")
            logs.append(result.log)
            print(f"fold {f} seed {seed}: U(9H-1M)={result.log.final_ndcg:.4f}")
    return 0


def cmd_summarize(args) -> int:
    paths = []
    for p in args.logs:
        p = Path(p)
        paths.extend(sorted(q for q in p.rglob("*.jsonl") if not q.name.startswith("history_"))
                     if p.is_dir() else [p])
    summary = summarize(RunLog.read(p) for p in paths)
    write_summary(summary, args.out)
    for row in summary.table:
        print(f"{row['phase']:8s} {row['scenario']:9s} n'={row['unlearn_local_steps']} dt={row['delta_t']:<3d}"
              f" nDCG@10={row['final_ndcg10']:.4f} (runs={row['runs']})")
    return 0


def cmd_make_synthetic(args) -> int:
    root = write_synthetic_root(args.root, num_folds=args.folds, seed=args.seed)
    print(f"wrote synthetic LETOR folds under {root}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="foltr-unlearn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one scenario (and unlearn, for U(9H-1M)) over folds and repeats")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="n'_i x delta_t unlearning grid against the 9H-0M retrain")
    _add_experiment_flags(p, sweep=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("unlearn", help="unlearn from histories stored by an earlier 9H-1M or U(9H-1M) run")
    p.add_argument("run_dir")
    p.add_argument("--unlearn-local-steps", type=int)
    p.set_defaults(func=cmd_unlearn)

    p = sub.add_parser("summarize", help="average run logs into curves.csv and summary.csv")
    p.add_argument("logs", nargs="+", help="run-log files or directories containing them")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("make-synthetic", help="write the bundled synthetic dataset as LETOR fold files")
    p.add_argument("root")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_synthetic)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
