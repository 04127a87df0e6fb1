"""Run logs and stored-update histories as line-delimited JSON."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional

import numpy as np

from foltr_unlearn.evaluation import EvalPoint


@dataclass(frozen=True, eq=False)
class UpdateRecord:
    round_index: int
    delta: np.ndarray

    def __post_init__(self):
        d = np.array(self.delta, dtype=np.float64)
        if d.ndim != 1 or not np.all(np.isfinite(d)):
            raise ValueError("stored update must be a finite vector")
        d.setflags(write=False)
        object.__setattr__(self, "delta", d)


class HistoryStore:
    """Per-client stored updates; remembers which clients' records were read."""

    def __init__(self, records: Optional[Mapping[int, List[UpdateRecord]]] = None):
        self._records: Dict[int, List[UpdateRecord]] = {c: list(r) for c, r in (records or {}).items()}
        self.accessed: set = set()

    def append(self, client_id: int, record: UpdateRecord) -> None:
        recs = self._records.setdefault(client_id, [])
        if recs and record.round_index <= recs[-1].round_index:
            raise ValueError(f"client {client_id}: round {record.round_index} stored out of order")
        recs.append(record)

    def records(self, client_id: int) -> List[UpdateRecord]:
        self.accessed.add(client_id)
        return self._records[client_id]

    def count(self, client_id: int) -> int:
        return len(self._records.get(client_id, ()))

    @property
    def client_ids(self) -> List[int]:
        return sorted(self._records)

    def without(self, client_id: int) -> "HistoryStore":
        return HistoryStore({c: r for c, r in self._records.items() if c != client_id})

    def subsample(self, delta_t: int) -> "HistoryStore":
        """Keep only rounds 1, 1 + delta_t, 1 + 2 delta_t, ..."""
        return HistoryStore({c: [r for r in recs if (r.round_index - 1) % delta_t == 0]
                             for c, recs in self._records.items()})

    def __contains__(self, client_id: int) -> bool:
        return client_id in self._records

    def write(self, path) -> None:
        with open(path, "w") as f:
            for c in self.client_ids:
                for r in self._records[c]:
                    f.write(json.dumps({"client_id": c, "round_index": r.round_index,
                                        "delta": r.delta.tolist()}) + "\n")

    @classmethod
    def read(cls, path) -> "HistoryStore":
        store = cls()
        with open(path) as f:
            for line in f:
                if line.strip():
                    rec = json.loads(line)
                    store.append(int(rec["client_id"]), UpdateRecord(int(rec["round_index"]), rec["delta"]))
        store.accessed.clear()
        return store


@dataclass
class RunLog:
    config: Dict[str, Any] = field(default_factory=dict)
    evals: List[EvalPoint] = field(default_factory=list)
    counters: Dict[str, Any] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    final_weights: Optional[List[float]] = None

    @property
    def final_ndcg(self) -> float:
        if not self.evals:
            raise ValueError("run log has no evaluation points")
        return self.evals[-1].ndcg10

    def curve(self) -> Dict[int, float]:
        return {e.round: e.ndcg10 for e in self.evals}

    def payload(self) -> Dict[str, Any]:
        """Everything except wall-clock timings."""
        return {"config": self.config, "evals": [asdict(e) for e in self.evals],
                "counters": self.counters, "final_weights": self.final_weights}

    def records(self) -> Iterable[Dict[str, Any]]:
        yield {"type": "config", **self.config}
        for e in self.evals:
            yield {"type": "eval", **asdict(e)}
        yield {"type": "counters", **self.counters}
        if self.final_weights is not None:
            yield {"type": "weights", "weights": self.final_weights}
        yield {"type": "timings", **self.timings}

    def write(self, path) -> None:
        with open(path, "w") as f:
            for rec in self.records():
                f.write(json.dumps(rec) + "\n")

    @classmethod
    def read(cls, path) -> "RunLog":
        log = cls()
        with open(Path(path)) as f:
            for line in f:
                if not line.strip():
                    continue
                rec = json.loads(line)
                kind = rec.pop("type")
                if kind == "config":
                    log.config = rec
                elif kind == "eval":
                    log.evals.append(EvalPoint(**rec))
                elif kind == "counters":
                    log.counters = rec
                elif kind == "weights":
                    log.final_weights = rec["weights"]
                elif kind == "timings":
                    log.timings = rec
                else:
                    raise ValueError(f"{path}: unknown record type {kind!r}")
        return log
