"""LETOR / SVMLight learning-to-rank files, grouped by query."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np


class LetorParseError(ValueError):
    """A line of a LETOR file could not be parsed."""

    def __init__(self, message: str, line_number: Optional[int] = None, token: Optional[str] = None):
        self.line_number = line_number
        self.token = token
        where = f"line {line_number}: " if line_number is not None else ""
        what = f" (offending token {token!r})" if token is not None else ""
        super().__init__(f"{where}{message}{what}")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetKind:
    name: str
    num_features: int
    max_grade: int
    num_folds: int
    # raw (unnormalized) feature values in the published files
    raw_features: bool


DATASET_KINDS: Dict[str, DatasetKind] = {
    "mq2007": DatasetKind("mq2007", 46, 2, 5, raw_features=False),
    "mslr10k": DatasetKind("mslr10k", 136, 4, 5, raw_features=True),
    "yahoo": DatasetKind("yahoo", 700, 4, 1, raw_features=False),
    "istella": DatasetKind("istella", 220, 4, 1, raw_features=True),
}


@dataclass(frozen=True, eq=False)
class QueryGroup:
    query_id: str
    doc_features: np.ndarray
    relevance: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.doc_features, dtype=np.float64)
        rel = np.asarray(self.relevance, dtype=np.int64)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise DatasetError(f"query {self.query_id}: expected a non-empty (num_docs, num_features) matrix")
        if rel.shape != (feats.shape[0],):
            raise DatasetError(f"query {self.query_id}: {rel.shape[0]} grades for {feats.shape[0]} documents")
        feats.setflags(write=False)
        rel.setflags(write=False)
        object.__setattr__(self, "doc_features", feats)
        object.__setattr__(self, "relevance", rel)

    @property
    def num_docs(self) -> int:
        return self.doc_features.shape[0]

    @property
    def num_features(self) -> int:
        return self.doc_features.shape[1]

    def to_letor_lines(self) -> List[str]:
        lines = []
        for grade, row in zip(self.relevance, self.doc_features):
            pairs = " ".join(f"{i + 1}:{v!r}" for i, v in enumerate(row.tolist()))
            lines.append(f"{int(grade)} qid:{self.query_id} {pairs}")
        return lines


@dataclass(frozen=True, eq=False)
class FeatureDataset:
    queries: Tuple[QueryGroup, ...]
    num_features: int
    max_grade: int
    split_role: str = "train"
    normalized: bool = False
    _index: Dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.num_features < 1:
            raise DatasetError("num_features must be positive")
        if self.max_grade not in (2, 4):
            raise DatasetError(f"max_grade must be 2 or 4, got {self.max_grade}")
        if self.split_role not in ("train", "test"):
            raise DatasetError(f"split_role must be 'train' or 'test', got {self.split_role!r}")
        object.__setattr__(self, "queries", tuple(self.queries))
        index = {}
        for i, q in enumerate(self.queries):
            if q.query_id in index:
                raise DatasetError(f"duplicate query id {q.query_id!r}")
            if q.num_features != self.num_features:
                raise DatasetError(
                    f"query {q.query_id} has {q.num_features} features, dataset has {self.num_features}")
            if q.relevance.min() < 0 or q.relevance.max() > self.max_grade:
                raise DatasetError(f"query {q.query_id} has grades outside [0, {self.max_grade}]")
            index[q.query_id] = i
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.queries)

    def __iter__(self) -> Iterator[QueryGroup]:
        return iter(self.queries)

    def __getitem__(self, query_id: str) -> QueryGroup:
        return self.queries[self._index[query_id]]

    @property
    def num_docs(self) -> int:
        return sum(q.num_docs for q in self.queries)

    def write_letor(self, path) -> None:
        with open(path, "w") as f:
            for q in self.queries:
                for line in q.to_letor_lines():
                    f.write(line + "\n")


def parse_letor_line(line: str, line_number: Optional[int] = None) -> Tuple[int, str, Dict[int, float]]:
    """Parse ``<grade> qid:<id> <idx>:<value> ... [# comment]``.

    Feature indices are 1-based in the file and returned 0-based.

    >>> parse_letor_line("2 qid:10 1:0.5 3:1.25 #doc=7")
    (2, '10', {0: 0.5, 2: 1.25})
    """
    body = line.split("#", 1)[0]
    tokens = body.split()
    if not tokens:
        raise LetorParseError("empty line", line_number)
    try:
        grade = int(tokens[0])
    except ValueError:
        raise LetorParseError("non-integer relevance grade", line_number, tokens[0]) from None
    if len(tokens) < 2 or not tokens[1].startswith("qid:") or len(tokens[1]) == 4:
        raise LetorParseError("missing qid", line_number, tokens[1] if len(tokens) > 1 else None)
    qid = tokens[1][4:]

    features: Dict[int, float] = {}
    for tok in tokens[2:]:
        idx, sep, val = tok.partition(":")
        if not sep:
            raise LetorParseError("malformed feature token", line_number, tok)
        try:
            i = int(idx)
        except ValueError:
            raise LetorParseError("non-integer feature index", line_number, tok) from None
        if i < 1:
            raise LetorParseError("feature index must be >= 1", line_number, tok)
        try:
            v = float(val)
        except ValueError:
            raise LetorParseError("non-numeric feature value", line_number, tok) from None
        if not math.isfinite(v):
            raise LetorParseError("non-finite feature value", line_number, tok)
        features[i - 1] = v
    return grade, qid, features


def normalize_query(features: np.ndarray) -> np.ndarray:
    """Min-max scale each feature to [0, 1] within one query; constant columns become 0."""
    lo = features.min(axis=0)
    span = features.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (features - lo) / safe, 0.0)


def groups_from_lines(lines: Sequence[str], num_features: int, max_grade: int,
                      source: str = "<lines>") -> List[QueryGroup]:
    order: List[str] = []
    rows: Dict[str, List[Tuple[int, Dict[int, float]]]] = {}
    for n, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        grade, qid, feats = parse_letor_line(raw, n)
        if grade < 0 or grade > max_grade:
            raise LetorParseError(f"grade {grade} outside [0, {max_grade}] in {source}", n, str(grade))
        if feats and max(feats) >= num_features:
            bad = max(feats) + 1
            raise DatasetError(
                f"{source} line {n}: feature index {bad} exceeds configured num_features={num_features}")
        if qid not in rows:
            rows[qid] = []
            order.append(qid)
        rows[qid].append((grade, feats))
    if not order:
        raise DatasetError(f"{source} contains no data lines")

    groups = []
    for qid in order:
        docs = rows[qid]
        mat = np.zeros((len(docs), num_features))
        for r, (_, feats) in enumerate(docs):
            if feats:
                mat[r, list(feats.keys())] = list(feats.values())
        groups.append(QueryGroup(qid, mat, np.array([g for g, _ in docs])))
    return groups


def load_dataset(path, num_features: int, max_grade: int, split_role: str = "train",
                 normalize: bool = False) -> FeatureDataset:
    path = Path(path)
    with open(path) as f:
        lines = f.readlines()
    groups = groups_from_lines(lines, num_features, max_grade, source=str(path))
    if normalize:
        groups = [QueryGroup(g.query_id, normalize_query(g.doc_features), g.relevance) for g in groups]
    return FeatureDataset(tuple(groups), num_features, max_grade, split_role, normalized=normalize)


def _expected_layout(kind: DatasetKind) -> str:
    if kind.num_folds > 1:
        return f"Fold1..Fold{kind.num_folds}/{{train,vali,test}}.txt"
    return "{train,test}.txt"


def fold_paths(dataset_root, kind_name: str) -> List[Tuple[Path, Path]]:
    kind = DATASET_KINDS.get(kind_name)
    if kind is None:
        raise DatasetError(f"unknown dataset kind {kind_name!r}; expected one of {sorted(DATASET_KINDS)}")
    root = Path(dataset_root)
    if kind.num_folds > 1:
        dirs = [root / f"Fold{i}" for i in range(1, kind.num_folds + 1)]
    else:
        dirs = [root]
    pairs = []
    for d in dirs:
        train, test = d / "train.txt", d / "test.txt"
        if not (train.is_file() and test.is_file()):
            raise DatasetError(
                f"{kind.name}: missing {d} split files; expected layout under {root}: {_expected_layout(kind)}")
        pairs.append((train, test))
    return pairs


def iterate_folds(dataset_root, dataset_kind: str,
                  normalize: Optional[bool] = None) -> Iterator[Tuple[FeatureDataset, FeatureDataset]]:
    """Yield ``(train, test)`` per fold, in fold order.

    Validation files are not loaded. ``normalize=None`` applies per-query
    min-max scaling only for kinds that ship raw feature values.
    """
    pairs = fold_paths(dataset_root, dataset_kind)
    kind = DATASET_KINDS[dataset_kind]
    norm = kind.raw_features if normalize is None else normalize
    for train, test in pairs:
        yield (load_dataset(train, kind.num_features, kind.max_grade, "train", norm),
               load_dataset(test, kind.num_features, kind.max_grade, "test", norm))
