import os
from pathlib import Path

import numpy as np
import pytest

from foltr_unlearn.dataset import FeatureDataset, QueryGroup
from foltr_unlearn.synthetic import make_synthetic_fold

MQ2007_ROOT = os.environ.get("FOLTR_MQ2007_ROOT", "")
MSLR10K_ROOT = os.environ.get("FOLTR_MSLR10K_ROOT", "")


def have_dataset(root: str) -> bool:
    return bool(root) and (Path(root) / "Fold1" / "train.txt").is_file()


needs_mq2007 = pytest.mark.skipif(
    not have_dataset(MQ2007_ROOT), reason="MQ2007 not available; set FOLTR_MQ2007_ROOT to its Fold1..Fold5 root")
needs_mslr10k = pytest.mark.skipif(
    not have_dataset(MSLR10K_ROOT), reason="MSLR-WEB10k not available; set FOLTR_MSLR10K_ROOT")


def random_group(rng, num_docs, num_features, max_grade=2, qid="q"):
    return QueryGroup(qid, rng.normal(size=(num_docs, num_features)), rng.integers(0, max_grade + 1, num_docs))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_fold():
    return make_synthetic_fold(0, num_train=40, num_test=20, num_features=6, min_docs=5, max_docs=15)


@pytest.fixture
def tiny_dataset(rng):
    groups = tuple(random_group(rng, n, 4, qid=str(i)) for i, n in enumerate([3, 5, 12]))
    return FeatureDataset(groups, 4, 2, "train")


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
