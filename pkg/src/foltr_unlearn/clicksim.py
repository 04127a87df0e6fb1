"""Cascade-style user click simulation on a result page."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

SERP_CAP = 10

# grade -> probability, 5-level scale then 3-level scale
_CLICK = {
    "perfect": ([0.0, 0.2, 0.4, 0.8, 1.0], [0.0, 0.5, 1.0]),
    "navigational": ([0.05, 0.3, 0.5, 0.7, 0.95], [0.05, 0.5, 0.95]),
    "informational": ([0.4, 0.6, 0.7, 0.8, 0.9], [0.4, 0.7, 0.9]),
}
_STOP = {
    "perfect": ([0.0, 0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0]),
    "navigational": ([0.2, 0.3, 0.5, 0.7, 0.9], [0.2, 0.5, 0.9]),
    "informational": ([0.1, 0.2, 0.3, 0.4, 0.5], [0.1, 0.3, 0.5]),
}

CLICK_MODELS = tuple(_CLICK)


class ClickModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ClickModelParams:
    name: str
    click_prob: np.ndarray
    stop_prob: np.ndarray

    def __post_init__(self):
        click = np.asarray(self.click_prob, dtype=np.float64)
        stop = np.asarray(self.stop_prob, dtype=np.float64)
        if click.shape != stop.shape or click.ndim != 1:
            raise ClickModelError("click and stop probabilities must cover the same grades")
        if click.shape[0] not in (3, 5):
            raise ClickModelError("grade scale must have 3 or 5 levels")
        for arr in (click, stop):
            if np.any(arr < 0) or np.any(arr > 1):
                raise ClickModelError("probabilities must lie in [0, 1]")
            arr.setflags(write=False)
        object.__setattr__(self, "click_prob", click)
        object.__setattr__(self, "stop_prob", stop)

    @property
    def max_grade(self) -> int:
        return self.click_prob.shape[0] - 1

    @property
    def grade_scale(self) -> int:
        return self.click_prob.shape[0]

    def click_map(self) -> Dict[int, float]:
        return {g: float(p) for g, p in enumerate(self.click_prob)}

    def stop_map(self) -> Dict[int, float]:
        return {g: float(p) for g, p in enumerate(self.stop_prob)}


def builtin_model(name: str, grade_scale: int = 5) -> ClickModelParams:
    """One of the perfect / navigational / informational instantiations.

    ``grade_scale`` is the number of relevance levels: 5 for the commercial
    datasets, 3 for MQ2007.
    """
    if name not in _CLICK:
        raise ClickModelError(f"unknown click model {name!r}; expected one of {CLICK_MODELS}")
    if grade_scale not in (3, 5):
        raise ClickModelError(f"grade_scale must be 3 or 5, got {grade_scale}")
    which = 0 if grade_scale == 5 else 1
    return ClickModelParams(name, _CLICK[name][which], _STOP[name][which])


def simulate_browsing(model: ClickModelParams, serp_grades, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Click flags and stop-event flags for one page (1-D grades) or a batch of pages (2-D).

    Each examined document is clicked with probability ``click_prob[grade]``;
    after a click the user stops with probability ``stop_prob[grade]``, and
    nothing below a stop is examined.
    """
    grades = np.asarray(serp_grades, dtype=np.int64)
    single = grades.ndim == 1
    if single:
        grades = grades[None, :]
    m, n = grades.shape
    if n > SERP_CAP:
        raise ClickModelError(f"result page holds at most {SERP_CAP} documents, got {n}")
    if n == 0:
        empty = np.zeros((m, 0), dtype=bool)
        return (empty[0], empty[0]) if single else (empty, empty)
    if grades.min() < 0 or grades.max() > model.max_grade:
        raise ClickModelError(f"grades must lie in [0, {model.max_grade}] for model {model.name}")

    draws = rng.random((2, m, n))
    clicks = draws[0] < model.click_prob[grades]
    stops = clicks & (draws[1] < model.stop_prob[grades])
    # examined = no stop strictly above
    examined = np.cumsum(stops, axis=1) - stops == 0
    clicks &= examined
    stops &= examined
    if single:
        return clicks[0], stops[0]
    return clicks, stops


def simulate_session(model: ClickModelParams, serp_grades: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    """Boolean click flags for a top-down scan that may stop after each click."""
    return simulate_browsing(model, serp_grades, rng)[0]
