"""Poisoned-client scenarios used to check that unlearning removes a client."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from foltr_unlearn.federation import SubmitHook
from foltr_unlearn.ranker import LinearRanker, ModelDelta


class Scenario(str, enum.Enum):
    NINE_H_ONE_M = "9H-1M"
    TEN_H_ZERO_M = "10H-0M"
    NINE_H_ZERO_M = "9H-0M"
    UNLEARN_NINE_H_ONE_M = "U(9H-1M)"

    @classmethod
    def parse(cls, text: str) -> "Scenario":
        aliases = {s.value.lower(): s for s in cls}
        aliases.update({s.name.lower().replace("_", ""): s for s in cls})
        aliases.update({"unlearn": cls.UNLEARN_NINE_H_ONE_M, "u9h1m": cls.UNLEARN_NINE_H_ONE_M})
        key = text.strip().lower()
        if key in aliases:
            return aliases[key]
        squashed = key.replace("_", "").replace("-", "")
        for k, v in aliases.items():
            if k.replace("-", "") == squashed:
                return v
        raise ValueError(f"unknown scenario {text!r}; expected one of {[s.value for s in cls]}")


class AdversaryError(ValueError):
    pass


def _check_z(z: float) -> None:
    if not z > 0:
        raise AdversaryError(f"poison strength z must be positive, got {z}")


@dataclass(frozen=True)
class ScenarioConfig:
    kind: Scenario = Scenario.NINE_H_ONE_M
    z: float = 2.0
    target_client: Optional[int] = 0

    def __post_init__(self):
        _check_z(self.z)
        if self.kind != Scenario.TEN_H_ZERO_M and self.target_client is None:
            raise AdversaryError(f"scenario {self.kind.value} needs a target client")

    @property
    def poisoned(self) -> bool:
        return self.kind in (Scenario.NINE_H_ONE_M, Scenario.UNLEARN_NINE_H_ONE_M)

    def training_clients(self, num_clients: int) -> List[int]:
        ids = list(range(num_clients))
        if self.kind == Scenario.TEN_H_ZERO_M:
            return ids
        if self.target_client not in ids:
            raise AdversaryError(f"target client {self.target_client} is not one of clients 0..{num_clients - 1}")
        if self.kind == Scenario.NINE_H_ZERO_M:
            return [c for c in ids if c != self.target_client]
        return ids

    def remaining_clients(self, num_clients: int) -> List[int]:
        return [c for c in range(num_clients) if c != self.target_client]


def poison_weights(local: np.ndarray, z: float) -> np.ndarray:
    _check_z(z)
    return -z * local


def poison_delta(local_delta: np.ndarray, global_weights: np.ndarray, z: float) -> np.ndarray:
    _check_z(z)
    if local_delta.shape != global_weights.shape:
        raise AdversaryError(f"dimension mismatch: {local_delta.shape} vs {global_weights.shape}")
    # -z (g + delta) - g, i.e. -z delta - (z + 1) g, evaluated through the local model so it
    # agrees bit-for-bit with poison_weights(local) - g
    return poison_weights(global_weights + local_delta, z) - global_weights


def poison_model(local: LinearRanker, z: float) -> LinearRanker:
    """Sign-flipped, z-scaled copy of a local model."""
    return LinearRanker(poison_weights(local.weights, z))


def poison_update(local_delta: ModelDelta, global_model: LinearRanker, z: float) -> ModelDelta:
    """The update that turns the global model into ``poison_model`` of the local one."""
    return ModelDelta(poison_delta(local_delta.delta, global_model.weights, z))


def _identity(client_id: int, delta: np.ndarray, global_weights: np.ndarray) -> np.ndarray:
    return delta


def scenario_hooks(scenario: ScenarioConfig, num_clients: int = 10) -> SubmitHook:
    """Submission hook for ``run_training``: poisons the target client in 9H-1M, identity otherwise."""
    scenario.training_clients(num_clients)
    if not scenario.poisoned:
        return _identity
    target, z = scenario.target_client, scenario.z

    def hook(client_id: int, delta: np.ndarray, global_weights: np.ndarray) -> np.ndarray:
        if client_id == target:
            return poison_delta(delta, global_weights, z)
        return delta

    return hook
