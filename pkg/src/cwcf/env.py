"""Sequential feature-acquisition environment.

An episode classifies one sample.  Actions 0..n-1 buy the corresponding
feature; actions n..n+k-1 emit a class prediction and terminate.  Rewards
are never positive: a feature action costs -lambda * c(f) (0 under a hard
budget, where legality enforces the limit instead) and classification pays
the negated misclassification loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .data import Dataset

LAMBDA_FIXED = "lambda"
AVERAGE_TARGET = "average"
HARD = "hard"


@dataclass(frozen=True)
class BudgetSpec:
    """One of: fixed trade-off lambda, average-cost target b, hard per-sample cap b."""

    mode: str
    value: float

    def __post_init__(self):
        if self.mode not in (LAMBDA_FIXED, AVERAGE_TARGET, HARD):
            raise ValueError(f"unknown budget mode {self.mode!r}")
        if self.value < 0:
            raise ValueError(f"budget value must be nonnegative, got {self.value}")

    @classmethod
    def lambda_fixed(cls, lam: float) -> "BudgetSpec":
        return cls(LAMBDA_FIXED, lam)

    @classmethod
    def average_target(cls, b: float) -> "BudgetSpec":
        return cls(AVERAGE_TARGET, b)

    @classmethod
    def hard(cls, b: float) -> "BudgetSpec":
        return cls(HARD, b)

    @property
    def is_hard(self) -> bool:
        return self.mode == HARD


class Observation(NamedTuple):
    """Masked values and the acquisition mask; the agent never sees more."""

    values: np.ndarray   # x masked to acquired entries, 0 elsewhere
    mask: np.ndarray     # 1.0 where acquired

    def vector(self) -> np.ndarray:
        return np.concatenate([self.values, self.mask])


@dataclass
class EnvState:
    sample_index: int
    x: np.ndarray
    y: int
    acquired: np.ndarray   # bool per feature
    spent: float


class IllegalActionError(RuntimeError):
    """An action outside the legal set was attempted; callers must mask first."""


class CostlyFeatureEnv:
    """Owns reward and transition semantics for one sample at a time.

    `training` controls two things: random (vs sequential) sample order and,
    when the data has missing entries and `respect_presence` is set, the
    restriction of feature actions to present entries.
    """

    def __init__(self, dataset: Dataset, split: str, budget: BudgetSpec,
                 rng: np.random.Generator, training: bool = True,
                 lam: float | None = None, respect_presence: bool = True,
                 loss_matrix: np.ndarray | None = None):
        if len(dataset.split.indices(split)) == 0:
            raise ValueError(f"split {split!r} is empty")
        self.dataset = dataset
        self.split_indices = dataset.split.indices(split)
        self.budget = budget
        self.training = training
        self.rng = rng
        self.respect_presence = respect_presence
        if loss_matrix is None:
            loss_matrix = 1.0 - np.eye(dataset.n_classes)
        self.loss_matrix = np.asarray(loss_matrix, dtype=np.float64)
        self.n_features = dataset.n_features
        self.n_actions = dataset.n_features + dataset.n_classes
        if budget.mode == LAMBDA_FIXED:
            self.lam = budget.value
        else:
            self.lam = 0.0 if lam is None else lam
        self._cursor = 0
        self.state: EnvState | None = None

    def set_lambda(self, lam: float) -> None:
        self.lam = lam

    # -- episode control -----------------------------------------------------

    def reset(self) -> Observation:
        if self.training:
            sample = int(self.rng.choice(self.split_indices))
        else:
            sample = int(self.split_indices[self._cursor % len(self.split_indices)])
            self._cursor += 1
        self.state = EnvState(
            sample_index=sample,
            x=self.dataset.features[sample],
            y=int(self.dataset.labels[sample]),
            acquired=np.zeros(self.n_features, dtype=bool),
            spent=0.0,
        )
        return self._observation()

    def _observation(self) -> Observation:
        s = self.state
        mask = s.acquired.astype(np.float64)
        return Observation(s.x * mask, mask)

    def legal_actions(self) -> np.ndarray:
        """Boolean mask over all actions; classification is always legal."""
        s = self.state
        if s is None:
            raise RuntimeError("reset() before querying legal actions")
        legal = np.ones(self.n_actions, dtype=bool)
        feat = ~s.acquired
        if self.budget.is_hard:
            feat &= s.spent + self.dataset.costs <= self.budget.value + 1e-12
        if self.training and self.respect_presence:
            feat &= self.dataset.present[s.sample_index]
        legal[:self.n_features] = feat
        return legal

    def step(self, action: int) -> tuple[Observation | None, float]:
        """Apply one action; returns (next observation, reward), observation
        None when the episode terminated."""
        s = self.state
        if s is None:
            raise RuntimeError("reset() before stepping")
        if not self.legal_actions()[action]:
            raise IllegalActionError(
                f"action {action} illegal at sample {s.sample_index} "
                f"(acquired={np.flatnonzero(s.acquired).tolist()}, spent={s.spent})")
        if action >= self.n_features:  # classification, terminal
            predicted = action - self.n_features
            reward = -float(self.loss_matrix[predicted, s.y])
            self.state = None
            return None, reward
        cost = float(self.dataset.costs[action])
        s.acquired[action] = True
        s.spent += cost
        reward = 0.0 if self.budget.is_hard else -self.lam * cost
        return self._observation(), reward


def episode_cost(episode, costs: np.ndarray) -> float:
    """Total raw (unscaled) cost of the features acquired in a finished episode."""
    n_features = len(costs)
    transitions = episode.transitions
    if not transitions or transitions[-1].next_obs is not None \
            or transitions[-1].action < n_features:
        raise ValueError("episode is not terminated by a classification action")
    return float(sum(costs[t.action] for t in transitions if t.action < n_features))
