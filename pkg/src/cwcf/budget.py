"""Dual ascent on the cost-constraint multiplier.

In the average-target mode the trade-off multiplier is a learned variable:
the dual gradient is the expected episode cost minus the target, estimated
from a sliding window of recently finished training episodes.  Ascent uses
momentum and projects onto lambda >= 0.  Gradients and step sizes are
normalized by the dataset's cost scale so the controller behaves the same
whatever units costs are expressed in.
"""

from __future__ import annotations

import logging
from collections import deque
from typing import NamedTuple

import numpy as np

log = logging.getLogger(__name__)


class LagrangeState:
    def __init__(self, target: float, lr: float = 1e-3, momentum: float = 0.9,
                 window: int = 1000, cost_scale: float = 1.0,
                 osc_window: int = 50):
        if target < 0:
            raise ValueError("target budget must be nonnegative")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if cost_scale <= 0:
            raise ValueError("cost scale must be positive")
        self.target = target
        self.lr = lr
        self.momentum = momentum
        self.cost_scale = cost_scale
        self.lam = 0.0
        self.velocity = 0.0
        self.costs: deque[float] = deque(maxlen=window)
        self._grad_signs: deque[int] = deque(maxlen=osc_window)
        self.updates = 0

    @classmethod
    def for_dataset(cls, dataset, target: float, lr: float = 1e-3,
                    momentum: float = 0.9, window: int = 1000,
                    osc_window: int = 50) -> "LagrangeState":
        return cls(target, lr=lr, momentum=momentum, window=window,
                   cost_scale=float(np.mean(dataset.costs)), osc_window=osc_window)

    def observe(self, costs) -> None:
        self.costs.extend(float(c) for c in costs)

    def gradient(self) -> float:
        """Current dual gradient estimate, E[episode cost] - target."""
        if not self.costs:
            raise ValueError("no completed episodes observed yet")
        return float(np.mean(self.costs)) - self.target

    def oscillation_count(self) -> int:
        """Sign changes of the gradient over the recent updates."""
        signs = [s for s in self._grad_signs if s != 0]
        return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def lambda_step(state: LagrangeState, costs=()) -> LagrangeState:
    """One ascent step; `costs` are newly finished episode costs to record.

    With an empty window this is a warned no-op: there is nothing to
    estimate the expectation from yet.
    """
    state.observe(costs)
    if not state.costs:
        log.warning("lambda update skipped: no completed episodes in window")
        return state
    grad = state.gradient()
    state._grad_signs.append(int(np.sign(grad)))
    # normalize so the update is invariant to rescaling all costs and b
    state.velocity = state.momentum * state.velocity + grad / state.cost_scale
    state.lam = max(0.0, state.lam + (state.lr / state.cost_scale) * state.velocity)
    state.updates += 1
    return state


class Selection(NamedTuple):
    snapshot: object          # the chosen record (needs val_cost / val_accuracy)
    feasible: bool            # False when no snapshot met the constraint


def select_feasible_best(snapshots, target: float) -> Selection:
    """Best validation accuracy among snapshots with mean cost <= target.

    Falls back to the minimum-cost snapshot, flagged infeasible, when
    nothing meets the constraint.  Ties keep the earliest snapshot.
    """
    snapshots = list(snapshots)
    if not snapshots:
        raise ValueError("no snapshots to select from")
    feasible = [s for s in snapshots if s.val_cost <= target]
    if feasible:
        best = max(feasible, key=lambda s: s.val_accuracy)
        return Selection(best, True)
    log.warning("no snapshot meets the cost constraint %.4g; "
                "returning the cheapest one", target)
    return Selection(min(snapshots, key=lambda s: s.val_cost), False)
