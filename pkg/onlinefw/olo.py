"""
Online linear optimization by Follow the Perturbed Leader.

The perturbation is drawn once per oracle (the lazy variant), so a fixed seed
replays the same decision sequence.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.typing import NDArray

from .core import ConstraintSet, InvalidArgumentError, Point


def default_epsilon(horizon: int) -> float:
    if horizon < 1:
        raise InvalidArgumentError(f"horizon must be positive, got {horizon}")
    return 1.0 / math.sqrt(horizon)


class FplOracle:
    def __init__(
        self,
        constraint: ConstraintSet,
        epsilon: float,
        rng: np.random.Generator,
        maximize: bool = True,
    ):
        if not epsilon > 0:
            raise InvalidArgumentError(f"perturbation rate must be positive, got {epsilon}")
        self.constraint = constraint
        self.epsilon = float(epsilon)
        self.maximize = maximize
        self.cumulative_objective = np.zeros(constraint.dim)
        self.perturbation = rng.uniform(0.0, 1.0 / self.epsilon, size=constraint.dim)

    def leader_scores(self) -> NDArray[np.float64]:
        return self.cumulative_objective + self.perturbation

    def next(self) -> Point:
        return self.constraint.linear_optimize(self.leader_scores(), maximize=self.maximize)

    def feedback(self, d) -> None:
        d = np.asarray(d, dtype=np.float64)
        if d.shape != self.cumulative_objective.shape:
            raise InvalidArgumentError(
                f"feedback of shape {d.shape} for an oracle of dimension {self.constraint.dim}"
            )
        self.cumulative_objective += d


def fpl_next(oracle: FplOracle) -> Point:
    return oracle.next()


def fpl_feedback(oracle: FplOracle, d) -> None:
    oracle.feedback(d)


class FplBank:
    """
    `count` independent FPL oracles over one constraint set, stored as
    matrices so all of them advance with a single batched linear optimization.
    Row k behaves exactly like the k-th FplOracle drawn in order from `rng`.
    """

    def __init__(
        self,
        constraint: ConstraintSet,
        count: int,
        epsilon: float,
        rng: np.random.Generator,
        maximize: bool = True,
    ):
        if count < 1:
            raise InvalidArgumentError(f"need at least one oracle, got {count}")
        if not epsilon > 0:
            raise InvalidArgumentError(f"perturbation rate must be positive, got {epsilon}")
        self.constraint = constraint
        self.count = int(count)
        self.epsilon = float(epsilon)
        self.maximize = maximize
        self.cumulative_objective = np.zeros((self.count, constraint.dim))
        self.perturbation = rng.uniform(0.0, 1.0 / self.epsilon, size=(self.count, constraint.dim))

    def __len__(self) -> int:
        return self.count

    def leader_scores(self) -> NDArray[np.float64]:
        return self.cumulative_objective + self.perturbation

    def next_all(self) -> NDArray[np.float64]:
        return self.constraint.linear_optimize_batch(self.leader_scores(), maximize=self.maximize)

    def feedback_all(self, D) -> None:
        D = np.asarray(D, dtype=np.float64)
        if D.shape != self.cumulative_objective.shape:
            raise InvalidArgumentError(f"feedback of shape {D.shape}, expected {self.cumulative_objective.shape}")
        self.cumulative_objective += D
