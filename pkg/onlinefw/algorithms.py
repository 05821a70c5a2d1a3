"""
Online optimizers. Every algorithm plays a point, then receives the round's
objective (value evaluator plus stochastic gradient oracle) as feedback.

    meta-fw        K Frank-Wolfe steps per round, each direction from its own FPL oracle
    os-fw          one gradient query and one linear optimization per round
    rofw           regularized online Frank-Wolfe (online conditional gradient)
    pga            online projected gradient ascent/descent
    online-greedy  b slot experts over singletons fed with marginal gains
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ConstraintSet,
    InternalInvariantError,
    InvalidArgumentError,
    ObjectiveSense,
    Point,
    RoundObjective,
    Schedule,
    ScheduleKind,
    StochasticGradientOracle,
    UnsupportedOperationError,
    schedule_value,
)
from .lmo import BudgetedBox, PartitionMatroid
from .olo import FplBank, default_epsilon
from .submodular import SetFunction
from .utils import get_logger
from .vr import Averager

logger = get_logger("Algorithms")

FEASIBILITY_TOL = 1e-9


@dataclass
class RoundOutcome:
    played: Point
    value: float | None              # f_t(x_t); None when only an oracle was supplied
    grad_queries: int
    trace: list[Point] | None = field(default=None, repr=False)   # Meta-FW inner iterates x^(1..K)


def _unpack(objective: RoundObjective | StochasticGradientOracle):
    if isinstance(objective, StochasticGradientOracle):
        return objective, None
    return objective.oracle, objective


class OnlineAlgorithm(ABC):
    name = "online"

    def __init__(self, constraint: ConstraintSet, horizon: int, sense: ObjectiveSense):
        if horizon < 1:
            raise InvalidArgumentError(f"horizon must be positive, got {horizon}")
        self.constraint = constraint
        self.horizon = int(horizon)
        self.sense = sense
        self.t = 1                  # index of the round about to be played
        self.grad_queries = 0
        self.lmo_calls = 0

    def _start_point(self) -> Point:
        if self.sense.maximize:
            x = np.zeros(self.constraint.dim)
            if not self.constraint.contains(x):
                raise InvalidArgumentError("maximization needs the zero vector to be feasible")
            return x
        self.lmo_calls += 1
        return self.constraint.initial_point()

    def _check_feasible(self, x: Point) -> Point:
        if not self.constraint.contains(x, tol=FEASIBILITY_TOL):
            raise InternalInvariantError(f"{self.name} produced an infeasible point in round {self.t}")
        return x

    @abstractmethod
    def play(self) -> Point:
        ...

    @abstractmethod
    def feedback(self, objective) -> RoundOutcome:
        ...

    def step(self, objective) -> RoundOutcome:
        self.play()
        return self.feedback(objective)


# ---------------------------------------------------------------------------
# Meta-Frank-Wolfe
# ---------------------------------------------------------------------------

class MetaFrankWolfe(OnlineAlgorithm):
    """
    Each round runs K Frank-Wolfe steps whose directions come from K online
    linear optimizers; the k-th optimizer is then fed the momentum-averaged
    gradient at the k-th iterate. The averager restarts from 0 every round.
    """

    name = "meta-fw"

    def __init__(
        self,
        constraint: ConstraintSet,
        horizon: int,
        sense: ObjectiveSense,
        rng: np.random.Generator,
        K: int | None = None,
        variance_reduction: bool = True,
        epsilon: float | None = None,
    ):
        super().__init__(constraint, horizon, sense)
        self.K = int(K) if K is not None else math.ceil(horizon ** 1.5)
        if self.K < 1:
            raise InvalidArgumentError(f"K must be at least 1, got {self.K}")
        self.variance_reduction = variance_reduction
        self.oracles = FplBank(
            constraint, self.K, epsilon or default_epsilon(horizon), rng, maximize=sense.maximize
        )
        kind = ScheduleKind.RHO_VR if variance_reduction else ScheduleKind.UNIT
        self.averager = Averager.zeros(constraint.dim, Schedule(kind))
        self.x1 = self._start_point()
        self.iterates: np.ndarray | None = None
        self.directions: np.ndarray | None = None
        self.played: Point | None = None

    def eta(self, k: int) -> float:
        if self.sense.maximize:
            return schedule_value(Schedule(ScheduleKind.ETA_SUBMODULAR), k, self.K)
        return schedule_value(Schedule(ScheduleKind.ETA_CONVEX), k)

    def play(self) -> Point:
        V = self.oracles.next_all()
        self.lmo_calls += self.K

        X = np.empty((self.K, self.constraint.dim))
        x = self.x1.copy()
        for k in range(1, self.K + 1):
            X[k - 1] = x
            eta = self.eta(k)
            if self.sense.maximize:
                x = x + eta * V[k - 1]
            else:
                x = (1.0 - eta) * x + eta * V[k - 1]

        self.iterates, self.directions = X, V
        self.played = self._check_feasible(x)
        return self.played

    def feedback(self, objective) -> RoundOutcome:
        if self.played is None:
            raise InvalidArgumentError("feedback before play")
        oracle, round_objective = _unpack(objective)

        self.averager.reset(np.zeros(self.constraint.dim))
        G = oracle.query_batch(self.iterates, round=self.t)
        self.grad_queries += self.K

        D = np.empty_like(G)
        for k in range(self.K):
            D[k] = self.averager.feed(G[k])
        self.oracles.feedback_all(D)

        outcome = RoundOutcome(
            played=self.played,
            value=None if round_objective is None else round_objective.value(self.played),
            grad_queries=self.K,
            trace=list(self.iterates),
        )
        self.played = None
        self.t += 1
        return outcome


def meta_fw_play(state: MetaFrankWolfe) -> Point:
    return state.play()


def meta_fw_feedback(state: MetaFrankWolfe, oracle_access) -> RoundOutcome:
    return state.feedback(oracle_access)


# ---------------------------------------------------------------------------
# One-Shot Frank-Wolfe
# ---------------------------------------------------------------------------

class OneShotFrankWolfe(OnlineAlgorithm):
    """One gradient sample per round; the averager persists across rounds."""

    name = "os-fw"

    def __init__(
        self,
        constraint: ConstraintSet,
        horizon: int,
        sense: ObjectiveSense,
        variance_reduction: bool = True,
    ):
        super().__init__(constraint, horizon, sense)
        self.variance_reduction = variance_reduction
        kind = ScheduleKind.RHO_VR if variance_reduction else ScheduleKind.UNIT
        self.averager = Averager.zeros(constraint.dim, Schedule(kind))
        self.x = self._start_point()
        self.directions: list[Point] = []

    def eta(self, t: int) -> float:
        if self.sense.maximize:
            return schedule_value(Schedule(ScheduleKind.ETA_SUBMODULAR), t, self.horizon)
        return schedule_value(Schedule(ScheduleKind.ETA_CONVEX), t)

    def play(self) -> Point:
        if self.t > self.horizon:
            raise InvalidArgumentError(f"horizon of {self.horizon} rounds exhausted")
        return self._check_feasible(self.x)

    def feedback(self, objective) -> RoundOutcome:
        oracle, round_objective = _unpack(objective)
        played = self.x

        d = self.averager.feed(oracle.query(played, round=self.t))
        self.grad_queries += 1
        v = self.constraint.linear_optimize(d, maximize=self.sense.maximize)
        self.lmo_calls += 1
        self.directions.append(v)

        eta = self.eta(self.t)
        if self.sense.maximize:
            self.x = played + eta * v
        else:
            self.x = (1.0 - eta) * played + eta * v

        outcome = RoundOutcome(
            played=played,
            value=None if round_objective is None else round_objective.value(played),
            grad_queries=1,
        )
        self.t += 1
        return outcome


def one_shot_fw_step(state: OneShotFrankWolfe, oracle_access) -> RoundOutcome:
    return state.step(oracle_access)


# ---------------------------------------------------------------------------
# Regularized online Frank-Wolfe
# ---------------------------------------------------------------------------

class RegularizedOnlineFrankWolfe(OnlineAlgorithm):
    """
    v_t approximately minimizes <G_t, v> + lam ||v - x_1||^2 over the set
    (G_t the signed sum of all gradient samples so far), and the iterate
    moves toward it with step t^(-3/4).
    """

    name = "rofw"

    def __init__(
        self,
        constraint: ConstraintSet,
        horizon: int,
        sense: ObjectiveSense,
        lam: float | None = None,
        inner_steps: int = 50,
    ):
        super().__init__(constraint, horizon, sense)
        self.lam = math.sqrt(horizon) if lam is None else float(lam)
        if self.lam < 0:
            raise InvalidArgumentError(f"regularization must be nonnegative, got {self.lam}")
        self.inner_steps = int(inner_steps)
        self.x1 = self._start_point()
        self.x = self.x1.copy()
        self.cumulative = np.zeros(constraint.dim)

    def surrogate_value(self, v: Point) -> float:
        r = v - self.x1
        return float(np.dot(self.cumulative, v) + self.lam * np.dot(r, r))

    def surrogate_minimizer(self) -> Point:
        """Frank-Wolfe with exact line search on the quadratic surrogate, started at x_1."""
        v = self.x1.copy()
        for _ in range(self.inner_steps):
            grad = self.cumulative + 2.0 * self.lam * (v - self.x1)
            s = self.constraint.linear_optimize(grad, maximize=False)
            self.lmo_calls += 1
            direction = s - v
            gap = -float(np.dot(grad, direction))
            if gap <= 1e-15:
                break
            if self.lam == 0.0:
                gamma = 1.0
            else:
                gamma = min(1.0, gap / (2.0 * self.lam * float(np.dot(direction, direction))))
            v = v + gamma * direction
        return v

    def play(self) -> Point:
        return self._check_feasible(self.x)

    def feedback(self, objective) -> RoundOutcome:
        oracle, round_objective = _unpack(objective)
        played = self.x

        g = oracle.query(played, round=self.t).vector
        self.grad_queries += 1
        self.cumulative += -g if self.sense.maximize else g

        v = self.surrogate_minimizer()
        gamma = self.t ** -0.75
        self.x = (1.0 - gamma) * played + gamma * v

        outcome = RoundOutcome(
            played=played,
            value=None if round_objective is None else round_objective.value(played),
            grad_queries=1,
        )
        self.t += 1
        return outcome


def regularized_ofw_step(state: RegularizedOnlineFrankWolfe, oracle_access) -> RoundOutcome:
    return state.step(oracle_access)


# ---------------------------------------------------------------------------
# Online projected gradient
# ---------------------------------------------------------------------------

class ProjectedGradient(OnlineAlgorithm):
    """x_{t+1} = project(x_t +/- min(1, c/sqrt(t)) g_t); ascent when maximizing."""

    name = "pga"

    def __init__(
        self,
        constraint: ConstraintSet,
        horizon: int,
        sense: ObjectiveSense,
        scale: float | None = None,
    ):
        if not constraint.supports_projection:
            raise UnsupportedOperationError(f"{type(constraint).__name__} does not implement projection")
        super().__init__(constraint, horizon, sense)
        c = constraint.diameter / math.sqrt(2.0) if scale is None else float(scale)
        if not c > 0.0:
            raise InvalidArgumentError(f"step scale must be positive, got {c}; the constraint set is a single point")
        self.schedule = Schedule(ScheduleKind.ETA_PROJECTED_GRADIENT, scale=c)
        self.x = self._start_point()

    def play(self) -> Point:
        return self._check_feasible(self.x)

    def feedback(self, objective) -> RoundOutcome:
        oracle, round_objective = _unpack(objective)
        played = self.x

        g = oracle.query(played, round=self.t).vector
        self.grad_queries += 1
        eta = schedule_value(self.schedule, self.t)
        sign = 1.0 if self.sense.maximize else -1.0
        self.x = self.constraint.project(played + sign * eta * g)

        outcome = RoundOutcome(
            played=played,
            value=None if round_objective is None else round_objective.value(played),
            grad_queries=1,
        )
        self.t += 1
        return outcome


def projected_gradient_step(state: ProjectedGradient, oracle_access) -> RoundOutcome:
    return state.step(oracle_access)


# ---------------------------------------------------------------------------
# Online Greedy
# ---------------------------------------------------------------------------

class OnlineGreedy(OnlineAlgorithm):
    """
    Slot j's expert is FPL over single elements. It picks among the elements
    the earlier slots left over and is rewarded with each element's marginal
    gain on top of those earlier picks.
    """

    name = "online-greedy"

    def __init__(
        self,
        n: int,
        budget: int,
        horizon: int,
        rng: np.random.Generator,
        epsilon: float | None = None,
    ):
        if not 1 <= budget <= n:
            raise InvalidArgumentError(f"budget must lie in [1, {n}], got {budget}")
        super().__init__(BudgetedBox(n, budget), horizon, ObjectiveSense.MAXIMIZE_DR_SUBMODULAR)
        self.budget = int(budget)
        self.experts = FplBank(
            PartitionMatroid.uniform(n, 1), self.budget, epsilon or default_epsilon(horizon), rng
        )
        self.picks: list[int] = []
        self.played: Point | None = None

    def play(self) -> Point:
        scores = self.experts.leader_scores()
        taken = np.zeros(self.constraint.dim, dtype=bool)
        self.picks = []
        for j in range(self.budget):
            e = int(np.argmax(np.where(taken, -np.inf, scores[j])))
            taken[e] = True
            self.picks.append(e)
        self.lmo_calls += self.budget
        self.played = self._check_feasible(taken.astype(np.float64))
        return self.played

    def feedback(self, objective) -> RoundOutcome:
        if self.played is None:
            raise InvalidArgumentError("feedback before play")
        f = objective if isinstance(objective, SetFunction) else objective.set_function
        if f is None:
            raise InvalidArgumentError("online greedy needs the round's set function")

        gains = np.empty((self.budget, self.constraint.dim))
        prefix = np.zeros(self.constraint.dim, dtype=bool)
        for j, e in enumerate(self.picks):
            gains[j] = np.where(prefix, 0.0, f.marginals(prefix))
            prefix[e] = True
        self.experts.feedback_all(gains)

        outcome = RoundOutcome(played=self.played, value=f(prefix), grad_queries=0)
        self.played = None
        self.t += 1
        return outcome


def online_greedy_step(state: OnlineGreedy, f: SetFunction) -> tuple[frozenset[int], float]:
    state.play()
    outcome = state.feedback(f)
    return frozenset(state.picks), outcome.value


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

ALGORITHMS = ("meta-fw", "meta-fw-novr", "os-fw", "os-fw-novr", "rofw", "pga", "online-greedy")


def make_algorithm(
    name: str,
    constraint: ConstraintSet,
    horizon: int,
    sense: ObjectiveSense,
    rng: np.random.Generator,
    K: int | None = None,
    lam: float | None = None,
    inner_steps: int = 50,
    pg_scale: float | None = None,
) -> OnlineAlgorithm:
    if name in ("meta-fw", "meta-fw-novr"):
        alg = MetaFrankWolfe(constraint, horizon, sense, rng, K=K, variance_reduction=name == "meta-fw")
    elif name in ("os-fw", "os-fw-novr"):
        alg = OneShotFrankWolfe(constraint, horizon, sense, variance_reduction=name == "os-fw")
    elif name == "rofw":
        alg = RegularizedOnlineFrankWolfe(constraint, horizon, sense, lam=lam, inner_steps=inner_steps)
    elif name == "pga":
        alg = ProjectedGradient(constraint, horizon, sense, scale=pg_scale)
    elif name == "online-greedy":
        if not isinstance(constraint, BudgetedBox) or not constraint.budget.is_integer():
            raise InvalidArgumentError("online greedy needs a cardinality budget")
        alg = OnlineGreedy(constraint.dim, int(constraint.budget), horizon, rng)
    else:
        raise InvalidArgumentError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")
    logger.debug("built %s on %r for %d rounds", alg.name, constraint, horizon)
    return alg
