"""
Core domain types shared by every algorithm: points, the constraint-set
contract, stochastic gradient oracles, objective sense and step-size schedules.
"""

from __future__ import annotations

import math
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Callable, Protocol, Sequence, TypeAlias

import numpy as np
from numpy.typing import NDArray

if TYPE_CHECKING:
    from .submodular import SetFunction

Point: TypeAlias = NDArray[np.float64]


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class OnlineFWError(Exception):
    pass


class InvalidArgumentError(OnlineFWError, ValueError):
    pass


class InfeasibleConstraintError(OnlineFWError):
    pass


class UnsupportedOperationError(OnlineFWError):
    pass


class InternalInvariantError(OnlineFWError, AssertionError):
    pass


class SizeLimitError(OnlineFWError):
    pass


class ConfigError(OnlineFWError):
    pass


class ParseError(OnlineFWError, ValueError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


# ---------------------------------------------------------------------------
# Points and randomness
# ---------------------------------------------------------------------------

def as_point(coords, dim: int | None = None) -> Point:
    """Copy `coords` into a finite float vector, optionally checking its dimension."""
    p = np.array(coords, dtype=np.float64).reshape(-1)
    if dim is not None and p.shape[0] != dim:
        raise InvalidArgumentError(f"expected dimension {dim}, got {p.shape[0]}")
    if not np.all(np.isfinite(p)):
        raise InvalidArgumentError("point has non-finite entries")
    return p


def make_rng(seed: int | None) -> np.random.Generator:
    return np.random.default_rng(seed)


def spawn_rngs(rng: np.random.Generator, count: int) -> list[np.random.Generator]:
    """Independent child generators; the parent advances deterministically."""
    return list(rng.spawn(count))


class ObjectiveSense(Enum):
    MINIMIZE_CONVEX = "convex"
    MAXIMIZE_DR_SUBMODULAR = "submodular"

    @property
    def maximize(self) -> bool:
        return self is ObjectiveSense.MAXIMIZE_DR_SUBMODULAR


# ---------------------------------------------------------------------------
# Constraint sets
# ---------------------------------------------------------------------------

class ConstraintSet(ABC):
    """
    A compact convex feasible region K in R^dim.

    Subclasses provide an exact linear optimization oracle and a membership
    test; projection is optional.
    """

    dim: int

    @property
    @abstractmethod
    def diameter(self) -> float:
        ...

    @property
    @abstractmethod
    def radius(self) -> float:
        ...

    @abstractmethod
    def linear_optimize(self, d: Point, maximize: bool = True) -> Point:
        ...

    def linear_optimize_batch(self, D: NDArray[np.float64], maximize: bool = True) -> NDArray[np.float64]:
        """Row-wise linear optimization; subclasses override with vectorized versions."""
        D = np.atleast_2d(np.asarray(D, dtype=np.float64))
        return np.vstack([self.linear_optimize(row, maximize) for row in D])

    @abstractmethod
    def contains(self, p: Point, tol: float = 1e-9) -> bool:
        ...

    @property
    def supports_projection(self) -> bool:
        return False

    def project(self, y: Point) -> Point:
        raise UnsupportedOperationError(f"{type(self).__name__} does not implement projection")

    def vertices(self) -> NDArray[np.float64]:
        raise UnsupportedOperationError(f"{type(self).__name__} does not enumerate vertices")

    def initial_point(self) -> Point:
        """A canonical feasible point: the minimizer of the zero objective."""
        return self.linear_optimize(np.zeros(self.dim), maximize=False)

    def check_dim(self, d) -> Point:
        d = np.asarray(d, dtype=np.float64).reshape(-1)
        if d.shape[0] != self.dim:
            raise InvalidArgumentError(
                f"{type(self).__name__} has dimension {self.dim}, got a vector of dimension {d.shape[0]}"
            )
        return d


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------

class Objective(Protocol):
    def value(self, x: Point) -> float:
        ...

    def gradient(self, x: Point) -> Point:
        ...


class QuadraticObjective:
    """f(x) = sum_i w_i (x_i - c_i)^2."""

    def __init__(self, weights, center=None):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.center = np.zeros_like(self.weights) if center is None else np.asarray(center, dtype=np.float64)
        if self.center.shape != self.weights.shape:
            raise InvalidArgumentError("weights and center must share a shape")

    def value(self, x: Point) -> float:
        r = x - self.center
        return float(np.dot(self.weights, r * r))

    def gradient(self, x: Point) -> Point:
        return 2.0 * self.weights * (x - self.center)


class SumObjective:
    """Pointwise sum of objectives, used for hindsight comparators."""

    def __init__(self, parts: Sequence[Objective]):
        if not parts:
            raise InvalidArgumentError("SumObjective needs at least one part")
        self.parts = list(parts)

    def value(self, x: Point) -> float:
        return float(sum(p.value(x) for p in self.parts))

    def gradient(self, x: Point) -> Point:
        g = self.parts[0].gradient(x).copy()
        for p in self.parts[1:]:
            g += p.gradient(x)
        return g


# ---------------------------------------------------------------------------
# Stochastic gradient oracles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GradientSample:
    vector: Point
    round: int = 0
    inner_step: int = 0


class StochasticGradientOracle(ABC):
    """
    Unbiased stochastic first-order access to one round's objective.
    Instances that consume an RNG are not shareable across threads.
    """

    sigma: float | None = None

    def __init__(self) -> None:
        self._count = 0
        self._lock = threading.Lock()

    @property
    def query_count(self) -> int:
        return self._count

    def _tick(self, n: int = 1) -> None:
        with self._lock:
            self._count += n

    @abstractmethod
    def _sample(self, x: Point) -> Point:
        ...

    def query(self, x: Point, round: int = 0, inner_step: int = 0) -> GradientSample:
        self._tick()
        return GradientSample(self._sample(np.asarray(x, dtype=np.float64)), round, inner_step)

    def query_batch(self, points: NDArray[np.float64], round: int = 0) -> NDArray[np.float64]:
        """Stacked sample vectors for the rows of `points` (inner steps 1..len)."""
        return np.vstack([self.query(p, round, k + 1).vector for k, p in enumerate(points)])


class FiniteSumOracle(StochasticGradientOracle):
    def __init__(self, component_gradients: Sequence[Callable[[Point], Point]], rng: np.random.Generator):
        super().__init__()
        self.components = list(component_gradients)
        self.rng = rng

    def _sample(self, x: Point) -> Point:
        i = int(self.rng.integers(len(self.components)))
        return np.asarray(self.components[i](x), dtype=np.float64)


def make_finite_sum_oracle(
    component_gradients: Sequence[Callable[[Point], Point]],
    rng: np.random.Generator,
) -> FiniteSumOracle:
    """
    Oracle for the average of the components: each query returns the gradient
    of one component drawn uniformly at random.
    """
    if len(component_gradients) == 0:
        raise InvalidArgumentError("finite-sum oracle needs at least one component")
    return FiniteSumOracle(component_gradients, rng)


class GaussianNoiseOracle(StochasticGradientOracle):
    """Exact gradient plus i.i.d. N(0, sigma^2) noise on every coordinate."""

    def __init__(self, function: Objective, sigma: float, rng: np.random.Generator):
        super().__init__()
        if sigma < 0:
            raise InvalidArgumentError("sigma must be nonnegative")
        self.function = function
        self.sigma = sigma
        self.rng = rng

    def _sample(self, x: Point) -> Point:
        g = self.function.gradient(x)
        if self.sigma > 0:
            g = g + self.sigma * self.rng.standard_normal(g.shape)
        return g

    def query_batch(self, points: NDArray[np.float64], round: int = 0) -> NDArray[np.float64]:
        self._tick(len(points))
        G = np.vstack([self.function.gradient(p) for p in points])
        if self.sigma > 0:
            G = G + self.sigma * self.rng.standard_normal(G.shape)
        return G


@dataclass(frozen=True)
class RoundObjective:
    """What the player gets access to in one round."""
    function: Objective
    oracle: StochasticGradientOracle
    set_function: SetFunction | None = None

    def value(self, x: Point) -> float:
        return self.function.value(x)


# ---------------------------------------------------------------------------
# Step-size schedules
# ---------------------------------------------------------------------------

class ScheduleKind(Enum):
    RHO_VR = "rho_vr"
    ETA_CONVEX = "eta_convex"
    ETA_SUBMODULAR = "eta_submodular"
    ETA_PROJECTED_GRADIENT = "eta_projected_gradient"
    UNIT = "unit"


@dataclass(frozen=True)
class Schedule:
    kind: ScheduleKind
    shift: int = 3
    scale: float = 1.0      # c in c/sqrt(k), projected-gradient only


def schedule_value(schedule: Schedule, k: int, horizon: int | None = None) -> float:
    """
    Step size at index k >= 1:
      RHO_VR                  2 / (k + s)^(2/3)
      ETA_CONVEX              1 / (k + s)
      ETA_SUBMODULAR          1 / K
      ETA_PROJECTED_GRADIENT  min(1, c / sqrt(k)), c > 0
      UNIT                    1
    """
    if k < 1:
        raise InvalidArgumentError(f"schedule index must be positive, got {k}")
    if horizon is not None and horizon < 1:
        raise InvalidArgumentError(f"horizon must be positive, got {horizon}")
    kind = schedule.kind
    if kind is ScheduleKind.RHO_VR:
        return min(1.0, 2.0 / (k + schedule.shift) ** (2.0 / 3.0))
    if kind is ScheduleKind.ETA_CONVEX:
        return 1.0 / (k + schedule.shift)
    if kind is ScheduleKind.ETA_SUBMODULAR:
        if horizon is None:
            raise InvalidArgumentError("ETA_SUBMODULAR needs the horizon K")
        return 1.0 / horizon
    if kind is ScheduleKind.ETA_PROJECTED_GRADIENT:
        if not schedule.scale > 0.0:
            raise InvalidArgumentError(f"projected-gradient scale must be positive, got {schedule.scale}")
        return min(1.0, schedule.scale / math.sqrt(k))
    return 1.0
