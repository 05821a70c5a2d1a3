"""
Regret accounting and the comparators it is measured against.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from tqdm import tqdm

from .algorithms import OnlineAlgorithm, OnlineGreedy
from .core import (
    ConstraintSet,
    InvalidArgumentError,
    Objective,
    ObjectiveSense,
    ParseError,
    Point,
    SizeLimitError,
    SumObjective,
)
from .lmo import BudgetedBox, PartitionMatroid
from .problems import ExperimentStream, Setting
from .submodular import (
    CoverageExtension,
    FacilityLocationExtension,
    SetFunction,
    independent_sets,
    pipage_round,
)
from .utils import get_logger
from .vr import Averager

logger = get_logger("Bench")

ONE_MINUS_INV_E = 1.0 - 1.0 / math.e
MAX_BRUTE_FORCE = 15
MAX_DISCRETE_COMPARATOR = 12


# ---------------------------------------------------------------------------
# Regret ledger
# ---------------------------------------------------------------------------

@dataclass
class LedgerRow:
    t: int
    played: float
    comparator: float
    cum_regret: float


class RegretLedger:
    """
    Cumulative alpha-regret: alpha * sum(comparator) - sum(played) when
    maximizing, sum(played) - sum(comparator) when minimizing.
    """

    HEADER = ("t", "played", "comparator", "cum_regret")

    def __init__(self, alpha: float = 1.0, maximize: bool = True):
        if not 0.0 < alpha <= 1.0:
            raise InvalidArgumentError(f"alpha must lie in (0, 1], got {alpha}")
        self.alpha = alpha
        self.maximize = maximize
        self.rows: list[LedgerRow] = []
        self.played_sum = 0.0
        self.comparator_sum = 0.0

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def regret(self) -> float:
        if self.maximize:
            return self.alpha * self.comparator_sum - self.played_sum
        return self.played_sum - self.comparator_sum

    def record(self, played: float, comparator: float) -> float:
        self.played_sum += played
        self.comparator_sum += comparator
        regret = self.regret
        self.rows.append(LedgerRow(len(self.rows) + 1, float(played), float(comparator), regret))
        return regret

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.HEADER)
            for row in self.rows:
                writer.writerow((row.t, repr(row.played), repr(row.comparator), repr(row.cum_regret)))
        return path


def record_round(ledger: RegretLedger, played_value: float, comparator_value: float) -> float:
    return ledger.record(played_value, comparator_value)


def validate_ledger_csv(path: str | Path, rows: int | None = None) -> int:
    """Check the header, consecutive round numbers and finite numeric columns; returns the row count."""
    with open(path, newline="", encoding="utf-8") as fh:
        records = list(csv.reader(fh))
    if not records or tuple(records[0]) != RegretLedger.HEADER:
        raise ParseError(f"{path}: header must be {','.join(RegretLedger.HEADER)}", row=1)
    for lineno, record in enumerate(records[1:], start=2):
        if len(record) != len(RegretLedger.HEADER):
            raise ParseError(f"{path}:{lineno}: expected {len(RegretLedger.HEADER)} fields", row=lineno)
        try:
            t = int(record[0])
            numbers = [float(v) for v in record[1:]]
        except ValueError as e:
            raise ParseError(f"{path}:{lineno}: malformed number", row=lineno) from e
        if t != lineno - 1 or not all(math.isfinite(v) for v in numbers):
            raise ParseError(f"{path}:{lineno}: bad round index or non-finite value", row=lineno)
    count = len(records) - 1
    if rows is not None and count != rows:
        raise ParseError(f"{path}: expected {rows} rounds, found {count}")
    return count


# ---------------------------------------------------------------------------
# Averaging error harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnalysisConstants:
    G: float                    # drift bound: ||a_t - a_{t-1}|| <= G / (t + s)
    sigma: float                # noise: E||noise||^2 <= sigma^2
    s: int = 3
    initial_gap: float = 0.0    # ||a_0 - d_0||^2

    @property
    def Q(self) -> float:
        return max(self.initial_gap * (self.s + 1) ** (2.0 / 3.0), 4.0 * self.sigma ** 2 + 1.5 * self.G ** 2)

    def bound(self, t: int) -> float:
        return self.Q / (t + self.s + 1) ** (2.0 / 3.0)


def averaging_error_experiment(
    constants: AnalysisConstants,
    checkpoints: list[int],
    rng: np.random.Generator,
    trials: int = 200,
    dim: int = 5,
) -> dict[int, float]:
    """
    Track a drifting target a_t from noisy samples with one averager per
    trial and report the mean of ||a_t - d_t||^2 at each checkpoint.
    The drift has norm exactly G / (t + s), the noise E||n||^2 = sigma^2.
    """
    a = rng.standard_normal((trials, dim))
    a *= math.sqrt(constants.initial_gap) / np.linalg.norm(a, axis=1, keepdims=True)
    averager = Averager(np.zeros((trials, dim)))
    wanted = set(checkpoints)
    errors: dict[int, float] = {}

    for t in range(1, max(checkpoints) + 1):
        step = rng.standard_normal((trials, dim))
        step *= (constants.G / (t + constants.s)) / np.linalg.norm(step, axis=1, keepdims=True)
        a = a + step
        noise = constants.sigma / math.sqrt(dim) * rng.standard_normal((trials, dim))
        d = averager.feed(a + noise)
        if t in wanted:
            errors[t] = float(np.mean(np.sum((a - d) ** 2, axis=1)))
    return errors


# ---------------------------------------------------------------------------
# Offline solvers
# ---------------------------------------------------------------------------

def offline_fw(
    objective: Objective,
    constraint: ConstraintSet,
    steps: int,
    sense: ObjectiveSense = ObjectiveSense.MAXIMIZE_DR_SUBMODULAR,
    trace: list[float] | None = None,
) -> Point:
    """
    Maximizing: continuous greedy from 0 with steps of 1/K toward the
    maximizing vertex, a (1 - 1/e) approximation for monotone DR-submodular
    objectives. Minimizing: Frank-Wolfe with step 2 / (k + 2).
    """
    if steps < 1:
        raise InvalidArgumentError(f"steps must be positive, got {steps}")
    if sense.maximize:
        x = np.zeros(constraint.dim)
        for _ in range(steps):
            x = x + constraint.linear_optimize(objective.gradient(x), maximize=True) / steps
            if trace is not None:
                trace.append(objective.value(x))
        return x

    x = constraint.initial_point()
    for k in range(steps):
        v = constraint.linear_optimize(objective.gradient(x), maximize=False)
        eta = 2.0 / (k + 2.0)
        x = (1.0 - eta) * x + eta * v
        if trace is not None:
            trace.append(objective.value(x))
    return x


def brute_force_opt(f, constraint: ConstraintSet, maximize: bool = True):
    """
    Exhaustive search. A SetFunction is maximized over the independent sets
    of a budgeted box or partition matroid and the best set is returned as a
    frozenset; anything with `value` (an extension, or a linear function via
    LinearExtension) is optimized over the polytope's vertices.
    """
    if constraint.dim > MAX_BRUTE_FORCE:
        raise SizeLimitError(f"brute force limited to n <= {MAX_BRUTE_FORCE}, got {constraint.dim}")
    if isinstance(f, SetFunction):
        best_value, best_set = -math.inf, frozenset()
        for mask in independent_sets(constraint):
            value = f(mask)
            if value > best_value:
                best_value, best_set = value, frozenset(np.flatnonzero(mask).tolist())
        return best_value, best_set

    sign = 1.0 if maximize else -1.0
    best_value, best_vertex = -math.inf, None
    for vertex in constraint.vertices():
        value = sign * f.value(vertex)
        if value > best_value:
            best_value, best_vertex = value, vertex
    return sign * best_value, best_vertex


# ---------------------------------------------------------------------------
# Comparators
# ---------------------------------------------------------------------------

class ScaledObjective:
    def __init__(self, base: Objective, factor: float):
        self.base = base
        self.factor = factor

    def value(self, x: Point) -> float:
        return self.factor * self.base.value(x)

    def gradient(self, x: Point) -> Point:
        return self.factor * self.base.gradient(x)


def hindsight_objective(stream: ExperimentStream) -> Objective:
    """The exact sum of all revealed round objectives, merged into one closed form when possible."""
    functions = [r.function for r in stream]
    if all(isinstance(f, FacilityLocationExtension) for f in functions):
        return FacilityLocationExtension(np.vstack([f.ratings for f in functions]))
    if all(isinstance(f, CoverageExtension) for f in functions):
        # averaging over T*J topics instead of J, so scale back by T
        merged = CoverageExtension(np.hstack([f.probabilities for f in functions]))
        return ScaledObjective(merged, float(len(functions)))
    return SumObjective(functions)


@dataclass
class Comparator:
    values: np.ndarray                  # per-round comparator values
    alpha: float = 1.0
    point: Point | None = None
    use_expected: bool = False          # score played points with the expected function
    description: str = ""
    extra: dict = field(default_factory=dict)


def _discrete_comparator(stream: ExperimentStream, steps: int) -> Comparator:
    set_functions = [r.set_function for r in stream]
    constraint = stream.constraint
    total = hindsight_objective(stream)

    if constraint.dim <= MAX_DISCRETE_COMPARATOR:
        best_total, best_mask = -math.inf, None
        for mask in independent_sets(constraint):
            value = total.value(mask.astype(np.float64))
            if value > best_total:
                best_total, best_mask = value, mask
        values = np.array([f(best_mask) for f in set_functions])
        return Comparator(values, ONE_MINUS_INV_E, best_mask.astype(np.float64), description="brute force")

    x = offline_fw(total, constraint, steps, ObjectiveSense.MAXIMIZE_DR_SUBMODULAR)
    X = pipage_round(x, constraint, F=total)
    values = np.array([f(X) for f in set_functions])
    return Comparator(values, 1.0, X, description="rounded offline Frank-Wolfe")


def comparator_values(stream: ExperimentStream, steps: int = 2000) -> Comparator:
    """
    Stochastic streams compare against the optimum of the expected function.
    Adversarial streams compare against the best fixed point for the revealed
    sum, found exactly when known, otherwise by offline Frank-Wolfe (whose
    value stands in for (1 - 1/e) OPT when maximizing).
    """
    sense = stream.sense
    if stream.setting is Setting.STOCHASTIC:
        if stream.expected is None:
            raise InvalidArgumentError("a stochastic stream needs its expected function")
        x = stream.optimum
        if x is None:
            x = offline_fw(stream.expected, stream.constraint, steps, sense)
        value = stream.expected.value(x)
        logger.info("comparator: expected-function optimum %.6g per round", value)
        return Comparator(np.full(stream.horizon, value), 1.0, x, use_expected=True, description="expected optimum")

    if stream.discrete:
        comparator = _discrete_comparator(stream, steps)
    else:
        x = stream.optimum
        description = "closed-form optimum"
        if x is None:
            x = offline_fw(hindsight_objective(stream), stream.constraint, steps, sense)
            description = "offline Frank-Wolfe"
        values = np.array([r.function.value(x) for r in stream])
        comparator = Comparator(values, 1.0, x, description=description)
    logger.info("comparator: %s, total %.6g, alpha %.6f", comparator.description, comparator.values.sum(), comparator.alpha)
    return comparator


# ---------------------------------------------------------------------------
# Playing a stream
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    ledger: RegretLedger
    played_points: list[Point]
    grad_queries: int
    lmo_calls: int
    seconds: float


def play_stream(
    algorithm: OnlineAlgorithm,
    stream: ExperimentStream,
    rng: np.random.Generator,
    comparator: Comparator | None = None,
    steps: int = 2000,
    progress: bool = False,
) -> RunResult:
    """
    Run every round of the stream. Discrete streams round each continuous
    point with randomized pipage and score the set with the round's set
    function.
    """
    if algorithm.horizon != stream.horizon:
        raise InvalidArgumentError(f"algorithm horizon {algorithm.horizon} != stream horizon {stream.horizon}")
    started = time.perf_counter()
    comparator = comparator or comparator_values(stream, steps)
    ledger = RegretLedger(comparator.alpha, maximize=stream.sense.maximize)
    rounding = stream.discrete and not isinstance(algorithm, OnlineGreedy)
    if rounding and not isinstance(stream.constraint, (BudgetedBox, PartitionMatroid)):
        raise InvalidArgumentError("discrete streams need a budgeted box or partition matroid")

    points = []
    for t, objective in enumerate(tqdm(stream, desc=algorithm.name, disable=not progress), start=1):
        x = algorithm.play()
        if rounding:
            X = pipage_round(x, stream.constraint, rng=rng)
        outcome = algorithm.feedback(objective)

        if rounding:
            played = objective.set_function(X)
            points.append(X)
        elif comparator.use_expected:
            played = stream.expected.value(x)
            points.append(x)
        else:
            played = outcome.value
            points.append(x)

        regret = ledger.record(played, comparator.values[t - 1])
        logger.debug("round %d: played %.6g, comparator %.6g, regret %.6g", t, played, comparator.values[t - 1], regret)

    return RunResult(
        ledger=ledger,
        played_points=points,
        grad_queries=algorithm.grad_queries,
        lmo_calls=algorithm.lmo_calls,
        seconds=time.perf_counter() - started,
    )
