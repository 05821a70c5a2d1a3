"""
Experiment streams: a constraint set plus one (objective, stochastic gradient
oracle) pair per round, built from ratings, topic distributions, a flow
network, a low-rank matrix, or synthetic quadratics.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from numpy.typing import NDArray

from .core import (
    ConstraintSet,
    GaussianNoiseOracle,
    InvalidArgumentError,
    Objective,
    ObjectiveSense,
    ParseError,
    Point,
    QuadraticObjective,
    RoundObjective,
    StochasticGradientOracle,
    spawn_rngs,
)
from .lmo import BudgetedBox, FlowNetwork, NuclearBall
from .submodular import (
    CoverageExtension,
    FacilityLocation,
    FacilityLocationExtension,
    MultilinearSampleOracle,
    ProbabilisticCoverage,
)
from .utils import get_logger

logger = get_logger("Problems")

root_dir = Path(__file__).resolve().parent
ZACHARY_PATH = root_dir / "data" / "zachary.edges"

RATING_MAX = 20.0


class Setting(Enum):
    ADVERSARIAL = "adversarial"
    STOCHASTIC = "stochastic"


# ---------------------------------------------------------------------------
# Stream container
# ---------------------------------------------------------------------------

@dataclass
class RatingsMatrix:
    values: NDArray[np.float64]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.size == 0:
            raise InvalidArgumentError("ratings must be a nonempty users x items matrix")
        if np.any(self.values < 0) or np.any(self.values > RATING_MAX):
            raise InvalidArgumentError(f"ratings must lie in [0, {RATING_MAX:g}]")

    @property
    def users(self) -> int:
        return self.values.shape[0]

    @property
    def items(self) -> int:
        return self.values.shape[1]


@dataclass
class ExperimentStream:
    name: str
    constraint: ConstraintSet
    rounds: list[RoundObjective]
    sense: ObjectiveSense
    setting: Setting = Setting.ADVERSARIAL
    expected: Objective | None = None       # mean objective of a stochastic stream
    optimum: Point | None = None            # exact comparator point, when known in closed form
    discrete: bool = False                  # play rounded sets and score them with the set function
    batch_size: int | None = None
    seed: int | None = None
    with_replacement: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.rounds:
            raise InvalidArgumentError("a stream needs at least one round")
        origin = np.zeros(self.constraint.dim)
        for t, r in enumerate(self.rounds, start=1):
            shape = np.shape(r.function.gradient(origin))
            if shape != (self.constraint.dim,):
                raise InvalidArgumentError(
                    f"round {t} objective has gradient shape {shape}, constraint dimension is {self.constraint.dim}"
                )

    @property
    def horizon(self) -> int:
        return len(self.rounds)

    def __len__(self) -> int:
        return len(self.rounds)

    def __iter__(self) -> Iterator[RoundObjective]:
        return iter(self.rounds)

    def __getitem__(self, t: int) -> RoundObjective:
        return self.rounds[t]


def _batches(count: int, batch_size: int, horizon: int, rng: np.random.Generator, what: str):
    """Disjoint batches when there is enough data, otherwise sampling with replacement."""
    if batch_size < 1 or horizon < 1:
        raise InvalidArgumentError("batch size and horizon must be positive")
    if batch_size * horizon <= count:
        return rng.permutation(count)[: batch_size * horizon].reshape(horizon, batch_size), False
    logger.warning(
        "%d %s cannot fill %d disjoint batches of %d; sampling with replacement",
        count, what, horizon, batch_size,
    )
    return rng.integers(count, size=(horizon, batch_size)), True


# ---------------------------------------------------------------------------
# Facility location on ratings
# ---------------------------------------------------------------------------

def facility_stream(
    ratings: RatingsMatrix,
    batch_size: int,
    horizon: int,
    budget: float,
    rng: np.random.Generator,
    discrete: bool = False,
    seed: int | None = None,
) -> ExperimentStream:
    """
    Round t scores the extension of f_t(S) = sum_{u in B_t} max_{j in S} R[u, j]
    over its batch of users; gradients use one shared sample per query.
    """
    if not isinstance(ratings, RatingsMatrix):
        ratings = RatingsMatrix(ratings)
    batches, replaced = _batches(ratings.users, batch_size, horizon, rng, "users")

    rounds = []
    for batch, round_rng in zip(batches, spawn_rngs(rng, horizon)):
        R = ratings.values[batch]
        f = FacilityLocation(R)
        rounds.append(RoundObjective(FacilityLocationExtension(R), MultilinearSampleOracle(f, round_rng), f))

    logger.info(
        "facility stream: %d items, %d rounds of %d users, budget %g%s",
        ratings.items, horizon, batch_size, budget, " (discrete)" if discrete else "",
    )
    return ExperimentStream(
        name="facility-disc" if discrete else "facility-cont",
        constraint=BudgetedBox(ratings.items, budget),
        rounds=rounds,
        sense=ObjectiveSense.MAXIMIZE_DR_SUBMODULAR,
        discrete=discrete,
        batch_size=batch_size,
        seed=seed,
        with_replacement=replaced,
    )


# ---------------------------------------------------------------------------
# Probabilistic coverage of topics
# ---------------------------------------------------------------------------

def coverage_stream(
    topics,
    horizon: int,
    rng: np.random.Generator,
    batch_size: int = 50,
    budget: float = 45,
    seed: int | None = None,
) -> ExperimentStream:
    """Coordinate a of round t is the a-th document of batch t."""
    P = np.asarray(topics, dtype=np.float64)
    if P.ndim != 2 or P.size == 0:
        raise InvalidArgumentError("topic distributions must be a nonempty docs x topics matrix")
    if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-6):
        raise InvalidArgumentError("every document's topic distribution must be a probability vector")
    batches, replaced = _batches(P.shape[0], batch_size, horizon, rng, "documents")

    rounds = []
    for batch, round_rng in zip(batches, spawn_rngs(rng, horizon)):
        f = ProbabilisticCoverage(P[batch])
        rounds.append(RoundObjective(CoverageExtension(P[batch]), MultilinearSampleOracle(f, round_rng), f))

    logger.info("coverage stream: %d topics, %d rounds of %d documents, budget %g", P.shape[1], horizon, batch_size, budget)
    return ExperimentStream(
        name="coverage",
        constraint=BudgetedBox(batch_size, budget),
        rounds=rounds,
        sense=ObjectiveSense.MAXIMIZE_DR_SUBMODULAR,
        batch_size=batch_size,
        seed=seed,
        with_replacement=replaced,
    )


# ---------------------------------------------------------------------------
# Stochastic-cost network flow
# ---------------------------------------------------------------------------

W_LOW, W_HIGH = 100.0, 120.0


def flow_stream(
    net: FlowNetwork,
    horizon: int,
    rng: np.random.Generator,
    sigma: float = 0.0,
    seed: int | None = None,
) -> ExperimentStream:
    """f_t(x) = sum_e w_e x_e^2 with w_e ~ Unif[100, 120] drawn fresh every round."""
    if horizon < 1:
        raise InvalidArgumentError("horizon must be positive")
    weights = rng.uniform(W_LOW, W_HIGH, size=(horizon, net.dim))
    rounds = []
    for w, round_rng in zip(weights, spawn_rngs(rng, horizon)):
        f = QuadraticObjective(w)
        rounds.append(RoundObjective(f, GaussianNoiseOracle(f, sigma, round_rng)))

    logger.info("flow stream: %r, %d rounds, sigma %g", net, horizon, sigma)
    return ExperimentStream(
        name="flow",
        constraint=net,
        rounds=rounds,
        sense=ObjectiveSense.MINIMIZE_CONVEX,
        setting=Setting.STOCHASTIC,
        expected=QuadraticObjective(np.full(net.dim, (W_LOW + W_HIGH) / 2.0)),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Online matrix completion
# ---------------------------------------------------------------------------

class BatchSquaredError:
    """sum_{(i, j) in batch} (X_ij - M_ij)^2 on the flattened decision matrix."""

    def __init__(self, target: NDArray[np.float64], rows, cols):
        self.target = target
        self.shape = target.shape
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        if (
            self.rows.shape != self.cols.shape
            or np.any(self.rows < 0) or np.any(self.rows >= self.shape[0])
            or np.any(self.cols < 0) or np.any(self.cols >= self.shape[1])
        ):
            raise InvalidArgumentError("observed index out of range")
        self.flat = np.ravel_multi_index((self.rows, self.cols), self.shape)
        self.observed = self.target.reshape(-1)[self.flat]

    def value(self, x: Point) -> float:
        r = np.asarray(x).reshape(-1)[self.flat] - self.observed
        return float(np.dot(r, r))

    def gradient(self, x: Point) -> Point:
        g = np.zeros(self.target.size)
        np.add.at(g, self.flat, 2.0 * (np.asarray(x).reshape(-1)[self.flat] - self.observed))
        return g

    def entry_gradient(self, x: Point, k: int) -> Point:
        g = np.zeros(self.target.size)
        g[self.flat[k]] = 2.0 * (x.reshape(-1)[self.flat[k]] - self.observed[k])
        return g


class EntrySampleOracle(StochasticGradientOracle):
    """One observed entry per query, scaled by the batch size."""

    def __init__(self, objective: BatchSquaredError, rng: np.random.Generator):
        super().__init__()
        self.objective = objective
        self.rng = rng

    def _sample(self, x: Point) -> Point:
        B = self.objective.flat.size
        k = int(self.rng.integers(B))
        return B * self.objective.entry_gradient(x, k)


def matrix_completion_stream(
    target,
    batches: Sequence[tuple[Sequence[int], Sequence[int]]],
    rng: np.random.Generator,
    radius: float | None = None,
    seed: int | None = None,
) -> ExperimentStream:
    """`batches[t]` holds the (rows, cols) observed in round t; the radius defaults to ||M||_*."""
    M = np.asarray(target, dtype=np.float64)
    if M.ndim != 2:
        raise InvalidArgumentError("target must be a matrix")
    k = float(np.linalg.svd(M, compute_uv=False).sum()) if radius is None else float(radius)

    rounds = []
    for (rows, cols), round_rng in zip(batches, spawn_rngs(rng, len(batches))):
        f = BatchSquaredError(M, rows, cols)
        rounds.append(RoundObjective(f, EntrySampleOracle(f, round_rng)))

    logger.info("matrix completion stream: %dx%d, %d rounds, nuclear radius %.3f", M.shape[0], M.shape[1], len(rounds), k)
    return ExperimentStream(
        name="matcomp",
        constraint=NuclearBall(M.shape, k),
        rounds=rounds,
        sense=ObjectiveSense.MINIMIZE_CONVEX,
        batch_size=len(batches[0][0]) if batches else None,
        seed=seed,
        metadata={"target": M},
    )


def observation_batches(shape: tuple[int, int], batch_size: int, horizon: int, rng: np.random.Generator):
    """Disjoint uniformly random entry batches while entries last, then with replacement."""
    flat, _ = _batches(shape[0] * shape[1], batch_size, horizon, rng, "entries")
    return [np.unravel_index(b, shape) for b in flat]


# ---------------------------------------------------------------------------
# Synthetic quadratics
# ---------------------------------------------------------------------------

def quadratic_stream(
    constraint: ConstraintSet,
    horizon: int,
    rng: np.random.Generator,
    sigma: float = 1.0,
    setting: Setting = Setting.ADVERSARIAL,
    seed: int | None = None,
) -> ExperimentStream:
    """
    f_t(x) = ||x - c_t||^2 with noisy gradients.

    Adversarial: the targets alternate between two random points of the cube,
    so the hindsight optimum is the projection of their running mean.
    Stochastic: i.i.d. targets around a fixed mean mu, expected function
    ||x - mu||^2 + const.
    """
    n = constraint.dim
    if setting is Setting.ADVERSARIAL:
        anchors = rng.uniform(-0.5, 1.5, size=(2, n))
        centers = anchors[np.arange(horizon) % 2]
        mean = centers.mean(axis=0)
        expected = None
    else:
        mean = rng.uniform(0.0, 1.0, size=n)
        centers = mean + 0.5 * rng.standard_normal((horizon, n))
        expected = QuadraticObjective(np.ones(n), mean)

    rounds = []
    for c, round_rng in zip(centers, spawn_rngs(rng, horizon)):
        f = QuadraticObjective(np.ones(n), c)
        rounds.append(RoundObjective(f, GaussianNoiseOracle(f, sigma, round_rng)))

    optimum = constraint.project(mean) if constraint.supports_projection else None
    return ExperimentStream(
        name="synthetic-convex",
        constraint=constraint,
        rounds=rounds,
        sense=ObjectiveSense.MINIMIZE_CONVEX,
        setting=setting,
        expected=expected,
        optimum=optimum,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Generators and loaders
# ---------------------------------------------------------------------------

def synthetic_ratings(users: int, items: int, rng: np.random.Generator, rank: int = 3, noise: float = 2.0) -> RatingsMatrix:
    """Low-rank preferences plus noise on the [-10, 10] scale, clipped and shifted to [0, 20]."""
    U = rng.standard_normal((users, rank))
    V = rng.standard_normal((rank, items))
    raw = 10.0 * np.tanh(U @ V / math.sqrt(rank)) + noise * rng.standard_normal((users, items))
    return RatingsMatrix(np.clip(raw, -10.0, 10.0) + 10.0)


def synthetic_topics(docs: int, topics: int, rng: np.random.Generator, concentration: float = 0.3) -> NDArray[np.float64]:
    return rng.dirichlet(np.full(topics, concentration), size=docs)


def synthetic_low_rank(m: int, n: int, rank: int, rng: np.random.Generator) -> NDArray[np.float64]:
    return rng.standard_normal((m, rank)) @ rng.standard_normal((rank, n)) / math.sqrt(rank)


def _read_numeric_rows(path: str | Path) -> list[list[float]]:
    rows = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not cell.strip() for cell in record):
                continue
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise ParseError(f"{path}:{lineno}: expected {width} fields, found {len(record)}", row=lineno)
            try:
                rows.append([float(cell) if cell.strip() else math.nan for cell in record])
            except ValueError as e:
                raise ParseError(f"{path}:{lineno}: non-numeric cell", row=lineno) from e
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return rows


def load_ratings_csv(path: str | Path, lo: float = -10.0, hi: float = 10.0) -> RatingsMatrix:
    """users x items grid; cells are mapped affinely from [lo, hi] to [0, 20], empty cells become 0."""
    if not hi > lo:
        raise InvalidArgumentError(f"rating range [{lo}, {hi}] is empty")
    raw = np.array(_read_numeric_rows(path))
    scaled = (raw - lo) * (RATING_MAX / (hi - lo))
    scaled = np.where(np.isnan(raw), 0.0, scaled)
    if np.any(scaled < -1e-9) or np.any(scaled > RATING_MAX + 1e-9):
        raise ParseError(f"{path}: ratings outside the declared range [{lo}, {hi}]")
    return RatingsMatrix(np.clip(scaled, 0.0, RATING_MAX))


def load_topics_csv(path: str | Path) -> NDArray[np.float64]:
    """docs x topics grid whose rows sum to 1."""
    P = np.array(_read_numeric_rows(path))
    if np.any(np.isnan(P)):
        raise ParseError(f"{path}: topic distributions cannot have empty cells")
    bad = np.flatnonzero(np.abs(P.sum(axis=1) - 1.0) > 1e-6)
    if bad.size:
        raise ParseError(f"{path}: row {bad[0] + 1} does not sum to 1", row=int(bad[0]) + 1)
    return P


def load_zachary(value: float | None = None) -> FlowNetwork:
    net = FlowNetwork.from_edge_list(ZACHARY_PATH)
    if value is not None:
        net = FlowNetwork(net.num_vertices, net.edges, net.source, net.sink, value)
    return net
