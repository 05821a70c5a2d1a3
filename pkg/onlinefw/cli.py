"""
Config-driven experiment runner.

    python -m onlinefw run --exp synthetic-submodular --alg meta-fw --T 64 --seed 1

Writes the regret ledger CSV (t,played,comparator,cum_regret) and a JSON
sidecar {config, grad_queries, lmo_calls, seconds} next to it.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Literal, Optional, Sequence, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .algorithms import ALGORITHMS, make_algorithm
from .bench import play_stream, validate_ledger_csv
from .core import ConfigError, OnlineFWError, make_rng, spawn_rngs
from .lmo import BudgetedBox, FlowNetwork
from .problems import (
    ExperimentStream,
    Setting,
    coverage_stream,
    facility_stream,
    flow_stream,
    load_ratings_csv,
    load_topics_csv,
    load_zachary,
    matrix_completion_stream,
    observation_batches,
    quadratic_stream,
    synthetic_low_rank,
    synthetic_ratings,
    synthetic_topics,
)
from .utils import UpdateParameters, get_logger, init_args, read_yaml, set_log_level

root_dir = Path(__file__).resolve().parent
DEFAULT_CFG_PATH = root_dir / "config.yaml"
logger = get_logger("CLI")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_IO = 3

EXPERIMENTS = (
    "facility-cont",
    "facility-disc",
    "coverage",
    "flow",
    "matcomp",
    "synthetic-convex",
    "synthetic-submodular",
)

ExperimentName = Literal[
    "facility-cont", "facility-disc", "coverage", "flow", "matcomp", "synthetic-convex", "synthetic-submodular"
]
AlgorithmName = Literal["meta-fw", "meta-fw-novr", "os-fw", "os-fw-novr", "rofw", "pga", "online-greedy"]

# filled in for any Experiment value left unset
EXPERIMENT_DEFAULTS = {
    "facility-cont": dict(setting="adversarial", n=20, budget=1.0, batch_size=5),
    "facility-disc": dict(setting="adversarial", n=20, budget=10.0, batch_size=40),
    "coverage": dict(setting="adversarial", budget=45.0, batch_size=50, topics=10),
    "flow": dict(setting="stochastic", sigma=0.0),
    "matcomp": dict(setting="adversarial", shape=(50, 50), rank=10, batch_size=100),
    "synthetic-convex": dict(setting="adversarial", n=10, budget=3.0, sigma=1.0),
    "synthetic-submodular": dict(setting="adversarial", n=20, budget=3.0, batch_size=5),
}


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    # Global
    seed: int = 0
    T: int = Field(64, ge=1)
    output: str = "results/run.csv"
    jobs: int = Field(1, ge=1)
    repeats: int = Field(1, ge=1)
    progress: bool = True
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "INFO"

    # Algorithm
    algorithm: AlgorithmName = "meta-fw"
    K: Optional[int] = Field(None, ge=1)
    lam: Optional[float] = Field(None, ge=0)
    inner_steps: int = Field(50, ge=1)
    pg_scale: Optional[float] = Field(None, gt=0)
    comparator_steps: int = Field(2000, ge=1)

    # Experiment
    experiment: ExperimentName = "synthetic-submodular"
    setting: Optional[Literal["adversarial", "stochastic"]] = None
    n: Optional[int] = Field(None, ge=1)
    budget: Optional[float] = Field(None, ge=0)
    batch_size: Optional[int] = Field(None, ge=1)
    sigma: Optional[float] = Field(None, ge=0)
    users: Optional[int] = Field(None, ge=1)
    docs: Optional[int] = Field(None, ge=1)
    topics: Optional[int] = Field(None, ge=1)
    rank: Optional[int] = Field(None, ge=1)
    shape: Optional[Tuple[int, int]] = None
    radius: Optional[float] = Field(None, gt=0)
    flow_value: Optional[float] = Field(None, ge=0)

    # Data
    ratings_path: Optional[str] = None
    ratings_lo: float = -10.0
    ratings_hi: float = 10.0
    topics_path: Optional[str] = None
    network_path: Optional[str] = None

    @model_validator(mode="after")
    def check_pairing(self) -> RunConfig:
        if self.algorithm == "pga" and self.experiment == "flow":
            raise ValueError("pga needs a Euclidean projection and the flow polytope has none; use a Frank-Wolfe method")
        if self.algorithm == "online-greedy" and self.experiment != "facility-disc":
            raise ValueError("online-greedy plays sets and needs a discrete experiment (facility-disc)")
        if self.setting == "stochastic" and self.experiment not in ("synthetic-convex", "flow"):
            raise ValueError(f"{self.experiment} has no stochastic variant")
        if self.setting == "adversarial" and self.experiment == "flow":
            raise ValueError("flow costs are drawn i.i.d.; its setting is stochastic")

        for key, value in EXPERIMENT_DEFAULTS[self.experiment].items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        return self


class RunSummary(BaseModel):
    config: dict
    grad_queries: int
    lmo_calls: int
    seconds: float


def parse_config(argv: Optional[Sequence[str]] = None) -> RunConfig:
    """Shipped config.yaml, then the --config file, then explicit flags."""
    defaults = read_yaml(DEFAULT_CFG_PATH)
    args = init_args(argv, defaults, ALGORITHMS, EXPERIMENTS)

    file_config = {}
    if args.config:
        try:
            file_config = read_yaml(args.config)
        except yaml.YAMLError as e:
            raise ConfigError(f"{args.config}: not valid YAML") from e
        if not isinstance(file_config, dict):
            raise ConfigError(f"{args.config}: expected a mapping of sections")

    merged = UpdateParameters(file_config)(defaults, **vars(args))
    try:
        return RunConfig(**UpdateParameters.flatten(merged))
    except ValidationError as e:
        raise ConfigError(f"invalid configuration:\n{e}") from e


# ---------------------------------------------------------------------------
# Building and running
# ---------------------------------------------------------------------------

def build_stream(config: RunConfig, rng: np.random.Generator, seed: int | None = None) -> ExperimentStream:
    exp = config.experiment
    T = config.T

    if exp in ("facility-cont", "facility-disc", "synthetic-submodular"):
        if config.ratings_path and exp != "synthetic-submodular":
            ratings = load_ratings_csv(config.ratings_path, config.ratings_lo, config.ratings_hi)
        else:
            ratings = synthetic_ratings(config.users or T * config.batch_size, config.n, rng)
        stream = facility_stream(
            ratings, config.batch_size, T, config.budget, rng, discrete=exp == "facility-disc", seed=seed
        )
        if exp == "synthetic-submodular":
            stream.name = exp
        return stream

    if exp == "coverage":
        if config.topics_path:
            P = load_topics_csv(config.topics_path)
        else:
            P = synthetic_topics(config.docs or T * config.batch_size, config.topics, rng)
        return coverage_stream(P, T, rng, batch_size=config.batch_size, budget=config.budget, seed=seed)

    if exp == "flow":
        net = FlowNetwork.from_edge_list(config.network_path) if config.network_path else load_zachary()
        if config.flow_value is not None:
            net = FlowNetwork(net.num_vertices, net.edges, net.source, net.sink, config.flow_value)
        return flow_stream(net, T, rng, sigma=config.sigma, seed=seed)

    if exp == "matcomp":
        M = synthetic_low_rank(config.shape[0], config.shape[1], config.rank, rng)
        batches = observation_batches(config.shape, config.batch_size, T, rng)
        return matrix_completion_stream(M, batches, rng, radius=config.radius, seed=seed)

    return quadratic_stream(
        BudgetedBox(config.n, config.budget), T, rng, sigma=config.sigma, setting=Setting(config.setting), seed=seed
    )


def output_path(output: str, seed: int, repeats: int) -> Path:
    path = Path(output)
    if repeats > 1:
        path = path.with_name(f"{path.stem}_seed{seed}{path.suffix}")
    return path


def run_single(config: RunConfig, seed: int, output: Path) -> RunSummary:
    stream_rng, alg_rng, round_rng = spawn_rngs(make_rng(seed), 3)
    stream = build_stream(config, stream_rng, seed)
    algorithm = make_algorithm(
        config.algorithm,
        stream.constraint,
        config.T,
        stream.sense,
        alg_rng,
        K=config.K,
        lam=config.lam,
        inner_steps=config.inner_steps,
        pg_scale=config.pg_scale,
    )
    logger.info("run %s on %s, T=%d, seed=%d", config.algorithm, stream.name, config.T, seed)

    result = play_stream(algorithm, stream, round_rng, steps=config.comparator_steps, progress=config.progress)
    csv_path = result.ledger.to_csv(output)
    validate_ledger_csv(csv_path, rows=config.T)

    summary = RunSummary(
        config=config.model_dump(mode="json") | {"seed": seed, "output": str(output)},
        grad_queries=result.grad_queries,
        lmo_calls=result.lmo_calls,
        seconds=result.seconds,
    )
    sidecar = csv_path.with_suffix(".json")
    sidecar.write_text(summary.model_dump_json(indent=2), encoding="utf-8")
    logger.info("regret %.6g after %d rounds; wrote %s and %s", result.ledger.regret, config.T, csv_path, sidecar)
    return summary


def run(config: RunConfig) -> int:
    set_log_level(config.log_level)
    seeds = [config.seed + r for r in range(config.repeats)]
    outputs = [output_path(config.output, s, config.repeats) for s in seeds]

    try:
        if config.jobs > 1 and len(seeds) > 1:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                list(pool.map(lambda job: run_single(config, *job), zip(seeds, outputs)))
        else:
            for seed, output in zip(seeds, outputs):
                run_single(config, seed, output)
    except ConfigError as e:
        logger.error("config error: %s", e)
        return EXIT_CONFIG
    except OSError as e:
        logger.error("I/O error: %s", e)
        return EXIT_IO
    except OnlineFWError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_FAILURE
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        config = parse_config(argv)
    except ConfigError as e:
        logger.error("%s", e)
        return EXIT_CONFIG
    except OSError as e:
        logger.error("I/O error: %s", e)
        return EXIT_IO
    return run(config)
