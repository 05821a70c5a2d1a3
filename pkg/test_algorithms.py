"""
Unit tests for the online optimizers.
"""

import math

import numpy as np
import pytest

from onlinefw.algorithms import (
    ALGORITHMS,
    MetaFrankWolfe,
    OneShotFrankWolfe,
    OnlineGreedy,
    ProjectedGradient,
    RegularizedOnlineFrankWolfe,
    make_algorithm,
    meta_fw_feedback,
    meta_fw_play,
    one_shot_fw_step,
    online_greedy_step,
    projected_gradient_step,
    regularized_ofw_step,
)
from onlinefw.core import (
    GaussianNoiseOracle,
    InvalidArgumentError,
    ObjectiveSense,
    QuadraticObjective,
    RoundObjective,
    Schedule,
    ScheduleKind,
    UnsupportedOperationError,
    make_rng,
    schedule_value,
)
from onlinefw.lmo import BudgetedBox, FlowNetwork
from onlinefw.problems import flow_stream, quadratic_stream
from onlinefw.submodular import FacilityLocation, FacilityLocationExtension, ModularFunction, MultilinearSampleOracle
from onlinefw.vr import Averager

MAX = ObjectiveSense.MAXIMIZE_DR_SUBMODULAR
MIN = ObjectiveSense.MINIMIZE_CONVEX
RHO_1 = schedule_value(Schedule(ScheduleKind.RHO_VR), 1)
DAG_EDGES = [(0, 1), (0, 2), (0, 3), (1, 4), (2, 4), (2, 5), (3, 5), (4, 7), (5, 7), (1, 6), (6, 7), (3, 6)]


class LinearObjective:
    def __init__(self, c):
        self.c = np.asarray(c, dtype=np.float64)

    def value(self, x):
        return float(np.dot(self.c, x))

    def gradient(self, x):
        return self.c.copy()


def exact(function, seed=0):
    """Round objective with noise-free gradients."""
    return RoundObjective(function, GaussianNoiseOracle(function, 0.0, make_rng(seed)))


def facility_round(ratings, seed=0):
    f = FacilityLocation(ratings)
    return RoundObjective(FacilityLocationExtension(f.ratings), MultilinearSampleOracle(f, make_rng(seed)), f)


# ---------------------------------------------------------------------------
# Meta-Frank-Wolfe
# ---------------------------------------------------------------------------

def test_meta_fw_single_step_plays_the_vertex():
    alg = MetaFrankWolfe(BudgetedBox(4, 2), 10, MAX, make_rng(0), K=1)
    V = alg.oracles.next_all()
    np.testing.assert_array_equal(meta_fw_play(alg), V[0])


def test_meta_fw_convex_unrolled():
    net = FlowNetwork(8, DAG_EDGES, 0, 7, value=2)
    alg = MetaFrankWolfe(net, 10, MIN, make_rng(1), K=2)
    c = alg.x1
    v, w = alg.oracles.next_all()
    expected = (1 - 1 / 5) * ((1 - 1 / 4) * c + (1 / 4) * v) + (1 / 5) * w
    np.testing.assert_allclose(alg.play(), expected, atol=1e-12)
    assert net.contains(alg.played)


def test_meta_fw_submodular_average_of_vertices():
    box = BudgetedBox(6, 2)
    alg = MetaFrankWolfe(box, 10, MAX, make_rng(2), K=8)
    V = alg.oracles.next_all()
    x = alg.play()
    np.testing.assert_allclose(x, V.mean(axis=0), atol=1e-12)
    assert box.contains(x)


def test_meta_fw_first_feedback_is_scaled_gradient():
    f = LinearObjective([1.0, -2.0, 0.5])
    alg = MetaFrankWolfe(BudgetedBox(3, 1), 10, MAX, make_rng(3), K=1)
    alg.play()
    meta_fw_feedback(alg, exact(f))
    np.testing.assert_allclose(alg.oracles.cumulative_objective[0], RHO_1 * f.c)


def test_meta_fw_feedback_bookkeeping():
    """Oracle k gains exactly the k-th averaged gradient, and the round costs K queries."""
    f = QuadraticObjective(np.ones(4), np.array([0.9, 0.1, 0.5, 0.3]))
    alg = MetaFrankWolfe(BudgetedBox(4, 2), 10, MAX, make_rng(4), K=3)
    round_objective = exact(f)
    alg.play()
    iterates = alg.iterates.copy()
    before = alg.oracles.cumulative_objective.copy()
    outcome = alg.feedback(round_objective)

    averager = Averager.zeros(4)
    for k in range(3):
        d = averager.feed(f.gradient(iterates[k]))
        np.testing.assert_allclose(alg.oracles.cumulative_objective[k] - before[k], d, atol=1e-12)
    assert outcome.grad_queries == 3
    assert round_objective.oracle.query_count == 3
    assert alg.t == 2
    assert len(outcome.trace) == 3
    np.testing.assert_array_equal(np.vstack(outcome.trace), iterates)


def test_meta_fw_default_inner_steps():
    assert MetaFrankWolfe(BudgetedBox(3, 1), 4, MAX, make_rng(0)).K == 8


def test_meta_fw_feedback_before_play():
    alg = MetaFrankWolfe(BudgetedBox(3, 1), 4, MAX, make_rng(0), K=2)
    with pytest.raises(InvalidArgumentError):
        alg.feedback(exact(LinearObjective(np.ones(3))))


def test_meta_fw_stays_feasible_on_flows():
    net = FlowNetwork(8, DAG_EDGES, 0, 7, value=2)
    stream = flow_stream(net, 5, make_rng(5), sigma=1.0)
    alg = MetaFrankWolfe(net, 5, MIN, make_rng(6), K=5)
    for r in stream:
        outcome = alg.step(r)
        assert net.contains(outcome.played)


# ---------------------------------------------------------------------------
# One-Shot Frank-Wolfe
# ---------------------------------------------------------------------------

def test_one_shot_submodular_telescopes():
    box = BudgetedBox(5, 2)
    alg = OneShotFrankWolfe(box, 4, MAX)
    ratings = make_rng(7).uniform(0, 20, (3, 5))
    for t in range(4):
        outcome = one_shot_fw_step(alg, facility_round(ratings, seed=t))
        assert outcome.grad_queries == 1
    np.testing.assert_allclose(alg.x, np.sum(alg.directions, axis=0) / 4, atol=1e-12)
    assert box.contains(alg.x)
    with pytest.raises(InvalidArgumentError):
        alg.play()


def test_one_shot_convex_converges_to_vertex():
    """With a fixed linear loss, ||x_{T+1} - v*|| = 3 / (T + 3) ||x_1 - v*||."""
    box = BudgetedBox(4, 2)
    c = np.array([1.0, -2.0, 3.0, -1.0])
    target = box.linear_optimize(c, maximize=False)
    np.testing.assert_array_equal(target, [0.0, 1.0, 0.0, 1.0])

    T = 20
    alg = OneShotFrankWolfe(box, T, MIN)
    start = np.linalg.norm(alg.x - target)
    for _ in range(T):
        alg.step(exact(LinearObjective(c)))
    assert np.linalg.norm(alg.x - target) == pytest.approx(3.0 / (T + 3) * start)
    assert alg.grad_queries == T


# ---------------------------------------------------------------------------
# Regularized online Frank-Wolfe
# ---------------------------------------------------------------------------

def test_rofw_heavy_regularization_stays_put():
    alg = RegularizedOnlineFrankWolfe(BudgetedBox(4, 2), 10, MAX, lam=1e9)
    for _ in range(10):
        regularized_ofw_step(alg, exact(LinearObjective([1.0, 2.0, 0.5, 3.0])))
        assert np.linalg.norm(alg.x - alg.x1) <= 1e-4


def test_rofw_unregularized_first_step_is_frank_wolfe():
    box = BudgetedBox(3, 1)
    f = QuadraticObjective(np.ones(3), np.array([0.2, 0.9, 0.1]))
    alg = RegularizedOnlineFrankWolfe(box, 10, MIN, lam=0.0)
    x1 = alg.x.copy()
    alg.step(exact(f))
    np.testing.assert_array_equal(alg.x, box.linear_optimize(f.gradient(x1), maximize=False))


@pytest.mark.parametrize("budget, lam, G, expected", [
    (1, 0.5, [-3.0, 1.0, -2.0, 0.5, 1.0], [1.0, 0.0, 0.0, 0.0, 0.0]),
    (2, 1.0, [-4.0, 0.5, -1.0, 2.0, 0.0], [1.0, 0.0, 0.5, 0.0, 0.0]),
])
def test_rofw_surrogate_matches_exact_solution(budget, lam, G, expected):
    """The surrogate minimizer equals the projection of x_1 - G / (2 lam)."""
    box = BudgetedBox(5, budget)
    alg = RegularizedOnlineFrankWolfe(box, 10, MIN, lam=lam)
    alg.cumulative = np.array(G)
    reference = box.project(alg.x1 - alg.cumulative / (2.0 * lam))
    np.testing.assert_allclose(reference, expected, atol=1e-9)
    v = alg.surrogate_minimizer()
    assert alg.surrogate_value(v) == pytest.approx(alg.surrogate_value(reference), abs=1e-4)
    np.testing.assert_allclose(v, expected, atol=1e-9)


def test_rofw_hand_surrogate_value():
    alg = RegularizedOnlineFrankWolfe(BudgetedBox(5, 1), 10, MIN, lam=0.5)
    alg.cumulative = np.array([-3.0, 1.0, -2.0, 0.5, 1.0])
    assert alg.surrogate_value(alg.surrogate_minimizer()) == pytest.approx(-2.5)


# ---------------------------------------------------------------------------
# Projected gradient
# ---------------------------------------------------------------------------

def test_projected_gradient_fixed_point():
    alg = ProjectedGradient(BudgetedBox(3, 1), 10, MIN)
    x = alg.x.copy()
    projected_gradient_step(alg, exact(QuadraticObjective(np.ones(3))))
    np.testing.assert_array_equal(alg.x, x)


def test_projected_gradient_interior_step():
    box = BudgetedBox(3, 1)
    alg = ProjectedGradient(box, 10, MAX)
    assert alg.schedule.scale == pytest.approx(1.0)
    alg.step(exact(LinearObjective([0.1, 0.1, 0.1])))
    np.testing.assert_allclose(alg.x, [0.1, 0.1, 0.1])


def test_projected_gradient_scale_from_diameter():
    assert ProjectedGradient(BudgetedBox(10, 3), 10, MIN).schedule.scale == pytest.approx(math.sqrt(3.0))
    with pytest.raises(InvalidArgumentError):
        ProjectedGradient(BudgetedBox(3, 0), 10, MIN)


def test_projected_gradient_needs_projection():
    with pytest.raises(UnsupportedOperationError):
        ProjectedGradient(FlowNetwork(8, DAG_EDGES, 0, 7, value=2), 10, MIN)


# ---------------------------------------------------------------------------
# Online greedy
# ---------------------------------------------------------------------------

def test_online_greedy_finds_best_singleton():
    w = np.array([1.0, 3.0, 2.0, 0.5, 0.2])
    f = ModularFunction(w)
    T = 500
    fractions = []
    for seed in range(20):
        alg = OnlineGreedy(5, 1, T, make_rng(seed))
        hits = sum(1 in online_greedy_step(alg, f)[0] for _ in range(T))
        fractions.append(hits / T)
    assert np.mean(fractions) > 0.9


def test_online_greedy_full_budget():
    f = ModularFunction(np.ones(4))
    alg = OnlineGreedy(4, 4, 3, make_rng(0))
    for _ in range(3):
        picked, value = online_greedy_step(alg, f)
        assert picked == frozenset(range(4))
        assert value == 4.0


def test_online_greedy_chains_marginals():
    """Slot j is rewarded with the gains on top of slots 1..j-1."""
    f = FacilityLocation(make_rng(8).uniform(0, 20, (4, 6)))
    alg = OnlineGreedy(6, 2, 10, make_rng(9))
    alg.play()
    first = alg.picks[0]
    alg.feedback(f)
    np.testing.assert_allclose(alg.experts.cumulative_objective[0], f.marginals([]))
    prefix = np.zeros(6, dtype=bool)
    prefix[first] = True
    np.testing.assert_allclose(alg.experts.cumulative_objective[1], np.where(prefix, 0.0, f.marginals(prefix)))


def test_online_greedy_needs_a_set_function():
    alg = OnlineGreedy(3, 1, 5, make_rng(0))
    alg.play()
    with pytest.raises(InvalidArgumentError):
        alg.feedback(exact(LinearObjective(np.ones(3))))


# ---------------------------------------------------------------------------
# Registry and determinism
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("name", [a for a in ALGORITHMS if a != "online-greedy"])
def test_fixed_seed_replays_the_run(name):
    box = BudgetedBox(6, 2)
    runs = []
    for _ in range(2):
        stream = quadratic_stream(box, 8, make_rng(10), sigma=1.0)
        alg = make_algorithm(name, box, 8, stream.sense, make_rng(11), K=4)
        runs.append(np.array([alg.step(r).played for r in stream]))
    np.testing.assert_array_equal(runs[0], runs[1])


def test_make_algorithm_rejects_unknown_and_fractional_greedy():
    with pytest.raises(InvalidArgumentError):
        make_algorithm("sgd", BudgetedBox(3, 1), 5, MIN, make_rng(0))
    with pytest.raises(InvalidArgumentError):
        make_algorithm("online-greedy", BudgetedBox(3, 1.5), 5, MAX, make_rng(0))


def test_novr_variants_use_unit_schedule():
    alg = make_algorithm("os-fw-novr", BudgetedBox(3, 1), 5, MIN, make_rng(0))
    assert alg.averager.schedule.kind is ScheduleKind.UNIT
    alg = make_algorithm("meta-fw-novr", BudgetedBox(3, 1), 5, MIN, make_rng(0), K=2)
    assert not alg.variance_reduction
