"""
Unit tests for the regret ledger, offline solvers and comparators.
"""

import csv
import itertools

import numpy as np
import pytest

from onlinefw.algorithms import MetaFrankWolfe, OnlineGreedy, make_algorithm
from onlinefw.bench import (
    ONE_MINUS_INV_E,
    AnalysisConstants,
    RegretLedger,
    averaging_error_experiment,
    brute_force_opt,
    comparator_values,
    hindsight_objective,
    offline_fw,
    play_stream,
    record_round,
    validate_ledger_csv,
)
from onlinefw.core import InvalidArgumentError, ObjectiveSense, ParseError, SizeLimitError, make_rng
from onlinefw.lmo import BudgetedBox
from onlinefw.problems import (
    RatingsMatrix,
    Setting,
    coverage_stream,
    facility_stream,
    quadratic_stream,
    synthetic_ratings,
    synthetic_topics,
)
from onlinefw.submodular import FacilityLocation, LinearExtension, ModularFunction, ProbabilisticCoverage


# ---------------------------------------------------------------------------
# Ledger
# ---------------------------------------------------------------------------

def test_zero_regret_when_matching_the_comparator():
    ledger = RegretLedger()
    for v in (1.0, 2.5, 0.3):
        record_round(ledger, v, v)
    assert ledger.regret == pytest.approx(0.0)


def test_alpha_regret_can_be_negative():
    ledger = RegretLedger(alpha=ONE_MINUS_INV_E)
    assert record_round(ledger, 7.0, 10.0) == pytest.approx(-0.678788, abs=1e-6)


def test_minimization_flips_the_sign():
    ledger = RegretLedger(maximize=False)
    assert record_round(ledger, 7.0, 10.0) == pytest.approx(-3.0)
    assert record_round(ledger, 12.0, 10.0) == pytest.approx(-1.0)


def test_ledger_csv_round_trip(tmp_path):
    ledger = RegretLedger()
    for t in range(5):
        ledger.record(float(t), 2.0 * t)
    path = ledger.to_csv(tmp_path / "out" / "ledger.csv")
    assert validate_ledger_csv(path, rows=5) == 5
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "played", "comparator", "cum_regret"]
    assert float(rows[-1][3]) == pytest.approx(10.0)


def test_ledger_validation_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,played\n1,2\n", encoding="utf-8")
    with pytest.raises(ParseError):
        validate_ledger_csv(path)
    path.write_text("t,played,comparator,cum_regret\n1,2,3,1\n3,2,3,2\n", encoding="utf-8")
    with pytest.raises(ParseError) as err:
        validate_ledger_csv(path)
    assert err.value.row == 3
    path.write_text("t,played,comparator,cum_regret\n1,2,3,1\n", encoding="utf-8")
    with pytest.raises(ParseError):
        validate_ledger_csv(path, rows=2)


# ---------------------------------------------------------------------------
# Averaging error harness
# ---------------------------------------------------------------------------

def test_analysis_constant():
    constants = AnalysisConstants(G=1.0, sigma=1.0, initial_gap=1.0)
    assert constants.Q == pytest.approx(5.5)
    assert constants.bound(1) == pytest.approx(5.5 / 5 ** (2 / 3))


def test_averaging_error_decreases():
    constants = AnalysisConstants(G=1.0, sigma=1.0, initial_gap=1.0)
    errors = averaging_error_experiment(constants, [10, 100], make_rng(0), trials=100)
    assert errors[100] < errors[10]
    assert errors[100] <= constants.bound(100)


# ---------------------------------------------------------------------------
# Offline solvers
# ---------------------------------------------------------------------------

def test_offline_fw_modular_finds_top_b():
    w = np.array([0.5, 3.0, 1.0, 2.0, 0.1])
    x = offline_fw(LinearExtension(w), BudgetedBox(5, 2), 50)
    np.testing.assert_allclose(x, [0.0, 1.0, 0.0, 1.0, 0.0])


def test_offline_fw_single_step():
    F = FacilityLocation(make_rng(1).uniform(0, 20, (4, 6))).extension()
    box = BudgetedBox(6, 2)
    x = offline_fw(F, box, 1)
    np.testing.assert_array_equal(x, box.linear_optimize(F.gradient(np.zeros(6))))


def test_offline_fw_minimizes():
    box = BudgetedBox(4, 1)
    f = quadratic_stream(box, 1, make_rng(2))[0].function
    x = offline_fw(f, box, 2000, ObjectiveSense.MINIMIZE_CONVEX)
    assert f.value(x) == pytest.approx(f.value(box.project(f.center)), abs=1e-2)


def test_offline_fw_trace_is_monotone():
    f = ProbabilisticCoverage(synthetic_topics(10, 4, make_rng(3)))
    trace = []
    offline_fw(f.extension(), BudgetedBox(10, 3), 100, trace=trace)
    assert all(b >= a - 1e-12 for a, b in zip(trace, trace[1:]))


def test_brute_force_facility():
    assert brute_force_opt(FacilityLocation([[5.0, 3.0]]), BudgetedBox(2, 1)) == (5.0, frozenset({0}))


def test_brute_force_modular():
    value, best = brute_force_opt(ModularFunction([0.5, 3.0, 1.0, 2.0]), BudgetedBox(4, 2))
    assert best == frozenset({1, 3}) and value == 5.0


def test_brute_force_over_vertices():
    value, vertex = brute_force_opt(LinearExtension([1.0, -2.0, 3.0]), BudgetedBox(3, 1), maximize=False)
    assert value == -2.0
    np.testing.assert_array_equal(vertex, [0.0, 1.0, 0.0])


def test_brute_force_size_limit():
    with pytest.raises(SizeLimitError):
        brute_force_opt(ModularFunction(np.ones(16)), BudgetedBox(16, 2))


def test_brute_force_agrees_with_offline_fw():
    """Offline Frank-Wolfe reaches (1 - 1/e) of the enumerated optimum."""
    rng = make_rng(4)
    box = BudgetedBox(10, 3)
    for _ in range(5):
        f = ProbabilisticCoverage(synthetic_topics(10, 5, rng))
        opt, best = brute_force_opt(f, box)
        assert len(best) <= 3
        assert opt == pytest.approx(max(f(S) for S in itertools.combinations(range(10), 3)))
        assert f.extension().value(offline_fw(f.extension(), box, 200)) >= ONE_MINUS_INV_E * opt


# ---------------------------------------------------------------------------
# Comparators
# ---------------------------------------------------------------------------

def test_hindsight_merges_facility_rounds():
    stream = facility_stream(synthetic_ratings(40, 6, make_rng(5)), 4, 10, 2.0, make_rng(6))
    total = hindsight_objective(stream)
    x = make_rng(7).random(6) * 0.3
    assert total.value(x) == pytest.approx(sum(r.value(x) for r in stream))
    np.testing.assert_allclose(total.gradient(x), sum(r.function.gradient(x) for r in stream))


def test_hindsight_merges_coverage_rounds():
    stream = coverage_stream(synthetic_topics(40, 5, make_rng(8)), 4, make_rng(9), batch_size=10, budget=3)
    total = hindsight_objective(stream)
    x = make_rng(10).random(10) * 0.3
    assert total.value(x) == pytest.approx(sum(r.value(x) for r in stream))


def test_comparator_uses_closed_form_optimum():
    stream = quadratic_stream(BudgetedBox(5, 2), 6, make_rng(11))
    comparator = comparator_values(stream)
    np.testing.assert_array_equal(comparator.point, stream.optimum)
    assert comparator.alpha == 1.0 and not comparator.use_expected


def test_stochastic_comparator_uses_expected_function():
    stream = quadratic_stream(BudgetedBox(5, 2), 6, make_rng(12), setting=Setting.STOCHASTIC)
    comparator = comparator_values(stream)
    assert comparator.use_expected
    np.testing.assert_allclose(comparator.values, stream.expected.value(stream.optimum))


def test_discrete_comparator_brute_forces_small_ground_sets():
    stream = facility_stream(synthetic_ratings(40, 6, make_rng(13)), 4, 10, 2.0, make_rng(14), discrete=True)
    comparator = comparator_values(stream)
    assert comparator.alpha == pytest.approx(ONE_MINUS_INV_E)
    assert comparator.point.sum() == 2.0


# ---------------------------------------------------------------------------
# Playing a stream
# ---------------------------------------------------------------------------

def test_play_stream_fills_the_ledger():
    box = BudgetedBox(5, 2)
    stream = quadratic_stream(box, 12, make_rng(15))
    alg = make_algorithm("os-fw", box, 12, stream.sense, make_rng(16))
    result = play_stream(alg, stream, make_rng(17))
    assert len(result.ledger) == 12
    assert result.grad_queries == 12
    assert all(box.contains(x, tol=1e-9) for x in result.played_points)


def test_discrete_runs_play_independent_sets():
    ratings = RatingsMatrix(make_rng(18).uniform(0, 20, (60, 8)))
    stream = facility_stream(ratings, 3, 6, 3.0, make_rng(19), discrete=True)
    alg = MetaFrankWolfe(stream.constraint, 6, stream.sense, make_rng(20), K=4)
    result = play_stream(alg, stream, make_rng(21))
    for X in result.played_points:
        assert np.all((X == 0.0) | (X == 1.0)) and X.sum() <= 3.0


def test_online_greedy_on_a_discrete_stream():
    ratings = RatingsMatrix(make_rng(22).uniform(0, 20, (60, 8)))
    stream = facility_stream(ratings, 3, 6, 3.0, make_rng(23), discrete=True)
    alg = OnlineGreedy(8, 3, 6, make_rng(24))
    result = play_stream(alg, stream, make_rng(25))
    assert len(result.ledger) == 6
    assert all(X.sum() == 3.0 for X in result.played_points)


def test_horizon_mismatch():
    box = BudgetedBox(3, 1)
    stream = quadratic_stream(box, 4, make_rng(0))
    with pytest.raises(InvalidArgumentError):
        play_stream(make_algorithm("os-fw", box, 5, stream.sense, make_rng(0)), stream, make_rng(0))
