"""
Unit tests for set functions, multilinear extensions, one-sample gradients
and pipage rounding.
"""

import itertools

import numpy as np
import pytest

from onlinefw.core import InvalidArgumentError, SizeLimitError, make_rng
from onlinefw.lmo import BudgetedBox, PartitionMatroid
from onlinefw.submodular import (
    CallableSetFunction,
    CoverageExtension,
    FacilityLocation,
    FacilityLocationExtension,
    ModularFunction,
    MultilinearSampleOracle,
    MultilinearTable,
    ProbabilisticCoverage,
    brute_multilinear,
    brute_multilinear_grad,
    coverage_extension,
    extension_for,
    facility_location_extension,
    grad_one_sample,
    grad_one_sample_vector,
    independent_sets,
    pipage_round,
    random_fractional_point,
)

ONE_USER = np.array([[5.0, 3.0]])


def _random_facility(rng, users=6, items=8):
    return FacilityLocation(rng.uniform(0, 20, (users, items)))


def _random_coverage(rng, docs=8, topics=3):
    return ProbabilisticCoverage(rng.uniform(0, 1, (docs, topics)))


# ---------------------------------------------------------------------------
# Set functions
# ---------------------------------------------------------------------------

def test_facility_location_values():
    f = FacilityLocation([[5.0, 3.0], [1.0, 4.0]])
    assert f(set()) == 0.0
    assert f({0}) == 6.0
    assert f({0, 1}) == 9.0
    assert f.evaluations == 3


def test_mask_forms_agree():
    f = FacilityLocation([[5.0, 3.0, 1.0]])
    assert f([1, 2]) == f(np.array([False, True, True])) == f(np.array([0.0, 1.0, 1.0]))
    with pytest.raises(InvalidArgumentError):
        f([3])


@pytest.mark.parametrize("make", [_random_facility, _random_coverage])
def test_vectorized_marginals_match_definition(make):
    """Closed-form marginals equal f(S + i) - f(S - i) computed one element at a time."""
    rng = make_rng(0)
    f = make(rng)
    plain = CallableSetFunction(f.n, lambda S: f(list(S)))
    for _ in range(20):
        S = rng.random(f.n) < 0.4
        np.testing.assert_allclose(f.marginals(S), plain.marginals(S), atol=1e-10)


def test_modular_marginals_are_weights():
    f = ModularFunction([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(f.marginals([0, 2]), [1.0, 2.0, 3.0])


@pytest.mark.parametrize("make", [_random_facility, _random_coverage])
def test_diminishing_returns(make):
    """f(A + i) - f(A) >= f(B + i) - f(B) for A inside B."""
    rng = make_rng(1)
    f = make(rng)
    for _ in range(50):
        B = rng.random(f.n) < 0.5
        A = B & (rng.random(f.n) < 0.5)
        i = int(rng.integers(f.n))
        if B[i]:
            continue
        gain_a = f(A | np.eye(f.n, dtype=bool)[i]) - f(A)
        gain_b = f(B | np.eye(f.n, dtype=bool)[i]) - f(B)
        assert gain_a >= gain_b - 1e-12


def test_invalid_inputs():
    with pytest.raises(InvalidArgumentError):
        FacilityLocation([[-1.0, 2.0]])
    with pytest.raises(InvalidArgumentError):
        ProbabilisticCoverage([[1.5]])
    with pytest.raises(InvalidArgumentError):
        ModularFunction([-1.0])


# ---------------------------------------------------------------------------
# Extensions
# ---------------------------------------------------------------------------

def test_brute_extension_on_vertices():
    f = _random_facility(make_rng(2), items=5)
    for S in itertools.combinations(range(5), 2):
        x = np.zeros(5)
        x[list(S)] = 1.0
        assert brute_multilinear(f, x) == pytest.approx(f(S), abs=1e-10)


def test_brute_extension_of_modular_is_linear():
    w = np.array([1.0, 4.0, 2.5])
    x = np.array([0.2, 0.5, 0.9])
    assert brute_multilinear(ModularFunction(w), x) == pytest.approx(np.dot(w, x))


def test_brute_extension_facility_example():
    assert brute_multilinear(FacilityLocation(ONE_USER), [0.5, 0.5]) == pytest.approx(3.25)


def test_brute_extension_size_limit():
    with pytest.raises(SizeLimitError):
        MultilinearTable(ModularFunction(np.ones(21)))


def test_facility_extension_examples():
    assert facility_location_extension(ONE_USER, [1.0, 0.0]) == pytest.approx(5.0)
    assert facility_location_extension(ONE_USER, [0.5, 0.5]) == pytest.approx(3.25)
    assert facility_location_extension(ONE_USER, [0.0, 0.0]) == 0.0
    with pytest.raises(InvalidArgumentError):
        facility_location_extension(ONE_USER, [-0.5, 0.5])


def test_coverage_extension_examples():
    P = np.array([[1.0], [0.5]])
    assert coverage_extension(P, [1.0, 0.0]) == pytest.approx(1.0)
    assert coverage_extension(P, [0.0, 1.0]) == pytest.approx(0.5)


@pytest.mark.parametrize("make, closed", [
    (_random_facility, lambda f: FacilityLocationExtension(f.ratings)),
    (lambda rng: _random_coverage(rng, docs=4, topics=2), lambda f: CoverageExtension(f.probabilities)),
])
def test_closed_forms_match_enumeration(make, closed):
    rng = make_rng(3)
    for _ in range(10):
        f = make(rng)
        table = MultilinearTable(f)
        F = closed(f)
        x = rng.random(f.n)
        assert F.value(x) == pytest.approx(table.value(x), abs=1e-10)
        np.testing.assert_allclose(F.gradient(x), table.gradient(x), atol=1e-9)


@pytest.mark.parametrize("make", [
    lambda rng: _random_facility(rng, users=5, items=10),
    lambda rng: _random_coverage(rng, docs=10, topics=4),
])
def test_closed_forms_agree_with_f_on_every_vertex(make):
    f = make(make_rng(12))
    F = extension_for(f)
    for bits in itertools.product((0.0, 1.0), repeat=f.n):
        x = np.array(bits)
        assert F.value(x) == pytest.approx(f(x.astype(bool)), abs=1e-9)


@pytest.mark.parametrize("make", [_random_facility, _random_coverage])
def test_extension_gradients_are_antitone(make):
    """DR-submodularity: x <= y coordinatewise implies grad F(x) >= grad F(y)."""
    rng = make_rng(4)
    f = make(rng)
    F = extension_for(f)
    for _ in range(100):
        x = rng.random(f.n) * 0.5
        y = x + rng.random(f.n) * 0.5
        assert np.all(F.gradient(x) >= F.gradient(y) - 1e-10)


def test_extension_for_prefers_closed_form():
    assert isinstance(extension_for(FacilityLocation(ONE_USER)), FacilityLocationExtension)
    assert isinstance(extension_for(CallableSetFunction(3, len)), MultilinearTable)


# ---------------------------------------------------------------------------
# One-sample gradients
# ---------------------------------------------------------------------------

def test_one_sample_at_zero_is_singleton_gain():
    f = FacilityLocation(ONE_USER)
    assert grad_one_sample(f, [0.0, 0.0], 1, make_rng(0)) == 3.0


def test_one_sample_at_ones_is_last_gain():
    f = FacilityLocation(ONE_USER)
    assert grad_one_sample(f, [1.0, 1.0], 1, make_rng(0)) == 0.0
    assert grad_one_sample(f, [1.0, 1.0], 0, make_rng(0)) == 2.0


def test_one_sample_is_unbiased():
    """x = (0, 0.5), i = 0: the mean over 10^5 draws is within 3.29 standard errors of 3.5."""
    f = FacilityLocation(ONE_USER)
    rng = make_rng(5)
    draws = np.array([grad_one_sample(f, [0.0, 0.5], 0, rng) for _ in range(100_000)])
    se = draws.std(ddof=1) / np.sqrt(draws.size)
    assert abs(draws.mean() - 3.5) <= 3.29 * se


def test_vector_sample_at_zero():
    f = _random_coverage(make_rng(6))
    expected = np.array([f([i]) - f([]) for i in range(f.n)])
    np.testing.assert_allclose(grad_one_sample_vector(f, np.zeros(f.n), make_rng(0)), expected, atol=1e-12)


def test_vector_sample_modular_is_exact():
    w = np.array([1.0, 4.0, 2.5])
    f = ModularFunction(w)
    rng = make_rng(7)
    for _ in range(5):
        np.testing.assert_array_equal(grad_one_sample_vector(f, rng.random(3), rng), w)


def test_vector_sample_is_unbiased():
    """n = 8 coverage: every coordinate passes a z-test against the enumerated gradient."""
    rng = make_rng(8)
    f = _random_coverage(rng)
    x = rng.random(f.n)
    exact = brute_multilinear_grad(f, x)
    oracle = MultilinearSampleOracle(f, make_rng(9))
    draws = np.vstack([oracle.query(x).vector for _ in range(100_000)])
    se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    # Bonferroni over the eight coordinates
    assert np.all(np.abs(draws.mean(axis=0) - exact) <= 4.0 * se + 1e-12)
    assert oracle.query_count == 100_000


def test_one_sample_rejects_bad_coordinate():
    with pytest.raises(InvalidArgumentError):
        grad_one_sample(FacilityLocation(ONE_USER), [0.0, 0.0], 2, make_rng(0))


# ---------------------------------------------------------------------------
# Pipage rounding
# ---------------------------------------------------------------------------

def test_pipage_keeps_integral_points():
    x = np.array([1.0, 0.0, 1.0, 0.0])
    np.testing.assert_array_equal(pipage_round(x, BudgetedBox(4, 2), ModularFunction(np.ones(4))), x)


def test_pipage_facility_example():
    f = FacilityLocation(ONE_USER)
    x = pipage_round([0.5, 0.5], BudgetedBox(2, 1), f)
    np.testing.assert_array_equal(x, [1.0, 0.0])
    assert f(x) == 5.0 >= 3.25


def test_pipage_never_decreases_the_extension():
    rng = make_rng(10)
    box = BudgetedBox(8, 3)
    for _ in range(200):
        f = _random_coverage(rng)
        x = random_fractional_point(box, rng)
        trace = []
        rounded = pipage_round(x, box, f, trace=trace)
        assert np.all((rounded == 0.0) | (rounded == 1.0))
        assert box.contains(rounded)
        assert all(b >= a - 1e-12 for a, b in zip(trace, trace[1:]))
        assert f(rounded) >= trace[0] - 1e-12


def test_pipage_on_partition_matroid():
    rng = make_rng(11)
    matroid = PartitionMatroid([[0, 1, 2], [3, 4, 5, 6]], [1, 2])
    f = _random_facility(rng, items=7)
    F = extension_for(f)
    for _ in range(20):
        x = random_fractional_point(matroid, rng)
        rounded = pipage_round(x, matroid, F)
        assert matroid.contains(rounded)
        assert F.value(rounded) >= F.value(x) - 1e-12


def test_randomized_pipage_keeps_the_mean():
    """Randomized rounding preserves every coordinate in expectation."""
    rng = make_rng(12)
    box = BudgetedBox(5, 2)
    x = np.array([0.3, 0.6, 0.4, 0.2, 0.5])
    draws = np.array([pipage_round(x, box, rng=rng) for _ in range(4000)])
    assert all(box.contains(d) for d in draws[:50])
    np.testing.assert_allclose(draws.mean(axis=0), x, atol=0.05)


def test_pipage_rejects_bad_inputs():
    with pytest.raises(InvalidArgumentError):
        pipage_round([0.5, 0.5], BudgetedBox(2, 1.5), ModularFunction(np.ones(2)))
    with pytest.raises(InvalidArgumentError):
        pipage_round([0.9, 0.9], BudgetedBox(2, 1), ModularFunction(np.ones(2)))
    with pytest.raises(InvalidArgumentError):
        pipage_round([0.5, 0.5], BudgetedBox(2, 1))


def test_independent_sets_enumerates_integral_vertices():
    sets = list(independent_sets(BudgetedBox(4, 2)))
    assert len(sets) == 1 + 4 + 6
