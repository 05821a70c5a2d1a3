"""
Lifting discrete submodular maximization to the continuous domain.

Set functions are evaluated on boolean masks over the ground set. Their
multilinear extensions are available exactly (closed forms for facility
location and probabilistic coverage, enumeration for small ground sets) or
through the one-sample stochastic gradient. Pipage rounding maps fractional
points back to independent sets.
"""

from __future__ import annotations

import threading
from abc import ABC, abstractmethod
from typing import Callable, Iterable, Protocol

import numpy as np
from numpy.typing import NDArray

from .core import (
    InvalidArgumentError,
    Point,
    SizeLimitError,
    StochasticGradientOracle,
    make_rng,
)
from .lmo import BudgetedBox, PartitionMatroid

Mask = NDArray[np.bool_]

MAX_ENUMERATION = 20


# ---------------------------------------------------------------------------
# Set functions
# ---------------------------------------------------------------------------

class SetFunction(ABC):
    """A nonnegative set function over {0, ..., n-1} that counts its evaluations."""

    def __init__(self, n: int):
        if n < 1:
            raise InvalidArgumentError(f"ground set must be nonempty, got n={n}")
        self.n = int(n)
        self._evaluations = 0
        self._lock = threading.Lock()

    @property
    def evaluations(self) -> int:
        return self._evaluations

    def _count(self, k: int = 1) -> None:
        with self._lock:
            self._evaluations += k

    def as_mask(self, S) -> Mask:
        """Boolean arrays and length-n float indicators are masks; anything else is an index collection."""
        if isinstance(S, np.ndarray) and S.dtype == np.bool_:
            mask = S
        elif isinstance(S, np.ndarray) and S.dtype.kind == "f":
            mask = S > 0.5
        else:
            mask = np.zeros(self.n, dtype=bool)
            idx = np.fromiter((int(i) for i in S), dtype=np.int64)
            if idx.size and (idx.min() < 0 or idx.max() >= self.n):
                raise InvalidArgumentError(f"element out of range for ground set of size {self.n}")
            mask[idx] = True
        if mask.shape != (self.n,):
            raise InvalidArgumentError(f"mask of shape {mask.shape} for a ground set of size {self.n}")
        return mask

    def __call__(self, S) -> float:
        self._count()
        return float(self._evaluate(self.as_mask(S)))

    @abstractmethod
    def _evaluate(self, mask: Mask) -> float:
        ...

    def marginals(self, S) -> NDArray[np.float64]:
        """
        f(S + i) - f(S - i) for every element i: the gain of adding i when it
        is outside S, the loss of removing it when it is inside.
        Costs n + 1 evaluations.
        """
        mask = self.as_mask(S)
        self._count(self.n + 1)
        base = self._evaluate(mask)
        out = np.empty(self.n)
        for i in range(self.n):
            other = mask.copy()
            other[i] = not mask[i]
            toggled = self._evaluate(other)
            out[i] = base - toggled if mask[i] else toggled - base
        return out

    def extension(self) -> Extension | None:
        """Closed-form multilinear extension, when one is known."""
        return None


class FacilityLocation(SetFunction):
    """f(S) = sum_u max_{j in S} R[u, j]."""

    def __init__(self, ratings):
        ratings = np.asarray(ratings, dtype=np.float64)
        if ratings.ndim != 2 or ratings.size == 0:
            raise InvalidArgumentError("ratings must be a nonempty users x items matrix")
        if np.any(ratings < 0):
            raise InvalidArgumentError("ratings must be nonnegative")
        super().__init__(ratings.shape[1])
        self.ratings = ratings

    def _evaluate(self, mask: Mask) -> float:
        if not mask.any():
            return 0.0
        return float(self.ratings[:, mask].max(axis=1).sum())

    def marginals(self, S) -> NDArray[np.float64]:
        mask = self.as_mask(S)
        self._count(self.n + 1)
        R = self.ratings
        inside = np.where(mask, R, -np.inf)

        # best and runner-up rating inside S for every user
        order = np.argsort(-inside, axis=1, kind="stable")
        top1 = np.take_along_axis(inside, order[:, :1], axis=1)[:, 0]
        top2 = np.take_along_axis(inside, order[:, 1:2], axis=1)[:, 0] if self.n > 1 else np.full(R.shape[0], -np.inf)
        top1 = np.where(np.isfinite(top1), top1, 0.0)
        top2 = np.where(np.isfinite(top2), top2, 0.0)

        gains = np.maximum(R - top1[:, None], 0.0).sum(axis=0)
        losses = np.zeros(self.n)
        np.add.at(losses, order[:, 0], top1 - top2)
        return np.where(mask, losses, gains)

    def extension(self) -> FacilityLocationExtension:
        return FacilityLocationExtension(self.ratings)


class ProbabilisticCoverage(SetFunction):
    """f(S) = (1/J) sum_j [1 - prod_{a in S} (1 - P[a, j])] over J topics."""

    def __init__(self, probabilities):
        P = np.asarray(probabilities, dtype=np.float64)
        if P.ndim != 2 or P.size == 0:
            raise InvalidArgumentError("coverage needs a nonempty items x topics matrix")
        if np.any(P < 0) or np.any(P > 1):
            raise InvalidArgumentError("coverage probabilities must lie in [0, 1]")
        super().__init__(P.shape[0])
        self.probabilities = P

    def _evaluate(self, mask: Mask) -> float:
        miss = np.prod(1.0 - self.probabilities[mask], axis=0)
        return float(np.mean(1.0 - miss))

    def marginals(self, S) -> NDArray[np.float64]:
        mask = self.as_mask(S)
        self._count(self.n + 1)
        P = self.probabilities
        J = P.shape[1]

        miss = np.prod(1.0 - P[mask], axis=0)
        gains = P @ miss / J

        members = np.flatnonzero(mask)
        losses = np.zeros(self.n)
        if members.size:
            others = _exclusive_products(1.0 - P[members])
            losses[members] = np.sum(P[members] * others, axis=1) / J
        return np.where(mask, losses, gains)

    def extension(self) -> CoverageExtension:
        return CoverageExtension(self.probabilities)


class ModularFunction(SetFunction):
    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if np.any(w < 0):
            raise InvalidArgumentError("modular weights must be nonnegative")
        super().__init__(w.size)
        self.weights = w

    def _evaluate(self, mask: Mask) -> float:
        return float(self.weights[mask].sum())

    def marginals(self, S) -> NDArray[np.float64]:
        self.as_mask(S)
        self._count(self.n + 1)
        return self.weights.copy()

    def extension(self) -> LinearExtension:
        return LinearExtension(self.weights)


class CallableSetFunction(SetFunction):
    """Wraps fn(frozenset of elements) -> value."""

    def __init__(self, n: int, fn: Callable[[frozenset[int]], float]):
        super().__init__(n)
        self.fn = fn

    def _evaluate(self, mask: Mask) -> float:
        return float(self.fn(frozenset(np.flatnonzero(mask).tolist())))


def _exclusive_products(M: NDArray[np.float64]) -> NDArray[np.float64]:
    """Column-wise products over all rows but the current one, without division."""
    ones = np.ones((1, M.shape[1]))
    prefix = np.cumprod(np.vstack([ones, M[:-1]]), axis=0)
    suffix = np.cumprod(np.vstack([ones, M[::-1][:-1]]), axis=0)[::-1]
    return prefix * suffix


# ---------------------------------------------------------------------------
# Multilinear extensions
# ---------------------------------------------------------------------------

class Extension(Protocol):
    def value(self, x: Point) -> float:
        ...

    def gradient(self, x: Point) -> Point:
        ...


def _check_fractional(x, n: int) -> Point:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != n:
        raise InvalidArgumentError(f"expected a point of dimension {n}, got {x.shape[0]}")
    if np.any(x < -1e-12) or np.any(x > 1.0 + 1e-12):
        raise InvalidArgumentError("fractional point must lie in [0, 1]^n")
    return np.clip(x, 0.0, 1.0)


class LinearExtension:
    def __init__(self, weights):
        self.weights = np.asarray(weights, dtype=np.float64)

    def value(self, x: Point) -> float:
        return float(np.dot(self.weights, x))

    def gradient(self, x: Point) -> Point:
        return self.weights.copy()


class FacilityLocationExtension:
    """
    Closed form of the facility-location extension. For each user, with items
    sorted by decreasing rating j^1, j^2, ...:

        F_u(x) = sum_l R[u, j^l] x[j^l] prod_{m<l} (1 - x[j^m])
    """

    def __init__(self, ratings):
        R = np.asarray(ratings, dtype=np.float64)
        if R.ndim != 2 or R.size == 0:
            raise InvalidArgumentError("ratings must be a nonempty users x items matrix")
        if np.any(R < 0):
            raise InvalidArgumentError("ratings must be nonnegative")
        self.ratings = R
        self.n = R.shape[1]
        self._order = np.argsort(-R, axis=1, kind="stable")
        self._sorted = np.take_along_axis(R, self._order, axis=1)

    def _prefix(self, xs: NDArray[np.float64]) -> NDArray[np.float64]:
        stay = np.cumprod(1.0 - xs, axis=1)
        return np.hstack([np.ones((xs.shape[0], 1)), stay[:, :-1]])

    def value(self, x: Point) -> float:
        x = _check_fractional(x, self.n)
        xs = x[self._order]
        return float(np.sum(self._sorted * xs * self._prefix(xs)))

    def gradient(self, x: Point) -> Point:
        x = _check_fractional(x, self.n)
        xs = x[self._order]
        r = self._sorted
        prefix = self._prefix(xs)

        # tail[:, l] = value collected after position l given position l is skipped
        tail = np.zeros_like(xs)
        for l in range(self.n - 2, -1, -1):
            tail[:, l] = r[:, l + 1] * xs[:, l + 1] + (1.0 - xs[:, l + 1]) * tail[:, l + 1]

        grad = np.zeros(self.n)
        np.add.at(grad, self._order.ravel(), (prefix * (r - tail)).ravel())
        return grad


class CoverageExtension:
    """F(x) = (1/J) sum_j [1 - prod_a (1 - P[a, j] x_a)]."""

    def __init__(self, probabilities):
        P = np.asarray(probabilities, dtype=np.float64)
        if P.ndim != 2 or P.size == 0:
            raise InvalidArgumentError("coverage needs a nonempty items x topics matrix")
        if np.any(P < 0) or np.any(P > 1):
            raise InvalidArgumentError("coverage probabilities must lie in [0, 1]")
        self.probabilities = P
        self.n = P.shape[0]

    def value(self, x: Point) -> float:
        x = _check_fractional(x, self.n)
        miss = np.prod(1.0 - self.probabilities * x[:, None], axis=0)
        return float(np.mean(1.0 - miss))

    def gradient(self, x: Point) -> Point:
        x = _check_fractional(x, self.n)
        P = self.probabilities
        others = _exclusive_products(1.0 - P * x[:, None])
        return np.sum(P * others, axis=1) / P.shape[1]


def facility_location_extension(ratings, x) -> float:
    return FacilityLocationExtension(ratings).value(x)


def facility_location_gradient(ratings, x) -> Point:
    return FacilityLocationExtension(ratings).gradient(x)


def coverage_extension(probabilities, x) -> float:
    return CoverageExtension(probabilities).value(x)


def coverage_gradient(probabilities, x) -> Point:
    return CoverageExtension(probabilities).gradient(x)


def _subset_masks(n: int) -> Mask:
    """Row b is the mask whose bit i says whether element i belongs to subset b."""
    return ((np.arange(2 ** n)[:, None] >> np.arange(n)) & 1).astype(bool)


def _subset_weights(x: Point) -> NDArray[np.float64]:
    w = np.ones(1)
    for xi in x:
        w = np.concatenate([w * (1.0 - xi), w * xi])
    return w


class MultilinearTable:
    """Exact extension of any set function on n <= 20 by tabulating all 2^n values once."""

    def __init__(self, f: SetFunction):
        if f.n > MAX_ENUMERATION:
            raise SizeLimitError(f"enumeration limited to n <= {MAX_ENUMERATION}, got {f.n}")
        self.n = f.n
        self.values = np.array([f(mask) for mask in _subset_masks(f.n)])

    def value(self, x: Point) -> float:
        x = _check_fractional(x, self.n)
        return float(_subset_weights(x) @ self.values)

    def gradient(self, x: Point) -> Point:
        # F is affine in each coordinate, so dF/dx_i = F(x; x_i = 1) - F(x; x_i = 0)
        x = _check_fractional(x, self.n)
        grad = np.empty(self.n)
        for i in range(self.n):
            hi, lo = x.copy(), x.copy()
            hi[i], lo[i] = 1.0, 0.0
            grad[i] = (_subset_weights(hi) - _subset_weights(lo)) @ self.values
        return grad


def brute_multilinear(f: SetFunction, x) -> float:
    return MultilinearTable(f).value(x)


def brute_multilinear_grad(f: SetFunction, x) -> Point:
    return MultilinearTable(f).gradient(x)


class MonteCarloExtension:
    """Sample average with common random numbers, so comparisons between nearby points are stable."""

    def __init__(self, f: SetFunction, samples: int = 200, seed: int = 0):
        self.f = f
        self.n = f.n
        self.thresholds = make_rng(seed).random((samples, f.n))

    def value(self, x: Point) -> float:
        x = _check_fractional(x, self.n)
        return float(np.mean([self.f(row) for row in self.thresholds < x]))


def extension_for(f: SetFunction):
    """Closed form when known, else enumeration for n <= 20, else Monte Carlo."""
    closed = f.extension()
    if closed is not None:
        return closed
    if f.n <= MAX_ENUMERATION:
        return MultilinearTable(f)
    return MonteCarloExtension(f)


# ---------------------------------------------------------------------------
# One-sample stochastic gradients
# ---------------------------------------------------------------------------

def grad_one_sample(f: SetFunction, x, i: int, rng: np.random.Generator) -> float:
    """f(R + i) - f(R) with R drawn from [n] minus {i}, element j kept with probability x_j."""
    x = _check_fractional(x, f.n)
    if not 0 <= i < f.n:
        raise InvalidArgumentError(f"coordinate {i} out of range")
    R = rng.random(f.n) < x
    R[i] = False
    with_i = R.copy()
    with_i[i] = True
    return f(with_i) - f(R)


def grad_one_sample_vector(f: SetFunction, x, rng: np.random.Generator) -> Point:
    """All coordinates from one shared random set R; coordinate i uses R with i toggled."""
    x = _check_fractional(x, f.n)
    return f.marginals(rng.random(f.n) < x)


class MultilinearSampleOracle(StochasticGradientOracle):
    """Unbiased gradients of the multilinear extension of `f`, one shared sample per query."""

    def __init__(self, f: SetFunction, rng: np.random.Generator):
        super().__init__()
        self.f = f
        self.rng = rng

    def _sample(self, x: Point) -> Point:
        return grad_one_sample_vector(self.f, np.clip(x, 0.0, 1.0), self.rng)


# ---------------------------------------------------------------------------
# Pipage rounding
# ---------------------------------------------------------------------------

_FRAC_TOL = 1e-9


def _block_structure(constraint) -> tuple[list[NDArray[np.int64]], list[float]]:
    if isinstance(constraint, BudgetedBox):
        if not float(constraint.budget).is_integer():
            raise InvalidArgumentError("pipage rounding needs an integer budget")
        return [np.arange(constraint.dim)], [constraint.budget]
    if isinstance(constraint, PartitionMatroid):
        return constraint.blocks, [float(c) for c in constraint.capacities]
    raise InvalidArgumentError(f"pipage rounding is not available for {type(constraint).__name__}")


def _fractional(x: Point, block: NDArray[np.int64]) -> list[int]:
    return [int(i) for i in block if _FRAC_TOL < x[i] < 1.0 - _FRAC_TOL]


def _snap(x: Point, *coords: int) -> None:
    for i in coords:
        if x[i] <= _FRAC_TOL:
            x[i] = 0.0
        elif x[i] >= 1.0 - _FRAC_TOL:
            x[i] = 1.0


def pipage_round(
    x,
    constraint: BudgetedBox | PartitionMatroid,
    F=None,
    rng: np.random.Generator | None = None,
    trace: list[float] | None = None,
) -> Point:
    """
    Round a fractional point of a budgeted box (integer budget) or partition
    matroid polytope to the indicator of an independent set.

    With an evaluator F (an extension, or a SetFunction whose extension is
    derived) every move goes to the endpoint with the larger F, so
    F(result) >= F(x). Without one, endpoints are drawn with probabilities
    that keep the mean, so E[f(result)] >= F(x); `rng` is then required.
    F values after every move are appended to `trace` when given.
    """
    blocks, caps = _block_structure(constraint)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != constraint.dim or not constraint.contains(x, tol=1e-9):
        raise InvalidArgumentError("pipage rounding needs a feasible point")
    x = np.clip(x, 0.0, 1.0)

    if isinstance(F, SetFunction):
        F = extension_for(F)
    if F is None and rng is None:
        raise InvalidArgumentError("randomized pipage rounding needs an rng")

    if trace is not None and F is not None:
        trace.append(F.value(x))

    for block, cap in zip(blocks, caps):
        frac = _fractional(x, block)
        while len(frac) >= 2:
            i, j = frac[0], frac[1]
            up = min(1.0 - x[i], x[j])       # shift toward i
            down = min(x[i], 1.0 - x[j])     # shift toward j
            toward_i = x.copy()
            toward_i[i] += up
            toward_i[j] -= up
            toward_j = x.copy()
            toward_j[i] -= down
            toward_j[j] += down
            _snap(toward_i, i, j)
            _snap(toward_j, i, j)

            if F is not None:
                x = toward_i if F.value(toward_i) >= F.value(toward_j) else toward_j
            else:
                x = toward_i if rng.random() < down / (up + down) else toward_j

            if trace is not None and F is not None:
                trace.append(F.value(x))
            frac = _fractional(x, block)

        if frac:
            # the block sum is cap minus a fraction at most, so rounding up stays feasible
            i = frac[0]
            ceil, floor = x.copy(), x.copy()
            ceil[i], floor[i] = 1.0, 0.0
            if x[block].sum() - x[i] + 1.0 > cap + _FRAC_TOL:
                x = floor
            elif F is not None:
                x = ceil if F.value(ceil) >= F.value(floor) else floor
            else:
                x = ceil if rng.random() < x[i] else floor
            if trace is not None and F is not None:
                trace.append(F.value(x))

    return np.rint(x)


def random_fractional_point(constraint: BudgetedBox | PartitionMatroid, rng: np.random.Generator) -> Point:
    """A random feasible point: uniform in the cube, then scaled into every block budget."""
    blocks, caps = _block_structure(constraint)
    x = rng.random(constraint.dim)
    for block, cap in zip(blocks, caps):
        total = x[block].sum()
        if total > cap:
            x[block] *= cap / total
    return x


def independent_sets(constraint: BudgetedBox | PartitionMatroid) -> Iterable[Mask]:
    """Masks of every integral feasible point."""
    for vertex in constraint.vertices():
        if np.all((vertex == 0.0) | (vertex == 1.0)):
            yield vertex.astype(bool)
