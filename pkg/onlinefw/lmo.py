"""
Concrete constraint sets with exact linear optimization, plus Euclidean
projection where the projected-gradient baseline needs it.

Ties are broken by lowest index everywhere; a zero direction yields the zero
vector whenever it is feasible, else the lexicographically smallest vertex.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import bisect

from .core import (
    ConstraintSet,
    InfeasibleConstraintError,
    InvalidArgumentError,
    ParseError,
    Point,
    SizeLimitError,
)

MAX_ENUMERATION = 20


# ---------------------------------------------------------------------------
# Capped simplex {x in [0,1]^n : 1'x <= b}
# ---------------------------------------------------------------------------

def _top_mass_rows(S: NDArray[np.float64], budget: float) -> NDArray[np.float64]:
    """Put unit mass on the floor(b) largest positive entries of each row, b - floor(b) on the next."""
    n = S.shape[1]
    order = np.argsort(-S, axis=1, kind="stable")
    ranked = np.take_along_axis(S, order, axis=1)

    full = min(int(math.floor(budget)), n)
    weights = np.zeros(n)
    weights[:full] = 1.0
    if full < n:
        weights[full] = budget - full

    mass = np.where(ranked > 0, weights, 0.0)
    V = np.zeros_like(S)
    np.put_along_axis(V, order, mass, axis=1)
    return V


def _project_capped_simplex(y: NDArray[np.float64], budget: float) -> NDArray[np.float64]:
    x = np.clip(y, 0.0, 1.0)
    if x.sum() <= budget:
        return x
    if budget <= 0:
        return np.zeros_like(y)

    # sum_i clip(y_i - tau, 0, 1) is nonincreasing in tau
    excess = lambda tau: np.clip(y - tau, 0.0, 1.0).sum() - budget
    tau = bisect(excess, 0.0, float(y.max()), xtol=1e-10)

    # the sum is piecewise linear: solve exactly on the bracketed piece
    shifted = y - tau
    free = (shifted > 0.0) & (shifted < 1.0)
    if free.any():
        tau = (y[free].sum() + np.count_nonzero(shifted >= 1.0) - budget) / np.count_nonzero(free)
    x = np.clip(y - tau, 0.0, 1.0)

    total = x.sum()
    if total > budget:
        x *= budget / total
    return x


class BudgetedBox(ConstraintSet):
    """{x in [0,1]^n : sum(x) <= budget}."""

    def __init__(self, n: int, budget: float):
        if n < 1:
            raise InvalidArgumentError(f"dimension must be positive, got {n}")
        if budget < 0:
            raise InvalidArgumentError(f"budget must be nonnegative, got {budget}")
        self.dim = int(n)
        self.budget = float(budget)

    def __repr__(self) -> str:
        return f"BudgetedBox(n={self.dim}, budget={self.budget:g})"

    @property
    def radius(self) -> float:
        full = min(int(math.floor(self.budget)), self.dim)
        frac = self.budget - full if full < self.dim else 0.0
        return math.sqrt(full + frac * frac)

    @property
    def diameter(self) -> float:
        return min(math.sqrt(2.0) * self.radius, math.sqrt(self.dim))

    def linear_optimize(self, d, maximize: bool = True) -> Point:
        return lmo_budgeted_box(d, self, maximize)

    def linear_optimize_batch(self, D, maximize: bool = True) -> NDArray[np.float64]:
        D = np.atleast_2d(np.asarray(D, dtype=np.float64))
        if D.shape[1] != self.dim:
            raise InvalidArgumentError(f"expected {self.dim} columns, got {D.shape[1]}")
        return _top_mass_rows(D if maximize else -D, self.budget)

    def contains(self, p, tol: float = 1e-12) -> bool:
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (self.dim,):
            return False
        return bool(np.all(p >= -tol) and np.all(p <= 1.0 + tol) and p.sum() <= self.budget + tol)

    @property
    def supports_projection(self) -> bool:
        return True

    def project(self, y) -> Point:
        return project_budgeted_box(y, self)

    def vertices(self) -> NDArray[np.float64]:
        n = self.dim
        if n > MAX_ENUMERATION:
            raise SizeLimitError(f"vertex enumeration limited to n <= {MAX_ENUMERATION}")
        full = min(int(math.floor(self.budget)), n)
        frac = self.budget - full
        rows = []
        for size in range(full + 1):
            for support in itertools.combinations(range(n), size):
                v = np.zeros(n)
                v[list(support)] = 1.0
                rows.append(v)
                if size == full and frac > 0:
                    for j in range(n):
                        if v[j] == 0.0:
                            w = v.copy()
                            w[j] = frac
                            rows.append(w)
        return np.array(rows)


def lmo_budgeted_box(d, box: BudgetedBox, maximize: bool = True) -> Point:
    d = box.check_dim(d)
    return box.linear_optimize_batch(d[None, :], maximize)[0]


def project_budgeted_box(y, box: BudgetedBox) -> Point:
    """Euclidean projection; the budget multiplier is found by bisection to 1e-10 and then solved exactly."""
    return _project_capped_simplex(box.check_dim(y), box.budget)


# ---------------------------------------------------------------------------
# Partition matroid polytope
# ---------------------------------------------------------------------------

class PartitionMatroid(ConstraintSet):
    """
    Independent sets pick at most capacities[i] elements from blocks[i].
    The polytope is {x in [0,1]^n : sum_{j in block i} x_j <= capacities[i]}.
    """

    def __init__(self, blocks: Sequence[Sequence[int]], capacities: Sequence[int]):
        if len(blocks) != len(capacities):
            raise InvalidArgumentError("need one capacity per block")
        self.blocks = [np.array(sorted(int(j) for j in block), dtype=np.int64) for block in blocks]
        self.capacities = [int(c) for c in capacities]
        if any(c < 0 for c in self.capacities):
            raise InvalidArgumentError("capacities must be nonnegative")

        members = np.concatenate(self.blocks) if self.blocks else np.array([], dtype=np.int64)
        self.dim = int(members.size)
        if self.dim == 0 or not np.array_equal(np.sort(members), np.arange(self.dim)):
            raise InvalidArgumentError("blocks must partition 0..n-1")

    @classmethod
    def uniform(cls, n: int, rank: int) -> PartitionMatroid:
        return cls([range(n)], [rank])

    def __repr__(self) -> str:
        return f"PartitionMatroid(n={self.dim}, blocks={len(self.blocks)}, rank={self.rank})"

    @property
    def rank(self) -> int:
        return sum(min(c, len(b)) for b, c in zip(self.blocks, self.capacities))

    @property
    def radius(self) -> float:
        return math.sqrt(self.rank)

    @property
    def diameter(self) -> float:
        return math.sqrt(sum(min(len(b), 2 * c) for b, c in zip(self.blocks, self.capacities)))

    def linear_optimize(self, d, maximize: bool = True) -> Point:
        return lmo_matroid(d, self, maximize)

    def linear_optimize_batch(self, D, maximize: bool = True) -> NDArray[np.float64]:
        D = np.atleast_2d(np.asarray(D, dtype=np.float64))
        if D.shape[1] != self.dim:
            raise InvalidArgumentError(f"expected {self.dim} columns, got {D.shape[1]}")
        S = D if maximize else -D
        V = np.zeros_like(S)
        for block, cap in zip(self.blocks, self.capacities):
            V[:, block] = _top_mass_rows(S[:, block], float(cap))
        return V

    def contains(self, p, tol: float = 1e-12) -> bool:
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (self.dim,) or np.any(p < -tol) or np.any(p > 1.0 + tol):
            return False
        return all(p[block].sum() <= cap + tol for block, cap in zip(self.blocks, self.capacities))

    @property
    def supports_projection(self) -> bool:
        return True

    def project(self, y) -> Point:
        y = self.check_dim(y)
        x = np.empty_like(y)
        for block, cap in zip(self.blocks, self.capacities):
            x[block] = _project_capped_simplex(y[block], float(cap))
        return x

    def vertices(self) -> NDArray[np.float64]:
        if self.dim > MAX_ENUMERATION:
            raise SizeLimitError(f"vertex enumeration limited to n <= {MAX_ENUMERATION}")
        per_block = []
        for block, cap in zip(self.blocks, self.capacities):
            choices = []
            for size in range(min(cap, len(block)) + 1):
                choices.extend(itertools.combinations(block.tolist(), size))
            per_block.append(choices)
        rows = []
        for combo in itertools.product(*per_block):
            v = np.zeros(self.dim)
            for chosen in combo:
                v[list(chosen)] = 1.0
            rows.append(v)
        return np.array(rows)


def lmo_matroid(d, matroid: PartitionMatroid, maximize: bool = True) -> Point:
    """Matroid greedy per block: the indicator of the best independent set."""
    d = matroid.check_dim(d)
    return matroid.linear_optimize_batch(d[None, :], maximize)[0]


# ---------------------------------------------------------------------------
# Unit-capacity s-t flow polytope
# ---------------------------------------------------------------------------

_EPS = 1e-12


class _Residual:
    """Residual graph for successive shortest paths; arc a and a ^ 1 are a forward/backward pair."""

    def __init__(self, num_nodes: int):
        self.num_nodes = num_nodes
        self.out: list[list[int]] = [[] for _ in range(num_nodes)]
        self.to: list[int] = []
        self.cap: list[float] = []
        self.cost: list[float] = []

    def add(self, u: int, v: int, cap: float, cost: float) -> int:
        a = len(self.to)
        self.to += [v, u]
        self.cap += [cap, 0.0]
        self.cost += [cost, -cost]
        self.out[u].append(a)
        self.out[v].append(a + 1)
        return a

    def _shortest_paths(self, s: int) -> tuple[list[float], list[int]]:
        # label-correcting (queue-based Bellman-Ford), tolerates negative arc costs
        dist = [math.inf] * self.num_nodes
        prev = [-1] * self.num_nodes
        queued = [False] * self.num_nodes
        dist[s] = 0.0
        queue = deque([s])
        queued[s] = True
        while queue:
            u = queue.popleft()
            queued[u] = False
            du = dist[u]
            for a in self.out[u]:
                if self.cap[a] <= _EPS:
                    continue
                v = self.to[a]
                nd = du + self.cost[a]
                if nd < dist[v] - 1e-12:
                    dist[v] = nd
                    prev[v] = a
                    if not queued[v]:
                        queue.append(v)
                        queued[v] = True
        return dist, prev

    def augment(self, s: int, t: int, limit: float) -> float:
        pushed = 0.0
        while pushed < limit - 1e-9:
            dist, prev = self._shortest_paths(s)
            if math.isinf(dist[t]):
                break
            amount = limit - pushed
            v = t
            while v != s:
                a = prev[v]
                amount = min(amount, self.cap[a])
                v = self.to[a ^ 1]
            v = t
            while v != s:
                a = prev[v]
                self.cap[a] -= amount
                self.cap[a ^ 1] += amount
                v = self.to[a ^ 1]
            pushed += amount
        return pushed


class FlowNetwork(ConstraintSet):
    """
    Flows of value `value` from source to sink on a unit-capacity digraph:
    {x in [0,1]^|E| : conservation at internal vertices, net supply `value` at the source}.
    """

    def __init__(
        self,
        num_vertices: int,
        edges: Sequence[tuple[int, int]],
        source: int,
        sink: int,
        value: float | None = None,
    ):
        self.num_vertices = int(num_vertices)
        self.edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        if self.edges.size == 0:
            raise InvalidArgumentError("network has no edges")
        if self.edges.min() < 0 or self.edges.max() >= self.num_vertices:
            raise InvalidArgumentError("edge endpoint out of range")
        if not (0 <= source < self.num_vertices and 0 <= sink < self.num_vertices) or source == sink:
            raise InvalidArgumentError("source and sink must be distinct vertices")
        self.source = int(source)
        self.sink = int(sink)
        self.dim = int(self.edges.shape[0])

        max_flow = self.max_flow()
        if value is None:
            value = float(math.ceil(max_flow / 2))
        if value < 0 or value > max_flow + 1e-9:
            raise InfeasibleConstraintError(f"flow value {value} exceeds the maximum flow {max_flow}")
        self.value = float(value)

    def __repr__(self) -> str:
        return f"FlowNetwork(|V|={self.num_vertices}, |E|={self.dim}, s={self.source}, t={self.sink}, a={self.value:g})"

    @classmethod
    def from_edge_list(cls, path: str | Path) -> FlowNetwork:
        """
        Read `n m s t a` then m lines `u v` (0-indexed). `a` may be `auto`.
        Blank lines and `#` comments are ignored.
        """
        rows = []
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                rows.append((lineno, line.split()))
        if not rows:
            raise ParseError(f"{path}: empty edge list", row=1)

        lineno, header = rows[0]
        if len(header) != 5:
            raise ParseError(f"{path}:{lineno}: header must be 'n m s t a'", row=lineno)
        try:
            n, m, s, t = (int(tok) for tok in header[:4])
            a = None if header[4] == "auto" else float(header[4])
        except ValueError as e:
            raise ParseError(f"{path}:{lineno}: malformed header", row=lineno) from e

        edges = []
        for lineno, tokens in rows[1:]:
            if len(tokens) != 2:
                raise ParseError(f"{path}:{lineno}: expected 'u v'", row=lineno)
            try:
                edges.append((int(tokens[0]), int(tokens[1])))
            except ValueError as e:
                raise ParseError(f"{path}:{lineno}: non-integer vertex", row=lineno) from e
        if len(edges) != m:
            raise ParseError(f"{path}: header declares {m} edges, found {len(edges)}")
        return cls(n, edges, s, t, a)

    @property
    def supply(self) -> NDArray[np.float64]:
        b = np.zeros(self.num_vertices)
        b[self.source] = self.value
        b[self.sink] = -self.value
        return b

    def max_flow(self) -> float:
        res = _Residual(self.num_vertices)
        for u, v in self.edges:
            res.add(int(u), int(v), 1.0, 0.0)
        return res.augment(self.source, self.sink, math.inf)

    @property
    def radius(self) -> float:
        return math.sqrt(self.dim)

    @property
    def diameter(self) -> float:
        return math.sqrt(self.dim)

    def divergence(self, x) -> NDArray[np.float64]:
        """Net outflow at every vertex."""
        div = np.zeros(self.num_vertices)
        np.add.at(div, self.edges[:, 0], x)
        np.subtract.at(div, self.edges[:, 1], x)
        return div

    def linear_optimize(self, d, maximize: bool = False) -> Point:
        return lmo_flow(d, self, maximize)

    def contains(self, p, tol: float = 1e-9) -> bool:
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (self.dim,) or np.any(p < -tol) or np.any(p > 1.0 + tol):
            return False
        return bool(np.all(np.abs(self.divergence(p) - self.supply) <= tol * max(1.0, self.dim)))

    def vertices(self) -> NDArray[np.float64]:
        """Integral flows of the required value (the value must be an integer)."""
        if self.dim > MAX_ENUMERATION:
            raise SizeLimitError(f"flow enumeration limited to |E| <= {MAX_ENUMERATION}")
        masks = ((np.arange(2 ** self.dim)[:, None] >> np.arange(self.dim)) & 1).astype(np.float64)
        incidence = np.zeros((self.num_vertices, self.dim))
        incidence[self.edges[:, 0], np.arange(self.dim)] += 1.0
        incidence[self.edges[:, 1], np.arange(self.dim)] -= 1.0
        ok = np.all(np.abs(masks @ incidence.T - self.supply) <= 1e-9, axis=1)
        return masks[ok]


def _routable(net: FlowNetwork, fixed: NDArray[np.float64]) -> bool:
    """Whether a flow exists that agrees with `fixed` on its non-NaN arcs."""
    N = net.num_vertices
    res = _Residual(N + 2)
    free = np.isnan(fixed)
    for e in np.flatnonzero(free):
        u, v = net.edges[e]
        res.add(int(u), int(v), 1.0, 0.0)
    need = net.supply - net.divergence(np.where(free, 0.0, fixed))
    required = 0.0
    for z in range(N):
        if need[z] > _EPS:
            res.add(N, z, float(need[z]), 0.0)
            required += need[z]
        elif need[z] < -_EPS:
            res.add(z, N + 1, float(-need[z]), 0.0)
    return res.augment(N, N + 1, required) >= required - 1e-9


def _lexicographic_flow(net: FlowNetwork) -> Point:
    # integral data keeps every partially fixed polytope integral, so an arc
    # that cannot be 0 can be 1
    fixed = np.full(net.dim, np.nan)
    for e in range(net.dim):
        fixed[e] = 0.0
        if not _routable(net, fixed):
            fixed[e] = 1.0
    return fixed


def lmo_flow(d, net: FlowNetwork, maximize: bool = False) -> Point:
    """
    Minimum-cost flow of the network's value with arc costs d (maximize flips
    the sign), by successive shortest paths.

    Negative-cost arcs start saturated; the resulting imbalances are routed
    from a super source to a super sink, so every residual cost is
    nonnegative when the first path is searched.

    A zero direction with an integral value returns the lexicographically
    smallest integral flow, found by fixing arcs to 0 in index order while a
    flow still exists. With a fractional value it returns the flow the path
    search finds first.
    """
    cost = net.check_dim(d)
    if not np.any(cost) and float(net.value).is_integer():
        return _lexicographic_flow(net)
    if maximize:
        cost = -cost

    N = net.num_vertices
    res = _Residual(N + 2)
    super_source, super_sink = N, N + 1

    saturated = cost < 0
    arcs = []
    for e, (u, v) in enumerate(net.edges):
        a = res.add(int(u), int(v), 1.0, float(cost[e]))
        if saturated[e]:
            res.cap[a], res.cap[a + 1] = 0.0, 1.0
        arcs.append(a)

    need = net.supply - net.divergence(saturated.astype(np.float64))
    required = 0.0
    for z in range(N):
        if need[z] > _EPS:
            res.add(super_source, z, float(need[z]), 0.0)
            required += need[z]
        elif need[z] < -_EPS:
            res.add(z, super_sink, float(-need[z]), 0.0)

    pushed = res.augment(super_source, super_sink, required)
    if pushed < required - 1e-9:
        raise InfeasibleConstraintError(f"cannot route a flow of value {net.value}")
    return np.array([res.cap[a + 1] for a in arcs])


# ---------------------------------------------------------------------------
# Nuclear-norm ball
# ---------------------------------------------------------------------------

def _power_iteration(gram: NDArray[np.float64], v: NDArray[np.float64], tol: float, max_iter: int) -> NDArray[np.float64]:
    lam = 0.0
    for _ in range(max_iter):
        w = gram @ v
        lam_new = float(np.linalg.norm(w))
        if lam_new == 0.0:
            break
        v = w / lam_new
        converged = abs(lam_new - lam) <= tol * lam_new
        lam = lam_new
        if converged:
            break
    return v


def top_singular_triple(G: NDArray[np.float64], tol: float = 1e-8, max_iter: int = 1000):
    """
    Power iteration on G'G. Returns (sigma_1, u_1, v_1); sigma is 0 for G = 0.

    A start that is itself a lower singular vector (a single row of an
    axis-aligned G, say) never leaves it, so the iteration runs from the
    largest row and from a generic mix of all rows, and the larger sigma wins.
    """
    m, n = G.shape
    row_norms = np.linalg.norm(G, axis=1)
    if not np.any(row_norms):
        return 0.0, np.zeros(m), np.zeros(n)

    gram = G.T @ G
    generic = G.T @ (1.0 + np.sqrt(np.arange(1, m + 1)) % 1.0) + row_norms.max() * np.cos(np.arange(1, n + 1))
    starts = [G[int(np.argmax(row_norms))], generic]

    best = (0.0, np.zeros(m), np.zeros(n))
    for start in starts:
        norm = np.linalg.norm(start)
        if norm == 0.0:
            continue
        v = _power_iteration(gram, start / norm, tol, max_iter)
        u = G @ v
        sigma = float(np.linalg.norm(u))
        if sigma > best[0]:
            best = (sigma, u / sigma, v)
    return best


class NuclearBall(ConstraintSet):
    """m x n matrices, flattened row-major, with nuclear norm at most k."""

    def __init__(self, shape: tuple[int, int], k: float):
        if k <= 0:
            raise InvalidArgumentError(f"nuclear radius must be positive, got {k}")
        self.shape = (int(shape[0]), int(shape[1]))
        self.k = float(k)
        self.dim = self.shape[0] * self.shape[1]

    def __repr__(self) -> str:
        return f"NuclearBall(shape={self.shape}, k={self.k:g})"

    @property
    def radius(self) -> float:
        return self.k

    @property
    def diameter(self) -> float:
        return 2.0 * self.k

    def linear_optimize(self, d, maximize: bool = False) -> Point:
        G = self.check_dim(d).reshape(self.shape)
        return lmo_nuclear(G, self, maximize).reshape(-1)

    def contains(self, p, tol: float = 1e-6) -> bool:
        p = np.asarray(p, dtype=np.float64)
        if p.size != self.dim:
            return False
        return float(np.linalg.svd(p.reshape(self.shape), compute_uv=False).sum()) <= self.k + tol

    @property
    def supports_projection(self) -> bool:
        return True

    def project(self, y) -> Point:
        """Full SVD, then the singular values are projected onto {s >= 0, sum(s) <= k}."""
        Y = self.check_dim(y).reshape(self.shape)
        U, s, Vt = np.linalg.svd(Y, full_matrices=False)
        if s.sum() > self.k:
            desc = np.sort(s)[::-1]
            theta = (np.cumsum(desc) - self.k) / np.arange(1, desc.size + 1)
            rho = np.nonzero(desc - theta > 0)[0][-1]
            s = np.maximum(s - theta[rho], 0.0)
        return ((U * s) @ Vt).reshape(-1)


def lmo_nuclear(G, ball: NuclearBall, maximize: bool = False) -> NDArray[np.float64]:
    """-k u1 v1' (or +k u1 v1' when maximizing) from the top singular pair of G."""
    G = np.asarray(G, dtype=np.float64)
    if G.shape != ball.shape:
        raise InvalidArgumentError(f"expected a {ball.shape} matrix, got {G.shape}")
    sigma, u, v = top_singular_triple(G)
    if sigma == 0.0:
        return np.zeros(ball.shape)
    sign = 1.0 if maximize else -1.0
    return sign * ball.k * np.outer(u, v)
