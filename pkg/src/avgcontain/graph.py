"""Directed interaction graphs, leader/follower partitioning and Laplacian blocks.

Edges are ordered pairs ``(j, i)`` read "agent ``i`` can see agent ``j``".  The
weighted adjacency convention follows that ordering: ``A[i, j]`` is the weight
on edge ``(j, i)``.  Self-influence lives on the diagonal of weight matrices and
is never an edge.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .validation import check_int

Edge = tuple[int, int]


@dataclass(frozen=True, eq=False)
class DiGraph:
    """Immutable directed graph on nodes ``0 .. n-1``.

    Parameters
    ----------
    n : int
        Number of agents.
    edges : sequence of (src, dst)
        ``dst`` reads ``src``'s state.
    weights : mapping (src, dst) -> float, optional
        Nonnegative edge weights; missing edges default to 1.
    labels : sequence of int, optional
        Original agent ids when this graph was extracted from a larger one.
    """

    n: int
    edges: tuple[Edge, ...]
    weights: Mapping[Edge, float] = field(default_factory=dict)
    labels: tuple[int, ...] | None = None

    def __post_init__(self):
        n = check_int(self.n, "n", minimum=0)
        edges = []
        seen = set()
        for e in self.edges:
            src, dst = (int(v) for v in e)
            if not (0 <= src < n and 0 <= dst < n):
                raise ValueError(f"edge {e} out of range for n={n}")
            if src == dst:
                raise ValueError(f"self-loop {e}: self-influence belongs on the weight diagonal")
            if (src, dst) in seen:
                raise ValueError(f"duplicate edge {e}")
            seen.add((src, dst))
            edges.append((src, dst))
        weights = {}
        for e, w in dict(self.weights).items():
            e = (int(e[0]), int(e[1]))
            if e not in seen:
                raise ValueError(f"weight given for missing edge {e}")
            if not np.isfinite(w) or w < 0:
                raise ValueError(f"edge weight must be finite and >= 0, got {w} on {e}")
            weights[e] = float(w)
        if self.labels is not None and len(self.labels) != n:
            raise ValueError("labels must have one entry per node")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", tuple(sorted(edges)))
        object.__setattr__(self, "weights", weights)
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(int(v) for v in self.labels))

    @classmethod
    def from_adjacency(cls, adj, labels=None):
        """Build from a boolean/weighted matrix with ``adj[i, j] != 0`` meaning ``j -> i``."""
        adj = np.asarray(adj)
        n = adj.shape[0]
        edges, weights = [], {}
        for i, j in zip(*np.nonzero(adj)):
            if i == j:
                continue
            edges.append((int(j), int(i)))
            if adj.dtype != bool:
                weights[(int(j), int(i))] = float(adj[i, j])
        return cls(n, tuple(edges), weights, labels)

    def __eq__(self, other):
        if not isinstance(other, DiGraph):
            return NotImplemented
        return (self.n, self.edges, self.weights) == (other.n, other.edges, other.weights)

    def __hash__(self):
        return hash((self.n, self.edges))

    def __repr__(self):
        return f"DiGraph(n={self.n}, edges={len(self.edges)})"

    def weight(self, src, dst):
        return self.weights.get((src, dst), 1.0)

    @cached_property
    def adjacency(self):
        """Boolean ``(n, n)`` matrix, ``adj[i, j]`` true iff ``j -> i``."""
        adj = np.zeros((self.n, self.n), dtype=bool)
        for src, dst in self.edges:
            adj[dst, src] = True
        adj.setflags(write=False)
        return adj

    def weighted_adjacency(self):
        W = np.zeros((self.n, self.n))
        for src, dst in self.edges:
            W[dst, src] = self.weight(src, dst)
        return W

    def in_neighbors(self, i):
        return tuple(int(j) for j in np.flatnonzero(self.adjacency[i]))

    def out_neighbors(self, i):
        return tuple(int(k) for k in np.flatnonzero(self.adjacency[:, i]))

    @cached_property
    def out_degrees(self):
        d = self.adjacency.sum(axis=0).astype(int)
        d.setflags(write=False)
        return d

    @cached_property
    def in_degrees(self):
        d = self.adjacency.sum(axis=1).astype(int)
        d.setflags(write=False)
        return d


@dataclass(frozen=True)
class Partition:
    """Leader and follower index lists of a parent graph, both in ascending order."""

    leaders: tuple[int, ...]
    followers: tuple[int, ...]

    @property
    def m(self):
        return len(self.leaders)

    @property
    def q(self):
        """Number of followers (``n - m``)."""
        return len(self.followers)

    @property
    def n(self):
        return self.m + self.q

    @cached_property
    def block_index(self):
        """Global agent id -> position in the ``[followers, leaders]`` block order."""
        order = self.followers + self.leaders
        return {g: k for k, g in enumerate(order)}

    @property
    def order(self):
        return self.followers + self.leaders


def partition_agents(g: DiGraph) -> Partition:
    """Leaders are exactly the agents with no in-neighbors."""
    has_in = g.adjacency.any(axis=1)
    leaders = tuple(int(i) for i in np.flatnonzero(~has_in))
    followers = tuple(int(i) for i in np.flatnonzero(has_in))
    return Partition(leaders, followers)


def follower_subgraph(g: DiGraph, p: Partition) -> DiGraph:
    """Subgraph induced by the followers, relabelled to ``0 .. q-1`` in follower order.

    ``labels`` on the result maps back to the parent graph's ids.
    """
    local = {f: k for k, f in enumerate(p.followers)}
    edges, weights = [], {}
    for src, dst in g.edges:
        if src in local and dst in local:
            e = (local[src], local[dst])
            edges.append(e)
            if (src, dst) in g.weights:
                weights[e] = g.weights[(src, dst)]
    return DiGraph(p.q, tuple(edges), weights, labels=p.followers)


def leader_follower_edges(g: DiGraph, p: Partition) -> tuple[Edge, ...]:
    """Edges from a leader to a follower, in the parent graph's ids."""
    leaders = set(p.leaders)
    followers = set(p.followers)
    return tuple(e for e in g.edges if e[0] in leaders and e[1] in followers)


def _csgraph(g):
    # csgraph reads row -> column, so transpose the "dst reads src" convention
    return csr_matrix(g.adjacency.T.astype(np.int8))


def is_strongly_connected(g: DiGraph) -> bool:
    if g.n == 0:
        raise ValueError("graph has no nodes")
    if g.n == 1:
        return True
    n_comp, _ = connected_components(_csgraph(g), directed=True, connection="strong")
    return n_comp == 1


def diameter(g: DiGraph) -> int:
    """Longest shortest directed path over all ordered pairs."""
    if not is_strongly_connected(g):
        raise ValueError("diameter is only defined for strongly connected graphs")
    if g.n == 1:
        return 0
    dist = shortest_path(_csgraph(g), directed=True, unweighted=True)
    return int(dist.max())


@dataclass
class ValidationReport:
    """Outcome of checking the three structural assumptions.

    ``clauses`` maps ``"a"``, ``"b"``, ``"c"`` to ``(passed, message)``.
    """

    clauses: dict[str, tuple[bool, str]]

    @property
    def passed(self):
        return all(ok for ok, _ in self.clauses.values())

    @property
    def failures(self):
        return [k for k, (ok, _) in self.clauses.items() if not ok]

    def lines(self):
        return [f"({k}) {'PASS' if ok else 'FAIL'}: {msg}" for k, (ok, msg) in self.clauses.items()]

    def __str__(self):
        return "\n".join(self.lines())


def validate_assumptions(g: DiGraph, p: Partition | None = None) -> ValidationReport:
    """Check (a) stationary leaders exist, (b) each leader feeds a follower, (c) the
    follower subgraph is strongly connected.
    """
    if p is None:
        p = partition_agents(g)
    clauses = {}

    stray = [i for i in p.leaders if g.adjacency[i].any()]
    if p.m == 0:
        clauses["a"] = (False, "no leaders: every agent has an in-neighbor")
    elif stray:
        clauses["a"] = (False, f"leaders {stray} have in-neighbors and would not stay stationary")
    else:
        clauses["a"] = (True, f"{p.m} stationary leader(s)")

    fed = {src for src, _ in leader_follower_edges(g, p)}
    lonely = [i for i in p.leaders if i not in fed]
    if lonely:
        clauses["b"] = (False, f"leaders {lonely} have no follower out-neighbor")
    else:
        clauses["b"] = (True, "every leader reaches at least one follower")

    if p.q == 0:
        clauses["c"] = (False, "no followers")
    elif is_strongly_connected(follower_subgraph(g, p)):
        clauses["c"] = (True, f"follower subgraph on {p.q} agents is strongly connected")
    else:
        clauses["c"] = (False, "follower subgraph is not strongly connected")
    return ValidationReport(clauses)


@dataclass(frozen=True)
class LaplacianBlocks:
    """Follower rows of the weighted Laplacian, split by column owner.

    ``L1`` is follower-follower (``q x q``), ``L2`` leader-follower (``q x m``).
    """

    L1: np.ndarray
    L2: np.ndarray


def laplacian_blocks(g: DiGraph, p: Partition | None = None, weights: Sequence | np.ndarray | None = None):
    """Degree-minus-adjacency Laplacian restricted to follower rows.

    ``weights`` optionally overrides the graph's edge weights with an ``(n, n)``
    matrix using the ``W[i, j]`` = weight of ``j -> i`` convention.
    """
    if p is None:
        p = partition_agents(g)
    if weights is None:
        W = g.weighted_adjacency()
    else:
        W = np.asarray(weights, dtype=float)
        if W.shape != (g.n, g.n):
            raise ValueError(f"weights must be ({g.n}, {g.n})")
        if np.any(W < 0):
            raise ValueError("Laplacian weights must be nonnegative")
        W = np.where(g.adjacency, W, 0.0)
    L = -W
    np.fill_diagonal(L, W.sum(axis=1))
    F = list(p.followers)
    Ld = list(p.leaders)
    return LaplacianBlocks(L[np.ix_(F, F)].copy(), L[np.ix_(F, Ld)].copy())
