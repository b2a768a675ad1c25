"""Graph builders and independent oracles shared by the tests."""

from collections import deque

import numpy as np

from avgcontain.graph import DiGraph, is_strongly_connected


def cycle_graph(n):
    """Directed cycle 0 -> 1 -> ... -> n-1 -> 0."""
    return DiGraph(n, tuple((i, (i + 1) % n) for i in range(n)))


def complete_graph(n):
    return DiGraph(n, tuple((i, j) for i in range(n) for j in range(n) if i != j))


def random_strongly_connected(rng, q, p=0.35):
    while True:
        adj = rng.random((q, q)) < p
        np.fill_diagonal(adj, False)
        g = DiGraph.from_adjacency(adj)
        if is_strongly_connected(g):
            return g


def bfs_reachable(adj, src):
    """Nodes reachable from ``src`` with ``adj[i, j]`` meaning ``j -> i``."""
    seen = {src}
    todo = deque([src])
    while todo:
        u = todo.popleft()
        for v in np.flatnonzero(adj[:, u]):
            if v not in seen:
                seen.add(int(v))
                todo.append(int(v))
    return seen


def bfs_strongly_connected(adj):
    n = adj.shape[0]
    return all(len(bfs_reachable(adj, s)) == n for s in range(n))


def bfs_diameter(adj):
    n = adj.shape[0]
    best = 0
    for s in range(n):
        dist = {s: 0}
        todo = deque([s])
        while todo:
            u = todo.popleft()
            for v in np.flatnonzero(adj[:, u]):
                if int(v) not in dist:
                    dist[int(v)] = dist[u] + 1
                    todo.append(int(v))
        best = max(best, max(dist.values()))
    return best


def power_norm(M, iters=5000, seed=0):
    """Largest singular value by power iteration on ``M^T M``."""
    v = np.random.default_rng(seed).standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        w = M.T @ (M @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        new = np.sqrt(nw)
        if abs(new - sigma) <= 1e-15 * max(1.0, new):
            break
        sigma = new
    return float(np.linalg.norm(M @ v))


def permutation_cycle(q):
    P = np.zeros((q, q))
    for i in range(q):
        P[(i + 1) % q, i] = 1
    return P


def random_doubly_stochastic(rng, q, n_perms=2):
    """Nonnegative, irreducible, positive-diagonal mixture of permutations."""
    weights = rng.dirichlet(np.ones(n_perms + 2))
    A = weights[0] * np.eye(q) + weights[1] * permutation_cycle(q)
    for w in weights[2:]:
        A += w * np.eye(q)[rng.permutation(q)]
    return A


def two_follower_laplacian():
    """Followers 0, 1 read each other; leader 2 feeds 0, leader 3 feeds 1."""
    return DiGraph(4, ((0, 1), (1, 0), (2, 0), (3, 1)))
