"""scikit-learn style wrappers around the three weight designers.

``fit`` takes the follower graph (a :class:`DiGraph` or a square boolean
adjacency with ``adj[i, j]`` meaning ``j -> i``) and stores the designed
matrix in ``A1_`` together with ``objective_`` (``||A1 - J||_2``) and
``spectral_radius_`` (``rho(A1 - J)``).  There is no ``predict``: the fitted
matrix is the product.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .admm import AdmmConfig, run_admm
from .containment import convergence_rate
from .graph import DiGraph, is_strongly_connected
from .weights import SparsityPattern, objective, solve_centralized, wba_weights


def as_follower_graph(X) -> DiGraph:
    if isinstance(X, DiGraph):
        g = X
    else:
        adj = np.asarray(X)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"expected a square adjacency matrix, got shape {adj.shape}")
        adj = adj.astype(bool)
        np.fill_diagonal(adj, False)
        g = DiGraph.from_adjacency(adj)
    if g.n == 0 or not is_strongly_connected(g):
        raise ValueError("follower graph must be non-empty and strongly connected")
    return g


class _WeightDesigner(BaseEstimator):
    def _set_result(self, A1):
        self.A1_ = A1
        self.objective_ = objective(A1)
        self.spectral_radius_ = convergence_rate(A1)
        self.n_agents_ = A1.shape[0]

    def get_weights(self):
        check_is_fitted(self, "A1_")
        return self.A1_


class CentralizedWeights(_WeightDesigner):
    """Projected subgradient (plus optional smoothed polish) on the full pattern."""

    def __init__(self, eta0=1.0, max_iter=5000, plateau=500, tol=1e-9, polish=True):
        self.eta0 = eta0
        self.max_iter = max_iter
        self.plateau = plateau
        self.tol = tol
        self.polish = polish

    def fit(self, X, y=None):
        g = as_follower_graph(X)
        res = solve_centralized(SparsityPattern.from_graph(g), eta0=self.eta0, max_iter=self.max_iter,
                                plateau=self.plateau, tol=self.tol, polish=self.polish)
        self._set_result(res.A1)
        self.n_iter_ = res.iterations
        self.history_ = res.history
        return self


class AdmmWeights(_WeightDesigner):
    """Every follower estimates the matrix; ``A1_`` assembles row ``i`` from agent ``i``."""

    def __init__(self, rho=5.0, H=20, epsilon=1e-3, max_outer=3000, subgradient_iters=20,
                 subgradient_tol=1e-9, v_init="auto", local_pattern="row", r2_mode="row", eps_dual=None):
        self.rho = rho
        self.H = H
        self.epsilon = epsilon
        self.max_outer = max_outer
        self.subgradient_iters = subgradient_iters
        self.subgradient_tol = subgradient_tol
        self.v_init = v_init
        self.local_pattern = local_pattern
        self.r2_mode = r2_mode
        self.eps_dual = eps_dual

    def fit(self, X, y=None):
        g = as_follower_graph(X)
        res = run_admm(g, config=AdmmConfig(**self.get_params()))
        self._set_result(res.A1)
        self.copies_ = res.copies
        self.report_ = res.report
        self.n_iter_ = res.report.outer_iterations
        self.converged_ = res.report.converged
        return self


class BalancedWeights(_WeightDesigner):
    """Weight-balancing baseline from node weights at their fixed point."""

    def __init__(self, tol=1e-13, v0="bound", max_iter=1_000_000):
        self.tol = tol
        self.v0 = v0
        self.max_iter = max_iter

    def fit(self, X, y=None):
        g = as_follower_graph(X)
        self._set_result(wba_weights(g, tol=self.tol, v0=self.v0, max_iter=self.max_iter))
        return self
