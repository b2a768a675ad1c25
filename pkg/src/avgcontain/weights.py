"""Doubly stochastic weight design on a fixed sparsity pattern.

The feasible set is affine: unit row and column sums, zeros off the pattern.
Entrywise nonnegativity is *not* imposed, so optimizer outputs may contain
negative entries; :func:`check_doubly_stochastic` reports them.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .exceptions import InfeasiblePatternError, NodeWeightError
from .graph import DiGraph, diameter, is_strongly_connected
from .matrixops import agreement_matrix, spectral_norm
from .validation import check_int, check_matrix, check_positive

FEASIBILITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SparsityPattern:
    """Boolean ``q x q`` mask; ``allowed[i, j]`` iff ``j -> i`` is a follower edge or ``i == j``."""

    allowed: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.allowed, dtype=bool)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"pattern must be square, got shape {a.shape}")
        a = a | np.eye(a.shape[0], dtype=bool)
        a.setflags(write=False)
        object.__setattr__(self, "allowed", a)

    @classmethod
    def from_graph(cls, gF: DiGraph):
        return cls(gF.adjacency)

    @classmethod
    def complete(cls, q):
        return cls(np.ones((q, q), dtype=bool))

    @property
    def q(self):
        return self.allowed.shape[0]

    @property
    def edges(self):
        """Off-diagonal support as a boolean mask."""
        return self.allowed & ~np.eye(self.q, dtype=bool)


@dataclass(frozen=True, eq=False)
class FeasiblePoint:
    X: np.ndarray
    row_residual: float
    col_residual: float
    sparsity_violation: float

    @property
    def feasible(self):
        return max(self.row_residual, self.col_residual, self.sparsity_violation) <= FEASIBILITY_TOL


def _kkt_pinv(mask):
    q = mask.shape[-1]
    F = mask.astype(float)
    K = np.zeros((2 * q, 2 * q))
    K[:q, :q] = np.diag(F.sum(axis=1))
    K[q:, q:] = np.diag(F.sum(axis=0))
    K[:q, q:] = F
    K[q:, :q] = F.T
    return np.linalg.pinv(K)


class AffineProjector:
    """Euclidean projection onto ``{Y : Y 1 = 1, Y^T 1 = 1, Y = 0 off mask}``.

    The multipliers of the row and column constraints solve a ``2q x 2q``
    system whose pseudo-inverse is computed once per mask.  ``mask`` may be a
    stack ``(B, q, q)``; :meth:`__call__` then projects a matching stack.
    """

    def __init__(self, mask):
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim not in (2, 3) or mask.shape[-1] != mask.shape[-2]:
            raise ValueError(f"mask must be (q, q) or (B, q, q), got {mask.shape}")
        flat = mask.reshape(-1, *mask.shape[-2:])
        if not (flat.any(axis=2).all() and flat.any(axis=1).all()):
            raise InfeasiblePatternError("some row or column has no allowed entry")
        self.mask = mask
        self.q = mask.shape[-1]
        self._pinv = np.stack([_kkt_pinv(m) for m in flat]).reshape(*mask.shape[:-2], 2 * self.q, 2 * self.q)
        # a consistent KKT system reproduces unit sums; anything else is infeasible
        Y = self(np.zeros(mask.shape))
        if max(np.abs(Y.sum(-1) - 1).max(), np.abs(Y.sum(-2) - 1).max()) > 1e-8:
            raise InfeasiblePatternError("no matrix with unit row and column sums fits the pattern")

    def __call__(self, X):
        q = self.q
        F = self.mask
        Y = X * F
        r = np.concatenate([Y.sum(-1) - 1, Y.sum(-2) - 1], axis=-1)
        ab = np.einsum("...ij,...j->...i", self._pinv, r)
        a, b = ab[..., :q], ab[..., q:]
        return (X - a[..., :, None] - b[..., None, :]) * F


def _residuals(X, mask):
    return (float(np.abs(X.sum(axis=1) - 1).max()),
            float(np.abs(X.sum(axis=0) - 1).max()),
            float(np.abs(np.where(mask, 0.0, X)).max()))


def project_affine(X, p: SparsityPattern, projector: AffineProjector | None = None) -> FeasiblePoint:
    """Closest matrix (Frobenius) with unit row/column sums supported on ``p``."""
    X = check_matrix(X, name="X", square=True)
    if X.shape[0] != p.q:
        raise ValueError(f"X is {X.shape[0]}x{X.shape[0]}, pattern is {p.q}x{p.q}")
    if projector is None:
        projector = AffineProjector(p.allowed)
    Y = projector(X)
    return FeasiblePoint(Y, *_residuals(Y, p.allowed))


def objective(X):
    """``||X - J||_2`` with ``J`` the averaging projector."""
    X = check_matrix(X, name="X", square=True)
    return spectral_norm(X - agreement_matrix(X.shape[0])).value


def norm_subgradient(X):
    """``u1 v1^T`` from the top singular pair of ``X - J``; zero when ``X = J``."""
    X = check_matrix(X, name="X", square=True)
    res = spectral_norm(X - agreement_matrix(X.shape[0]))
    if res.value == 0:
        return np.zeros_like(X)
    return np.outer(res.left_vector, res.right_vector)


@dataclass
class CentralizedResult:
    A1: np.ndarray
    objective: float
    iterations: int
    plateaued: bool
    history: np.ndarray = field(repr=False)  # best objective after each subgradient step
    polished: bool = False


def _smooth_polish(X0, mask, mu_start=1e-2, mu_stop=1e-10, maxiter=2000):
    """Minimise a log-sum-exp smoothing of ``||X - J||_2`` over the affine set.

    Works in coordinates of the null space of the sum constraints restricted to
    the free entries, so every trial point stays exactly feasible.
    """
    q = mask.shape[0]
    idx = np.flatnonzero(mask.ravel())
    nf = idx.size
    rows, cols = np.divmod(idx, q)
    K = np.zeros((2 * q, nf))
    K[rows, np.arange(nf)] = 1
    K[q + cols, np.arange(nf)] = 1
    N = scipy.linalg.null_space(K)
    if N.shape[1] == 0:
        return X0
    J = agreement_matrix(q)
    x0 = X0.ravel()[idx]

    def to_matrix(y):
        X = np.zeros(q * q)
        X[idx] = x0 + N @ y
        return X.reshape(q, q)

    def value_grad(y, mu):
        U, s, Vt = np.linalg.svd(to_matrix(y) - J)
        e = np.exp((s - s[0]) / mu)
        total = e.sum()
        G = (U * (e / total)) @ Vt
        return s[0] + mu * np.log(total), N.T @ G.ravel()[idx]

    y = np.zeros(N.shape[1])
    best_X, best = X0, np.linalg.norm(X0 - J, 2)
    mu = mu_start
    while mu >= mu_stop:
        res = scipy.optimize.minimize(value_grad, y, args=(mu,), jac=True, method="L-BFGS-B",
                                      options=dict(maxiter=maxiter, gtol=1e-14, ftol=1e-16, maxcor=30))
        y = res.x
        X = to_matrix(y)
        val = np.linalg.norm(X - J, 2)
        if val < best:
            best, best_X = val, X
        mu /= 10
    return best_X


def solve_centralized(p: SparsityPattern, eta0=1.0, max_iter=5000, plateau=500, tol=1e-9,
                      polish=True) -> CentralizedResult:
    """Minimise ``||X - J||_2`` over doubly stochastic matrices on pattern ``p``.

    Projected subgradient with step ``eta0 / sqrt(t + 1)`` from the projection
    of ``J``; stops after ``plateau`` steps without improvement above ``tol``.
    With ``polish`` the best iterate is refined by a smoothed quasi-Newton
    solve, which is kept only when it improves the objective.
    """
    eta0 = check_positive(eta0, "eta0")
    max_iter = check_int(max_iter, "max_iter", minimum=1)
    plateau = check_int(plateau, "plateau", minimum=1)
    q = p.q
    proj = AffineProjector(p.allowed)
    J = agreement_matrix(q)
    X = proj(J)
    best_X, best = X, np.linalg.norm(X - J, 2)
    history = []
    since = 0
    t = 0
    plateaued = False
    for t in range(max_iter):
        if best == 0:
            plateaued = True
            break
        G = norm_subgradient(X)
        X = proj(X - eta0 / np.sqrt(t + 1) * G)
        val = np.linalg.norm(X - J, 2)
        if val < best - tol:
            since = 0
        else:
            since += 1
        if val < best:
            best, best_X = val, X
        history.append(best)
        if since >= plateau:
            plateaued = True
            break
    polished = False
    if polish and best > 0:
        Xp = proj(_smooth_polish(best_X, p.allowed))
        val = np.linalg.norm(Xp - J, 2)
        if val < best:
            best, best_X, polished = val, Xp, True
            history.append(best)
    return CentralizedResult(best_X, float(best), len(history), plateaued, np.asarray(history), polished)


def default_node_weight(gF: DiGraph):
    """Uniform node-weight start ``(1/d*)^(2D+1)``, clamped to ``1/(2 d*)``.

    ``d*`` is the largest out-degree and ``D`` the diameter.  The clamp keeps
    every self-weight ``1 - d_i v_i`` at least one half.
    """
    d_star = int(gF.out_degrees.max())
    D = diameter(gF)
    return min((1.0 / d_star) ** (2 * D + 1), 1.0 / (2 * d_star))


def auto_node_weight(gF: DiGraph, tol=1e-14, max_steps=100_000):
    """Largest uniform ``v(0)`` keeping ``d_i v_i(t) <= 1/2`` for every agent and step.

    The node-weight recursion is linear, so the trajectory from ``v(0) = 1`` is
    scaled by the peak of ``d_i v_i`` along it.
    """
    d = gF.out_degrees.astype(float)
    adj = gF.adjacency.astype(float)
    v = np.ones(gF.n)
    peak = (d * v).max()
    for _ in range(max_steps):
        v_new = 0.5 * (v + (adj @ v) / d)
        peak = max(peak, (d * v_new).max())
        done = np.abs(v_new - v).max() <= tol * v.max()
        v = v_new
        if done:
            break
    return 0.5 / peak


def balance_node_weights(gF: DiGraph, v0=None, tol=1e-13, max_iter=1_000_000):
    """Iterate ``v_i <- (v_i + (1/d_i) sum_{j in N_in(i)} v_j) / 2`` to a fixed point.

    ``d_i`` is the out-degree; ``sum_i d_i v_i`` is conserved.  ``v0`` is
    ``"bound"`` (default, :func:`default_node_weight`), ``"auto"``
    (:func:`auto_node_weight`), a scalar or a vector.  Returns ``(v, iterations)``.
    """
    if not is_strongly_connected(gF):
        raise ValueError("node-weight balancing needs a strongly connected graph")
    d = gF.out_degrees.astype(float)
    adj = gF.adjacency.astype(float)
    if v0 is None or (isinstance(v0, str) and v0 == "bound"):
        v = np.full(gF.n, default_node_weight(gF))
    elif isinstance(v0, str) and v0 == "auto":
        v = np.full(gF.n, auto_node_weight(gF))
    elif isinstance(v0, str):
        raise ValueError(f"v0 must be 'bound', 'auto', a number or a vector, got {v0!r}")
    else:
        v = np.broadcast_to(np.asarray(v0, dtype=float), (gF.n,)).copy()
    if np.any(v <= 0):
        raise NodeWeightError("initial node weights must be positive")
    for t in range(1, max_iter + 1):
        if np.any(1 - d * v < 0):
            raise NodeWeightError(
                f"self-weight 1 - d_i v_i went negative at step {t - 1} "
                f"(max d_i v_i = {(d * v).max():.3g}); start from smaller node weights")
        v_new = 0.5 * (v + (adj @ v) / d)
        change = np.abs(v_new - v).max()
        v = v_new
        if change < tol:
            return v, t
    return v, max_iter


def wba_weights(gF: DiGraph, tol=1e-13, v0=None, max_iter=1_000_000):
    """Balanced mixing matrix: ``P[i, j] = v_j`` on edges ``j -> i``, ``P[i, i] = 1 - d_i v_i``."""
    v, _ = balance_node_weights(gF, v0, tol, max_iter)
    d = gF.out_degrees.astype(float)
    P = gF.adjacency * v[None, :]
    np.fill_diagonal(P, 1 - d * v)
    if np.any(np.diag(P) < 0):
        raise NodeWeightError("balanced node weights leave a negative self-weight")
    return P


@dataclass(frozen=True)
class StochasticityReport:
    row_deviation: float
    col_deviation: float
    min_entry: float
    sparsity_violations: int
    tol: float

    @property
    def doubly_stochastic(self):
        return (self.row_deviation <= self.tol and self.col_deviation <= self.tol
                and self.min_entry >= -self.tol and self.sparsity_violations == 0)


def check_doubly_stochastic(X, tol=1e-10, pattern: SparsityPattern | None = None) -> StochasticityReport:
    X = check_matrix(X, name="X", square=True)
    viol = 0
    if pattern is not None:
        viol = int(np.count_nonzero(np.abs(np.where(pattern.allowed, 0.0, X)) > tol))
    return StochasticityReport(float(np.abs(X.sum(axis=1) - 1).max()), float(np.abs(X.sum(axis=0) - 1).max()),
                               float(X.min()), viol, tol)
