"""Containment dynamics: push-sum average consensus and the Laplacian baseline.

All state vectors here are in block order, followers first then leaders, so
the full weight matrix is ``[[A1, A2], [0, I]]``.  States have shape
``(n_agents, n_dims)``; every dimension runs independently with one shared
weight vector ``w`` (the ``w`` recursion does not depend on the states).

Push-sum readout
----------------
Each follower keeps ``s_i`` and ``w_i``, mixes them with its in-neighbors,
and reads out an estimate.  Two readouts are available:

``"ratio"``
    ``x_i = s_i / w_i``.  Leaders re-inject their values every round, so ``s``
    and ``w`` grow linearly and this ratio approaches the leaders' mean only
    like ``O(1/k)``.
``"increment"`` (default)
    ``x_i = (s_i(k) - s_i(k-1)) / (w_i(k) - w_i(k-1))``.  The increments obey
    plain push-sum on the follower graph seeded once by the leaders, so the
    estimate converges geometrically at rate ``rho(A1 - J)`` to the same limit.
    A follower that no leader mass has reached yet holds its previous state.
"""

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import InvalidWeightsError
from .matrixops import agreement_matrix, solve_linear, spectral_radius
from .validation import check_int, check_matrix, check_positive, check_states

READOUTS = ("increment", "ratio")
_STOCHASTIC_TOL = 1e-12
# increments below this fraction of w are roundoff, not leader mass
_DW_FLOOR = 1e-12
_DIVERGED = 1e150


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Block weights ``A1`` (follower-follower) and ``A2`` (leader-follower).

    ``mode`` is ``"push_sum"`` (column-stochastic, nonnegative) or
    ``"laplacian"`` (row-stochastic Laplacian baseline).
    """

    A1: np.ndarray
    A2: np.ndarray
    mode: str = "push_sum"

    def __post_init__(self):
        A1 = check_matrix(self.A1, name="A1", square=True)
        A2 = check_matrix(self.A2, name="A2", allow_empty=True)
        if A2.shape[0] != A1.shape[0]:
            raise ValueError(f"A2 must have {A1.shape[0]} rows, got {A2.shape[0]}")
        if self.mode not in ("push_sum", "laplacian"):
            raise ValueError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "A1", A1)
        object.__setattr__(self, "A2", A2)

    @property
    def q(self):
        return self.A1.shape[0]

    @property
    def m(self):
        return self.A2.shape[1]

    @property
    def n(self):
        return self.q + self.m

    @cached_property
    def full(self):
        q, m = self.q, self.m
        A = np.zeros((q + m, q + m))
        A[:q, :q] = self.A1
        A[:q, q:] = self.A2
        A[q:, q:] = np.eye(m)
        return A

    def problems(self, pattern=None, leader_pattern=None, tol=_STOCHASTIC_TOL):
        """List every violated push-sum invariant (empty when valid).

        ``pattern`` (``q x q`` bool) and ``leader_pattern`` (``q x m`` bool)
        optionally restrict where positive weights may sit.
        """
        out = []
        if self.mode == "push_sum":
            if self.A1.min() < 0:
                out.append(f"A1 has negative entries (min {self.A1.min():.3g})")
            if self.A2.size and self.A2.min() < 0:
                out.append(f"A2 has negative entries (min {self.A2.min():.3g})")
            dev1 = np.abs(self.A1.sum(axis=0) - 1).max()
            if dev1 > tol:
                out.append(f"A1 columns do not sum to 1 (max deviation {dev1:.3g})")
            if self.A2.size:
                dev2 = np.abs(self.A2.sum(axis=0) - 1).max()
                if dev2 > tol:
                    out.append(f"A2 columns do not sum to 1 (max deviation {dev2:.3g})")
        if np.diag(self.A1).min() <= 0:
            out.append("A1 diagonal must be strictly positive")
        if pattern is not None:
            allowed = np.asarray(pattern, dtype=bool) | np.eye(self.q, dtype=bool)
            bad = (self.A1 != 0) & ~allowed
            if bad.any():
                out.append(f"A1 has {int(bad.sum())} weight(s) on non-edges")
        if leader_pattern is not None and self.A2.size:
            bad = (self.A2 != 0) & ~np.asarray(leader_pattern, dtype=bool)
            if bad.any():
                out.append(f"A2 has {int(bad.sum())} weight(s) on non-edges")
        return out

    def check(self, pattern=None, leader_pattern=None, tol=_STOCHASTIC_TOL):
        issues = self.problems(pattern, leader_pattern, tol)
        if issues:
            raise InvalidWeightsError("; ".join(issues))
        return self


def uniform_leader_weights(leader_pattern, rng=None):
    """Column-stochastic ``A2``: each leader splits unit mass over the followers it feeds.

    With ``rng`` the split is a random Dirichlet draw instead of uniform.
    """
    P = np.asarray(leader_pattern, dtype=bool)
    A2 = np.zeros(P.shape)
    for j in range(P.shape[1]):
        rows = np.flatnonzero(P[:, j])
        if rows.size == 0:
            raise ValueError(f"leader column {j} feeds no follower")
        if rng is None:
            A2[rows, j] = 1.0 / rows.size
        else:
            A2[rows, j] = rng.dirichlet(np.ones(rows.size))
    return A2


def leaders_average(xL):
    """Componentwise mean of the leader states."""
    xL = check_states(xL, name="leader states")
    if xL.shape[0] == 0:
        raise ValueError("no leaders to average")
    return xL.mean(axis=0)


@dataclass(frozen=True, eq=False)
class PushSumState:
    s: np.ndarray
    w: np.ndarray
    x: np.ndarray
    k: int = 0
    s_prev: np.ndarray | None = None
    w_prev: np.ndarray | None = None
    reached: np.ndarray | None = None

    @classmethod
    def initial(cls, x0, q):
        x0 = check_states(x0)
        n = x0.shape[0]
        reached = np.zeros(q, dtype=bool)
        return cls(s=x0.copy(), w=np.ones(n), x=x0.copy(), k=0, reached=reached)


def push_sum_round(st: PushSumState, W: WeightMatrix, readout="increment") -> PushSumState:
    """One synchronous round ``s <- A s``, ``w <- A w`` with leader rows held fixed."""
    if readout not in READOUTS:
        raise ValueError(f"readout must be one of {READOUTS}")
    q = W.q
    s = st.s.copy()
    w = st.w.copy()
    s[:q] = W.A1 @ st.s[:q] + W.A2 @ st.s[q:]
    w[:q] = W.A1 @ st.w[:q] + W.A2 @ st.w[q:]
    if np.any(w[:q] <= 0):
        raise InvalidWeightsError(f"push-sum weight became nonpositive at round {st.k + 1}")
    x = st.x.copy()
    reached = st.reached if st.reached is not None else np.zeros(q, dtype=bool)
    if readout == "ratio":
        x[:q] = s[:q] / w[:q, None]
        reached = np.ones(q, dtype=bool)
    else:
        dw = w[:q] - st.w[:q]
        ok = dw > _DW_FLOOR * w[:q]
        x[:q][ok] = (s[:q][ok] - st.s[:q][ok]) / dw[ok, None]
        reached = reached | ok
    return PushSumState(s, w, x, st.k + 1, st.s, st.w, reached)


@dataclass
class Trajectory:
    """Per-iteration snapshots of every agent's state plus the follower error."""

    states: np.ndarray  # (iterations + 1, n, dims)
    errors: np.ndarray  # (iterations + 1,)
    target: np.ndarray | None = None

    @property
    def iterations(self):
        return self.states.shape[0] - 1


@dataclass
class ConvergenceReport:
    converged: bool
    iterations: int
    x_final: np.ndarray
    target: np.ndarray
    max_error: float
    successive_error: float
    growth_factor: float | None = None
    notes: list[str] = field(default_factory=list)


def run_push_sum(W: WeightMatrix, x0, gamma=1e-10, max_iter=10_000, readout="increment",
                 pattern=None, leader_pattern=None, record=True):
    """Iterate push-sum until every follower's successive change is at most ``gamma``.

    ``x0`` holds all agents' initial states in block order.  Returns
    ``(Trajectory, ConvergenceReport)``; hitting ``max_iter`` is reported via
    ``converged=False`` rather than raised.
    """
    W.check(pattern, leader_pattern)
    gamma = check_positive(gamma, "gamma")
    max_iter = check_int(max_iter, "max_iter", minimum=1)
    x0 = check_states(x0, W.n, name="x0")
    q = W.q
    target = leaders_average(x0[q:])

    st = PushSumState.initial(x0, q)
    snaps = [st.x.copy()] if record else []
    errs = [np.abs(st.x[:q] - target).max()]
    E = np.inf
    converged = False
    while st.k < max_iter:
        new = push_sum_round(st, W, readout)
        E = np.abs(new.x[:q] - st.x[:q]).max()
        st = new
        if record:
            snaps.append(st.x.copy())
        errs.append(np.abs(st.x[:q] - target).max())
        if E <= gamma and st.reached.all():
            converged = True
            break
    states = np.stack(snaps) if record else st.x[None].copy()
    traj = Trajectory(states, np.asarray(errs), target)
    report = ConvergenceReport(converged, st.k, st.x.copy(), target, float(errs[-1]), float(E))
    return traj, report


def laplacian_protocol_matrices(L, alpha) -> WeightMatrix:
    """Baseline weights ``A1 = I - alpha L1``, ``A2 = -alpha L2`` (row-stochastic)."""
    check_positive(alpha, "alpha", allow_zero=True)
    q = L.L1.shape[0]
    return WeightMatrix(np.eye(q) - alpha * L.L1, -alpha * L.L2, mode="laplacian")


def max_stepsize(L1):
    """Supremum of stable step sizes: min over eigenvalues of ``2 Re / |lambda|^2``."""
    L1 = check_matrix(L1, name="L1", square=True)
    lam = np.linalg.eigvals(L1)
    if np.any(lam.real <= 0):
        raise ValueError("every eigenvalue of L1 needs a positive real part")
    return float(np.min(2 * lam.real / np.abs(lam) ** 2))


def containment_fixed_point(L, xL):
    """Final follower states ``-L1^{-1} L2 xL`` of the Laplacian baseline."""
    xL = check_states(xL, L.L2.shape[1], name="leader states")
    return solve_linear(L.L1, -L.L2 @ xL)


def run_laplacian_containment(L, alpha, xF0, xL, gamma=1e-10, max_iter=10_000, record=True):
    """Iterate ``x_F <- A1 x_F + A2 x_L`` from ``xF0``.

    A step size at or beyond :func:`max_stepsize` only warns; the run proceeds
    so divergence can be observed and ``growth_factor`` (``rho(A1)``) reported.
    """
    gamma = check_positive(gamma, "gamma")
    max_iter = check_int(max_iter, "max_iter", minimum=1)
    W = laplacian_protocol_matrices(L, alpha)
    xF = check_states(xF0, W.q, name="xF0")
    xL = check_states(xL, W.m, name="leader states")
    notes = []
    try:
        bound = max_stepsize(L.L1)
    except ValueError as exc:
        bound = None
        notes.append(str(exc))
    if bound is not None and alpha >= bound:
        msg = f"alpha={alpha:g} is not below the stability bound {bound:g}; expect no convergence"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    try:
        target = containment_fixed_point(L, xL)
    except np.linalg.LinAlgError:
        target = np.full_like(xF, np.nan)
    growth = spectral_radius(W.A1).value

    drive = W.A2 @ xL
    snaps = [np.vstack([xF, xL])] if record else []
    errs = [np.abs(xF - target).max()]
    E = np.inf
    converged = False
    k = 0
    while k < max_iter:
        new = W.A1 @ xF + drive
        E = np.abs(new - xF).max()
        xF = new
        k += 1
        if record:
            snaps.append(np.vstack([xF, xL]))
        errs.append(np.abs(xF - target).max())
        if E <= gamma:
            converged = True
            break
        if not np.all(np.isfinite(xF)) or np.abs(xF).max() > _DIVERGED:
            notes.append(f"diverged after {k} rounds")
            break
    states = np.stack(snaps) if record else np.vstack([xF, xL])[None]
    traj = Trajectory(states, np.asarray(errs), target)
    report = ConvergenceReport(converged, k, np.vstack([xF, xL]), target, float(errs[-1]), float(E),
                               growth_factor=growth, notes=notes)
    return traj, report


def convergence_rate(A1):
    """``rho(A1 - J)`` with ``J`` the averaging projector."""
    A1 = check_matrix(A1, name="A1", square=True)
    return spectral_radius(A1 - agreement_matrix(A1.shape[0])).value


def empirical_rate(traj_or_errors, scale=None):
    """Geometric decay factor of the follower error, ``exp`` of a log-linear fit.

    The fit window runs from a quarter of the way into the decaying stretch up
    to the point where the error reaches roundoff level.
    """
    if isinstance(traj_or_errors, Trajectory):
        errors = traj_or_errors.errors
        if scale is None and traj_or_errors.target is not None:
            scale = float(np.abs(traj_or_errors.target).max())
    else:
        errors = np.asarray(traj_or_errors, dtype=float)
    scale = max(1.0, scale or 0.0)
    floor = 1e3 * np.finfo(float).eps * scale
    if errors.size == 0 or errors[0] <= floor:
        raise ValueError("trajectory is already converged at k=0")
    below = np.flatnonzero(errors <= floor)
    stop = below[0] if below.size else errors.size
    if stop < 10:
        raise ValueError(f"only {stop} iterations above roundoff; need at least 10")
    start = stop // 4 if stop >= 20 else 0
    k = np.arange(start, stop)
    slope = np.polyfit(k, np.log(errors[start:stop]), 1)[0]
    return float(np.exp(slope))
