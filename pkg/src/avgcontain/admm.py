"""Distributed weight design: every follower estimates the optimal ``A1`` by ADMM.

Each follower ``i`` keeps a full ``q x q`` copy ``A_i`` of the weight matrix,
a consensus estimate ``Z_i`` and a dual ``C_i``.  One outer iteration is

1. local primal step on ``A_i`` (projected subgradient over the agent's
   feasible set),
2. ``H`` rounds of dynamic average consensus over the directed follower graph
   (mixing ``M_i`` with node weights ``v_i``), giving ``Z_i``,
3. dual ascent ``C_i += rho (A_i - Z_i)``.

State is stored stacked over agents (leading axis = agent) so the
round-synchronous updates vectorise; :meth:`AdmmState.agent` exposes one
agent's slice.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NodeWeightError
from .graph import DiGraph, is_strongly_connected
from .matrixops import agreement_matrix
from .validation import check_int, check_positive
from .weights import AffineProjector, SparsityPattern, auto_node_weight, default_node_weight

V_INIT_MODES = ("auto", "bound")
LOCAL_PATTERNS = ("row", "full")
R2_MODES = ("row", "literal")


@dataclass
class AdmmConfig:
    """Tuning knobs for :func:`run_admm`.

    ``v_init``
        ``"auto"`` picks the largest uniform start keeping every self-weight
        ``1 - d_i v_i`` at least one half over the whole run; ``"bound"`` uses
        ``min((1/d*)^(2D+1), 1/(2 d*))``; a float is used as given.
    ``local_pattern``
        ``"row"``: agent ``i`` enforces sparsity on row ``i`` only;
        ``"full"``: every agent enforces the whole pattern.
    ``r2_mode``
        ``"row"``: penalise off-pattern, off-diagonal entries of row ``i``;
        ``"literal"``: penalise every row-``i`` entry outside the in-neighbors,
        including the diagonal.
    ``eps_dual``
        Stop also requires ``rho ||Z_i(k+1) - Z_i(k)||_F / q <= eps_dual``;
        ``None`` means ``epsilon / 10``, ``0`` disables the gate.
    """

    rho: float = 5.0
    H: int = 20
    epsilon: float = 1e-3
    max_outer: int = 3000
    subgradient_iters: int = 20
    subgradient_tol: float = 1e-9
    v_init: str | float = "auto"
    local_pattern: str = "row"
    r2_mode: str = "row"
    eps_dual: float | None = None
    track_conservation: bool = True

    def __post_init__(self):
        check_positive(self.rho, "rho")
        check_int(self.H, "H", minimum=1)
        check_positive(self.epsilon, "epsilon")
        check_int(self.max_outer, "max_outer", minimum=1)
        check_int(self.subgradient_iters, "subgradient_iters", minimum=0)
        check_positive(self.subgradient_tol, "subgradient_tol", allow_zero=True)
        if isinstance(self.v_init, str):
            if self.v_init not in V_INIT_MODES:
                raise ValueError(f"v_init must be one of {V_INIT_MODES} or a positive float")
        else:
            check_positive(self.v_init, "v_init")
        if self.local_pattern not in LOCAL_PATTERNS:
            raise ValueError(f"local_pattern must be one of {LOCAL_PATTERNS}")
        if self.r2_mode not in R2_MODES:
            raise ValueError(f"r2_mode must be one of {R2_MODES}")
        if self.eps_dual is not None:
            check_positive(self.eps_dual, "eps_dual", allow_zero=True)

    @property
    def dual_tolerance(self):
        return self.epsilon / 10 if self.eps_dual is None else self.eps_dual


@dataclass
class AgentAdmmState:
    """One follower's view: its copy, consensus estimate, dual, mixing value and node weight."""

    A: np.ndarray
    Z: np.ndarray
    C: np.ndarray
    M: np.ndarray
    v: float
    d: int


@dataclass
class AdmmState:
    A: np.ndarray  # (q, q, q) local copies
    Z: np.ndarray
    C: np.ndarray
    M: np.ndarray
    v: np.ndarray  # (q,) node weights
    d: np.ndarray  # (q,) out-degrees
    adjacency: np.ndarray  # (q, q) float, [i, j] = 1 iff j -> i
    k: int = 0

    @property
    def q(self):
        return self.v.shape[0]

    def agent(self, i) -> AgentAdmmState:
        return AgentAdmmState(self.A[i], self.Z[i], self.C[i], self.M[i], float(self.v[i]), int(self.d[i]))


def local_masks(pattern: SparsityPattern, local_pattern="row"):
    """Per-agent feasible-set masks, stacked ``(q, q, q)``."""
    q = pattern.q
    if local_pattern == "full":
        return np.broadcast_to(pattern.allowed, (q, q, q)).copy()
    masks = np.ones((q, q, q), dtype=bool)
    for i in range(q):
        masks[i, i, :] = pattern.allowed[i]
    return masks


def init_admm(gF: DiGraph, pattern: SparsityPattern | None = None, rho=5.0, H=20, v_init="bound") -> AdmmState:
    """Zero copies, estimates and duals; uniform positive node weights."""
    check_positive(rho, "rho")
    check_int(H, "H", minimum=1)
    if not is_strongly_connected(gF):
        raise ValueError("follower graph must be strongly connected")
    q = gF.n
    if pattern is not None and pattern.q != q:
        raise ValueError("pattern size does not match the graph")
    if v_init == "bound":
        v0 = default_node_weight(gF)
    elif v_init == "auto":
        v0 = auto_node_weight(gF)
    else:
        v0 = check_positive(v_init, "v_init")
    zeros = np.zeros((q, q, q))
    return AdmmState(A=zeros.copy(), Z=zeros.copy(), C=zeros.copy(), M=zeros.copy(),
                     v=np.full(q, v0), d=gF.out_degrees.astype(int).copy(),
                     adjacency=gF.adjacency.astype(float))


def _top_singular(Y):
    """Batched top singular value and vectors via the Gram matrix eigenproblem."""
    lam, V = np.linalg.eigh(np.swapaxes(Y, -1, -2) @ Y)
    v = V[..., :, -1]
    s = np.sqrt(np.maximum(lam[..., -1], 0.0))
    u = np.einsum("...ij,...j->...i", Y, v) / np.where(s > 0, s, 1.0)[..., None]
    return s, u, v


def _augmented(sigma, X, Z, C, rho, q):
    D = X - Z
    return sigma / q + np.einsum("...ij,...ij->...", C, D) + 0.5 * rho * np.einsum("...ij,...ij->...", D, D)


def local_objective(X, Z, C, rho):
    """``(1/q) ||X - J||_2 + <C, X - Z> + (rho/2) ||X - Z||_F^2`` over a stack."""
    q = X.shape[-1]
    return _augmented(np.linalg.norm(X - 1.0 / q, 2, axis=(-2, -1)), X, Z, C, rho, q)


def local_primal_step(Z, C, rho, projector: AffineProjector, iters=20, tol=1e-9):
    """Batched projected subgradient on the local augmented objective.

    Step ``1 / (rho (t+1))``, started from the projection of ``Z - C/rho``.
    Returns the best iterate per agent, with the projection of ``Z`` as an
    extra candidate.
    """
    q = Z.shape[-1]
    cand = projector(Z)
    best = cand
    best_val = _augmented(_top_singular(cand - 1.0 / q)[0], cand, Z, C, rho, q)
    X = projector(Z - C / rho)
    step = np.inf
    for t in range(iters + 1):
        s, u, v = _top_singular(X - 1.0 / q)
        val = _augmented(s, X, Z, C, rho, q)
        better = val < best_val
        best = np.where(better[..., None, None], X, best)
        best_val = np.where(better, val, best_val)
        if t == iters or step <= tol:
            break
        G = np.einsum("...i,...j->...ij", u, v) / q + C + rho * (X - Z)
        X_new = projector(X - G / (rho * (t + 1)))
        step = np.abs(X_new - X).max()
        X = X_new
    return best


def primal_local_update(st: AgentAdmmState, rho, mask, iters=300, tol=1e-9):
    """Single-agent primal step over the set given by ``mask``."""
    proj = AffineProjector(mask)
    return local_primal_step(st.Z[None], st.C[None], rho, proj, iters, tol)[0]


def inner_consensus_round(M, v, adjacency, d):
    """Simultaneous ``M_i <- (1 - d_i v_i) M_i + sum_{j in N_in(i)} v_j M_j`` and node-weight update."""
    self_w = 1 - d * v
    if np.any(self_w < 0):
        i = int(np.argmin(self_w))
        raise NodeWeightError(
            f"agent {i} self-weight 1 - d_i v_i = {self_w[i]:.3g} < 0; initialise node weights smaller")
    P = adjacency * v[None, :]
    M_new = self_w.reshape(-1, *([1] * (M.ndim - 1))) * M + np.tensordot(P, M, axes=(1, 0))
    v_new = 0.5 * (v + (adjacency @ v) / d)
    return M_new, v_new


@dataclass
class ConservationDrift:
    """Largest per-round relative drift of ``sum_i M_i`` and ``sum_i d_i v_i``."""

    mass: float = 0.0
    node_weight: float = 0.0

    def update(self, mass, node_weight):
        self.mass = max(self.mass, mass)
        self.node_weight = max(self.node_weight, node_weight)


def run_inner_loop(M, v, adjacency, d, H, drift: ConservationDrift | None = None):
    """``H`` consensus rounds; returns ``(M(H), v(H))``."""
    check_int(H, "H", minimum=1)
    for _ in range(H):
        M_new, v_new = inner_consensus_round(M, v, adjacency, d)
        if drift is not None:
            s0, s1 = M.sum(axis=0), M_new.sum(axis=0)
            scale = max(1.0, np.abs(s0).max())
            w0, w1 = d @ v, d @ v_new
            drift.update(np.abs(s1 - s0).max() / scale, abs(w1 - w0) / abs(w0))
        M, v = M_new, v_new
    return M, v


def dual_update(C, A, Z, rho):
    return C + rho * (A - Z)


def residuals(A, adjacency, pattern: SparsityPattern, r2_mode="row"):
    """Per-agent stopping residual ``R_i = max(r1, r2)``.

    ``r1`` is ``||A_i - A_j||_F / q`` over in-neighbors ``j``; ``r2`` is the
    largest magnitude in row ``i`` of ``A_i`` outside the allowed entries.
    """
    q = A.shape[0]
    adj = np.asarray(adjacency, dtype=bool)
    R = np.zeros(q)
    if r2_mode == "row":
        off = ~pattern.allowed
    else:
        off = ~adj
    for i in range(q):
        nb = np.flatnonzero(adj[i])
        r1 = np.linalg.norm(A[i] - A[nb], axis=(1, 2)).max() / q if nb.size else 0.0
        row_off = off[i]
        r2 = np.abs(A[i, i, row_off]).max() if row_off.any() else 0.0
        R[i] = max(r1, r2)
    return R


def max_disagreement(A):
    """``max_{i,j} ||A_i - A_j||_F`` over all pairs of copies."""
    flat = A.reshape(A.shape[0], -1)
    diff = flat[:, None, :] - flat[None, :, :]
    return float(np.sqrt((diff ** 2).sum(axis=-1)).max())


def assemble_rows(A, pattern: SparsityPattern, projector: AffineProjector | None = None):
    """Row ``i`` from agent ``i``'s copy, then projected onto the full feasible set."""
    q = A.shape[0]
    X = A[np.arange(q), np.arange(q), :]
    proj = projector or AffineProjector(pattern.allowed)
    return proj(X)


@dataclass
class AdmmReport:
    outer_iterations: int
    converged: bool
    residual_history: np.ndarray = field(repr=False)  # (iterations, q)
    dual_history: np.ndarray = field(repr=False)  # (iterations, q)
    first_primal_hit: int | None
    objective_history: np.ndarray = field(repr=False)  # (iterations, q) per-copy objective
    agent_objectives: np.ndarray
    disagreement: float
    v0: float
    drift: ConservationDrift = field(default_factory=ConservationDrift)

    @property
    def max_residuals(self):
        return self.residual_history.max(axis=1)


@dataclass
class AdmmResult:
    copies: np.ndarray
    A1: np.ndarray
    objective: float
    report: AdmmReport


def run_admm(gF: DiGraph, pattern: SparsityPattern | None = None, config: AdmmConfig | None = None,
             callback=None) -> AdmmResult:
    """Run outer iterations until every ``R_i <= epsilon`` (and the dual gate) or ``max_outer``.

    ``callback(k, state, R)`` is called after each outer iteration.
    """
    cfg = config or AdmmConfig()
    if pattern is None:
        pattern = SparsityPattern.from_graph(gF)
    st = init_admm(gF, pattern, cfg.rho, cfg.H, cfg.v_init)
    v0 = float(st.v[0])
    q = st.q
    rho = cfg.rho
    proj = AffineProjector(local_masks(pattern, cfg.local_pattern))
    drift = ConservationDrift()
    R_hist, S_hist, F_hist = [], [], []
    J = agreement_matrix(q)
    first_hit = None
    converged = False
    for k in range(1, cfg.max_outer + 1):
        st.A = local_primal_step(st.Z, st.C, rho, proj, cfg.subgradient_iters, cfg.subgradient_tol)
        st.M, st.v = run_inner_loop(st.A.copy(), st.v, st.adjacency, st.d, cfg.H,
                                    drift if cfg.track_conservation else None)
        Z_old, st.Z = st.Z, st.M.copy()
        st.C = dual_update(st.C, st.A, st.Z, rho)
        st.k = k
        R = residuals(st.A, st.adjacency, pattern, cfg.r2_mode)
        S = rho * np.linalg.norm(st.Z - Z_old, axis=(1, 2)) / q
        R_hist.append(R)
        S_hist.append(S)
        F_hist.append(np.linalg.norm(st.A - J, 2, axis=(1, 2)))
        if callback is not None:
            callback(k, st, R)
        primal_ok = R.max() <= cfg.epsilon
        if primal_ok and first_hit is None:
            first_hit = k
        if primal_ok and (cfg.dual_tolerance == 0 or S.max() <= cfg.dual_tolerance):
            converged = True
            break
    A1 = assemble_rows(st.A, pattern)
    report = AdmmReport(st.k, converged, np.asarray(R_hist), np.asarray(S_hist), first_hit,
                        np.asarray(F_hist), F_hist[-1], max_disagreement(st.A), v0, drift)
    return AdmmResult(st.A.copy(), A1, float(np.linalg.norm(A1 - J, 2)), report)
