"""Round-synchronous message passing with locality enforcement, and scenario pipelines.

Every round each agent broadcasts an immutable payload; agent ``i`` then sees
only the payloads of its in-neighbors through an :class:`Inbox`.  Asking an
inbox for anyone else raises :class:`LocalityError`.
"""

import hashlib
import json
import time
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .admm import AdmmConfig, AdmmReport, run_admm
from .containment import (
    WeightMatrix,
    convergence_rate,
    empirical_rate,
    laplacian_protocol_matrices,
    leaders_average,
    max_stepsize,
    run_laplacian_containment,
    run_push_sum,
    uniform_leader_weights,
)
from .exceptions import LocalityError, MissingMessageError
from .graph import DiGraph, Partition, follower_subgraph, laplacian_blocks, partition_agents, validate_assumptions
from .matrixops import agreement_matrix, spectral_norm, spectral_radius
from .weights import SparsityPattern, solve_centralized, wba_weights


def _freeze(payload):
    if isinstance(payload, np.ndarray):
        arr = payload.copy()
        arr.setflags(write=False)
        return arr
    if isinstance(payload, tuple):
        return tuple(_freeze(p) for p in payload)
    if isinstance(payload, (int, float, np.number, str, bytes, type(None))):
        return payload
    raise TypeError(f"payloads must be arrays, scalars or tuples of them, got {type(payload).__name__}")


class Inbox(Mapping):
    """Read-only view of one agent's incoming messages for the current round."""

    def __init__(self, agent, senders, outbox, counter):
        self.agent = agent
        self._senders = tuple(senders)
        self._allowed = frozenset(senders)
        self._outbox = outbox
        self._counter = counter

    def __getitem__(self, sender):
        if sender not in self._allowed:
            raise LocalityError(f"agent {self.agent} tried to read agent {sender}, which is not an in-neighbor")
        if sender not in self._outbox:
            raise MissingMessageError(f"in-neighbor {sender} sent nothing to agent {self.agent}")
        self._counter["reads"] += 1
        return self._outbox[sender]

    def __iter__(self):
        return iter(self._senders)

    def __len__(self):
        return len(self._senders)


@dataclass
class RoundMailbox:
    """Payloads broadcast in the previous round plus traffic counters."""

    graph: DiGraph
    outbox: dict = field(default_factory=dict)
    round: int = 0
    delivered: list = field(default_factory=list)  # messages delivered per round
    reads: int = 0

    def post(self, payloads):
        self.outbox = {i: _freeze(p) for i, p in payloads.items()}

    def inbox(self, i, counter):
        return Inbox(i, self.graph.in_neighbors(i), self.outbox, counter)


def synchronous_step(states, mailbox: RoundMailbox, update_fn, payload_fn=None):
    """Advance every agent one round.

    ``payload_fn(i, state)`` gives what agent ``i`` broadcasts (default: the
    state itself).  ``update_fn(i, state, inbox)`` returns the new state and
    must be pure.  All agents read the same previous-round payloads.
    """
    payload_fn = payload_fn or (lambda i, s: s)
    n = mailbox.graph.n
    if len(states) != n:
        raise ValueError(f"expected {n} agent states, got {len(states)}")
    mailbox.post({i: payload_fn(i, states[i]) for i in range(n)})
    counter = {"reads": 0}
    new_states = [update_fn(i, states[i], mailbox.inbox(i, counter)) for i in range(n)]
    mailbox.round += 1
    mailbox.delivered.append(int(sum(len(mailbox.graph.in_neighbors(i)) for i in range(n))))
    mailbox.reads += counter["reads"]
    return new_states, mailbox


def global_weight_matrix(W: WeightMatrix, p: Partition):
    """Reorder the block matrix ``[[A1, A2], [0, I]]`` into global agent ids."""
    order = np.asarray(p.order)
    A = np.zeros((p.n, p.n))
    A[np.ix_(order, order)] = W.full
    return A


def harness_push_sum(g: DiGraph, A, x0, rounds, followers=None):
    """Push-sum driven through the mailbox; returns ``(s, w, mailbox)`` per global agent.

    ``A`` is the ``n x n`` weight matrix in global ids; rows of agents not in
    ``followers`` (default: agents with in-neighbors) are held fixed.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        x0 = x0[:, None]
    if followers is None:
        followers = set(partition_agents(g).followers)
    states = [(x0[i].copy(), 1.0) for i in range(g.n)]
    box = RoundMailbox(g)

    def update(i, state, inbox):
        if i not in followers:
            return state
        s = A[i, i] * state[0]
        w = A[i, i] * state[1]
        for j in inbox:
            sj, wj = inbox[j]
            s = s + A[i, j] * sj
            w = w + A[i, j] * wj
        return (s, w)

    for _ in range(rounds):
        states, box = synchronous_step(states, box, update, lambda i, st: (np.asarray(st[0]), float(st[1])))
    s = np.stack([st[0] for st in states])
    w = np.array([st[1] for st in states])
    return s, w, box


def harness_inner_round(gF: DiGraph, M, v):
    """One dynamic-consensus round of ``(M_i, v_i)`` through the mailbox."""
    d = gF.out_degrees
    box = RoundMailbox(gF)

    def update(i, state, inbox):
        Mi, vi = state
        new_M = (1 - d[i] * vi) * Mi
        total = 0.0
        for j in inbox:
            Mj, vj = inbox[j]
            new_M = new_M + vj * Mj
            total += vj
        return (new_M, 0.5 * (vi + total / d[i]))

    states = [(M[i], float(v[i])) for i in range(gF.n)]
    states, box = synchronous_step(states, box, update)
    return np.stack([s[0] for s in states]), np.array([s[1] for s in states]), box


# ---------------------------------------------------------------- pipelines

MODES = ("push_sum", "laplacian", "pipeline")
OPTIMIZERS = ("admm", "centralized", "wba", "fixed")


class PipelineError(RuntimeError):
    """A pipeline stage failed; ``stage`` names which one."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def config_hash(document):
    """SHA-256 of the canonical JSON form of a scenario document."""
    text = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class ScenarioConfig:
    """Everything needed to run one experiment.

    ``mode`` ``"push_sum"`` and ``"pipeline"`` both design ``A1`` with
    ``optimizer`` and then run push-sum; ``"laplacian"`` runs the baseline with
    the graph's edge weights and step ``alpha`` (default half the stable bound).

    States are stored in global agent ids: ``leader_states`` is ``(m, dims)``
    ordered like ``leaders``, ``follower_states`` ``(q, dims)`` ordered like the
    ascending follower ids (``None`` draws them from the seed).
    """

    graph: DiGraph
    leaders: tuple
    leader_states: np.ndarray
    follower_states: np.ndarray | None = None
    mode: str = "pipeline"
    optimizer: str = "admm"
    admm: AdmmConfig = field(default_factory=AdmmConfig)
    centralized: dict = field(default_factory=dict)
    fixed_A1: np.ndarray | None = None
    A2: np.ndarray | None = None
    randomize_A2: bool = False
    gamma: float = 1e-10
    max_iter: int = 10_000
    readout: str = "increment"
    alpha: float | None = None
    seed: int = 0
    document: dict | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.optimizer == "fixed" and self.fixed_A1 is None:
            raise ValueError("optimizer 'fixed' needs an A1 matrix")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        self.leaders = tuple(int(i) for i in self.leaders)
        self.leader_states = np.asarray(self.leader_states, dtype=float)
        if self.leader_states.ndim == 1:
            self.leader_states = self.leader_states[:, None]
        if self.leader_states.shape[0] != len(self.leaders):
            raise ValueError("need one leader state row per leader")

    @property
    def hash(self):
        return config_hash(self.document) if self.document is not None else None


@dataclass
class DesignOutcome:
    """Weights produced by one optimizer run."""

    A1: np.ndarray
    method: str
    converged: bool = True
    iterations: int = 0
    notes: list = field(default_factory=list)
    admm_report: AdmmReport | None = None

    @property
    def objective(self):
        return spectral_norm(self.A1 - agreement_matrix(self.A1.shape[0])).value

    @property
    def spectral_radius(self):
        return convergence_rate(self.A1)


@dataclass
class RunReport:
    converged: bool
    iterations: int
    final_states: np.ndarray  # (n, dims), global ids
    leaders_average: np.ndarray
    max_error: float
    objective: float
    spectral_radius: float
    empirical_rate: float | None
    A1: np.ndarray
    A2: np.ndarray
    partition: Partition
    trajectory: np.ndarray  # (iterations + 1, n, dims), global ids
    mode: str
    design: DesignOutcome | None
    config_hash: str | None
    wall_time: float
    notes: list = field(default_factory=list)

    @property
    def optimizer(self):
        return self.design.method if self.design is not None else "laplacian"

    def summary(self):
        """JSON-serialisable digest, without bulk arrays."""
        out = {
            "mode": self.mode,
            "optimizer": self.optimizer,
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "objective": float(self.objective),
            "spectral_radius": float(self.spectral_radius),
            "empirical_rate": None if self.empirical_rate is None else float(self.empirical_rate),
            "leaders_average": [float(v) for v in self.leaders_average],
            "max_error": float(self.max_error),
            "followers": list(self.partition.followers),
            "leaders": list(self.partition.leaders),
            "config_hash": self.config_hash,
            "wall_time": float(self.wall_time),
            "notes": list(self.notes),
        }
        if self.design is not None:
            out["optimizer_converged"] = bool(self.design.converged)
            out["optimizer_iterations"] = int(self.design.iterations)
        return out


def scenario_partition(cfg: ScenarioConfig) -> Partition:
    """Partition by the listed leaders; everyone else is a follower."""
    leaders = tuple(sorted(set(cfg.leaders)))
    followers = tuple(i for i in range(cfg.graph.n) if i not in set(leaders))
    return Partition(leaders, followers)


def leader_edge_pattern(g: DiGraph, p: Partition):
    """``(q, m)`` mask of leader-to-follower edges in block order."""
    bf = {f: k for k, f in enumerate(p.followers)}
    bl = {lead: k for k, lead in enumerate(p.leaders)}
    mask = np.zeros((p.q, p.m), dtype=bool)
    for src, dst in g.edges:
        if src in bl and dst in bf:
            mask[bf[dst], bl[src]] = True
    return mask


def design_weights(cfg: ScenarioConfig, gF: DiGraph, method=None) -> DesignOutcome:
    """Run one optimizer on the follower graph."""
    method = method or cfg.optimizer
    pattern = SparsityPattern.from_graph(gF)
    if method == "admm":
        res = run_admm(gF, pattern, cfg.admm)
        rep = res.report
        notes = [] if rep.converged else [f"ADMM stopped at max_outer={cfg.admm.max_outer}"]
        return DesignOutcome(res.A1, method, rep.converged, rep.outer_iterations, notes, rep)
    if method == "centralized":
        res = solve_centralized(pattern, **cfg.centralized)
        notes = [] if res.plateaued else ["centralized solver used its whole budget before plateauing"]
        return DesignOutcome(res.A1, method, True, res.iterations, notes)
    if method == "wba":
        return DesignOutcome(wba_weights(gF, v0=cfg.admm.v_init), method)
    if method == "fixed":
        A1 = np.asarray(cfg.fixed_A1, dtype=float)
        if A1.shape != (gF.n, gF.n):
            raise ValueError(f"fixed A1 must be {gF.n}x{gF.n}, got {A1.shape}")
        return DesignOutcome(A1, method)
    raise ValueError(f"unknown optimizer {method!r}")


def _initial_states(cfg, p, rng):
    order = {lead: k for k, lead in enumerate(cfg.leaders)}
    xL = cfg.leader_states[[order[i] for i in p.leaders]]
    dims = xL.shape[1]
    if cfg.follower_states is None:
        lo, hi = xL.min(axis=0), xL.max(axis=0)
        xF = lo + (hi - lo) * rng.random((p.q, dims))
    else:
        xF = np.asarray(cfg.follower_states, dtype=float).reshape(p.q, dims)
    return xF, xL


def prepare(cfg: ScenarioConfig):
    """Validation stage: returns ``(partition, follower graph)``."""
    p = scenario_partition(cfg)
    report = validate_assumptions(cfg.graph, p)
    if not report.passed:
        raise PipelineError("validate", "; ".join(msg for ok, msg in report.clauses.values() if not ok))
    return p, follower_subgraph(cfg.graph, p)


def run_pipeline(cfg: ScenarioConfig, design: DesignOutcome | None = None, record=True) -> RunReport:
    """Validate, design weights, simulate; failures raise :class:`PipelineError`.

    A precomputed ``design`` skips the optimize stage.
    """
    t0 = time.perf_counter()
    g = cfg.graph
    p, gF = prepare(cfg)
    rng = np.random.default_rng(cfg.seed)
    xF, xL = _initial_states(cfg, p, rng)
    notes = []

    if cfg.mode == "laplacian":
        L = laplacian_blocks(g, p)
        try:
            alpha = cfg.alpha if cfg.alpha is not None else 0.5 * max_stepsize(L.L1)
            traj, conv = run_laplacian_containment(L, alpha, xF, xL, cfg.gamma, cfg.max_iter, record=record)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise PipelineError("simulate", str(exc)) from exc
        W = laplacian_protocol_matrices(L, alpha)
        notes += conv.notes
        design = None
    else:
        if design is None:
            try:
                design = design_weights(cfg, gF)
            except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
                raise PipelineError("optimize", str(exc)) from exc
        notes += design.notes
        leader_pattern = leader_edge_pattern(g, p)
        if cfg.A2 is not None:
            A2 = np.asarray(cfg.A2, dtype=float)
        else:
            A2 = uniform_leader_weights(leader_pattern, rng if cfg.randomize_A2 else None)
        try:
            W = WeightMatrix(design.A1, A2)
            x0 = np.vstack([xF, xL])
            traj, conv = run_push_sum(W, x0, cfg.gamma, cfg.max_iter, cfg.readout,
                                      pattern=gF.adjacency, leader_pattern=leader_pattern, record=record)
        except (ValueError, RuntimeError) as exc:
            raise PipelineError("simulate", str(exc)) from exc

    J = agreement_matrix(p.q)
    try:
        emp = empirical_rate(traj)
    except ValueError:
        emp = None
    perm = np.argsort(np.asarray(p.order))
    return RunReport(
        converged=conv.converged,
        iterations=conv.iterations,
        final_states=conv.x_final[perm],
        leaders_average=leaders_average(xL),
        max_error=conv.max_error,
        objective=spectral_norm(W.A1 - J).value,
        spectral_radius=spectral_radius(W.A1 - J).value,
        empirical_rate=emp,
        A1=W.A1,
        A2=W.A2,
        partition=p,
        trajectory=traj.states[:, perm, :],
        mode=cfg.mode,
        design=design,
        config_hash=cfg.hash,
        wall_time=time.perf_counter() - t0,
        notes=notes,
    )
