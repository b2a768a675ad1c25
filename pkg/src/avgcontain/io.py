"""Scenario files (JSON in) and output bundles (CSV + JSON out).

Scenario keys::

    nodes            int
    edges            [[src, dst], ...] or [[src, dst, weight], ...]
    leaders          [int, ...]
    leader_states    one list per state dimension, each with one value per leader
    follower_states  optional, same layout over ascending follower ids
    mode             "pipeline" (default) | "push_sum" | "laplacian"
    optimizer        {mode, rho, H, epsilon, max_outer, subgradient: {iters, tol},
                      v_init, eps_dual, eta0, max_iter, plateau, A1}
    A2               optional follower x leader block, block order
    randomize_A2     bool, seeded random column split instead of uniform
    push_sum         {gamma, max_iter, readout}
    laplacian        {alpha}
    seed             int
    out_dir          str
"""

import copy
import csv
import json
from importlib import resources
from pathlib import Path

import numpy as np

from .admm import AdmmConfig
from .graph import DiGraph
from .harness import RunReport, ScenarioConfig, config_hash

TRAJECTORY_HEADER = ("iteration", "agent", "dimension", "value")
RESIDUAL_HEADER = ("outer_iter", "agent", "R_i")
BUNDLED = "bundled_24.json"


class ScenarioError(ValueError):
    """The scenario document is malformed; the message names the offending field."""


def bundled_scenario_path():
    return resources.files("avgcontain") / "data" / BUNDLED


def load_document(path):
    """Parse a scenario file, reporting JSON syntax errors with line and column."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: top level must be an object")
    return doc


def load_bundled_document():
    return json.loads(bundled_scenario_path().read_text())


def apply_overrides(doc, **overrides):
    """Copy of ``doc`` with CLI-style overrides (``None`` values are skipped)."""
    doc = copy.deepcopy(doc)
    mapping = {"method": ("optimizer", "mode"), "H": ("optimizer", "H"), "rho": ("optimizer", "rho"),
               "epsilon": ("optimizer", "epsilon"), "gamma": ("push_sum", "gamma"),
               "seed": (None, "seed"), "out_dir": (None, "out_dir")}
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in mapping:
            raise KeyError(f"unknown override {key!r}")
        section, field = mapping[key]
        target = doc if section is None else doc.setdefault(section, {})
        target[field] = value
    return doc


def _require(doc, key, kind, where="scenario"):
    if key not in doc:
        raise ScenarioError(f"{where}: missing required field '{key}'")
    value = doc[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ScenarioError(f"{where}.{key}: expected an integer, got {value!r}")
    if kind is list and not isinstance(value, list):
        raise ScenarioError(f"{where}.{key}: expected a list")
    return value


def _number(section, key, default, where, positive=True):
    value = section.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where}.{key}: expected a number, got {value!r}")
    if positive and not value > 0:
        raise ScenarioError(f"{where}.{key}: must be > 0, got {value}")
    return value


def _matrix(value, shape, where):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: not a numeric matrix") from exc
    if arr.shape != shape:
        raise ScenarioError(f"{where}: expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{where}: contains NaN or Inf")
    return arr


def parse_graph(doc):
    n = _require(doc, "nodes", int)
    if n < 1:
        raise ScenarioError("scenario.nodes: must be >= 1")
    edges, weights = [], {}
    for k, e in enumerate(_require(doc, "edges", list)):
        where = f"scenario.edges[{k}]"
        if not isinstance(e, list) or len(e) not in (2, 3):
            raise ScenarioError(f"{where}: expected [src, dst] or [src, dst, weight]")
        src, dst = e[0], e[1]
        for v in (src, dst):
            if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v < n:
                raise ScenarioError(f"{where}: agent index {v!r} out of range 0..{n - 1}")
        edges.append((src, dst))
        if len(e) == 3:
            w = e[2]
            if isinstance(w, bool) or not isinstance(w, (int, float)) or w < 0:
                raise ScenarioError(f"{where}: weight must be a nonnegative number")
            weights[(src, dst)] = float(w)
    try:
        return DiGraph(n, tuple(edges), weights)
    except ValueError as exc:
        raise ScenarioError(f"scenario.edges: {exc}") from exc


def scenario_from_document(doc) -> ScenarioConfig:
    """Build a :class:`ScenarioConfig`; every schema problem raises :class:`ScenarioError`."""
    g = parse_graph(doc)
    n = g.n
    leaders = _require(doc, "leaders", list)
    for v in leaders:
        if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v < n:
            raise ScenarioError(f"scenario.leaders: index {v!r} out of range 0..{n - 1}")
    if len(set(leaders)) != len(leaders):
        raise ScenarioError("scenario.leaders: duplicate index")
    m, q = len(leaders), n - len(leaders)
    states = _require(doc, "leader_states", list)
    if not states:
        raise ScenarioError("scenario.leader_states: need at least one dimension")
    xL = _matrix(states, (len(states), m), "scenario.leader_states").T
    xF = None
    if doc.get("follower_states") is not None:
        xF = _matrix(doc["follower_states"], (len(states), q), "scenario.follower_states").T

    opt = doc.get("optimizer", {}) or {}
    if not isinstance(opt, dict):
        raise ScenarioError("scenario.optimizer: expected an object")
    sub = opt.get("subgradient", {}) or {}
    method = opt.get("mode", "admm")
    try:
        admm_kw = dict(rho=float(_number(opt, "rho", 5.0, "scenario.optimizer")),
                       epsilon=float(_number(opt, "epsilon", 1e-3, "scenario.optimizer")),
                       H=_require({"H": opt.get("H", 20)}, "H", int, "scenario.optimizer"),
                       max_outer=_require({"max_outer": opt.get("max_outer", 3000)}, "max_outer", int,
                                          "scenario.optimizer"),
                       subgradient_iters=_require({"iters": sub.get("iters", 20)}, "iters", int,
                                                  "scenario.optimizer.subgradient"),
                       subgradient_tol=float(_number(sub, "tol", 1e-9, "scenario.optimizer.subgradient")))
        if "v_init" in opt:
            admm_kw["v_init"] = opt["v_init"]
        if "eps_dual" in opt:
            admm_kw["eps_dual"] = _number(opt, "eps_dual", None, "scenario.optimizer", positive=False)
        admm = AdmmConfig(**admm_kw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"scenario.optimizer: {exc}") from exc
    centralized = {}
    for key in ("eta0", "max_iter", "plateau"):
        if key in opt:
            centralized[key] = opt[key]
    fixed = None
    if opt.get("A1") is not None:
        fixed = _matrix(opt["A1"], (q, q), "scenario.optimizer.A1")
    A2 = None
    if doc.get("A2") is not None:
        A2 = _matrix(doc["A2"], (q, m), "scenario.A2")

    ps = doc.get("push_sum", {}) or {}
    lap = doc.get("laplacian", {}) or {}
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ScenarioError("scenario.seed: expected an integer")
    try:
        return ScenarioConfig(
            graph=g, leaders=tuple(leaders), leader_states=xL, follower_states=xF,
            mode=doc.get("mode", "pipeline"), optimizer=method, admm=admm, centralized=centralized,
            fixed_A1=fixed, A2=A2, randomize_A2=bool(doc.get("randomize_A2", False)),
            gamma=float(_number(ps, "gamma", 1e-10, "scenario.push_sum")),
            max_iter=_require({"max_iter": ps.get("max_iter", 10_000)}, "max_iter", int, "scenario.push_sum"),
            readout=ps.get("readout", "increment"),
            alpha=_number(lap, "alpha", None, "scenario.laplacian"),
            seed=seed, document=doc)
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"scenario: {exc}") from exc


def load_scenario(path=None, **overrides):
    """Read a scenario file (``None``: the bundled 24-agent one) into a config."""
    doc = load_bundled_document() if path is None else load_document(path)
    return scenario_from_document(apply_overrides(doc, **overrides))


# ------------------------------------------------------------------ bundles

def _dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_weights(out_dir, A1, A2, followers, leaders):
    _dump_json(Path(out_dir) / "weights.json",
               {"A1": np.asarray(A1).tolist(), "A2": np.asarray(A2).tolist(),
                "followers": list(followers), "leaders": list(leaders)})


def read_weights(path):
    """Return ``(A1, A2, followers, leaders)`` from a ``weights.json``."""
    try:
        doc = json.loads(Path(path).read_text())
        A1 = np.asarray(doc["A1"], dtype=float)
        A2 = np.asarray(doc["A2"], dtype=float)
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise ScenarioError(f"{path}: not a weights file ({exc})") from exc
    return A1, A2, doc.get("followers"), doc.get("leaders")


def write_trajectories(path, states):
    """Long format: one row per (iteration, agent, dimension)."""
    K, n, dims = states.shape
    it, ag, dm = np.meshgrid(np.arange(K), np.arange(n), np.arange(dims), indexing="ij")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        w.writerows(zip(it.ravel().tolist(), ag.ravel().tolist(), dm.ravel().tolist(),
                        [repr(v) for v in states.ravel().tolist()]))


def write_residuals(path, history, agent_ids=None):
    history = np.asarray(history)
    agent_ids = list(range(history.shape[1])) if agent_ids is None else list(agent_ids)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESIDUAL_HEADER)
        for k, row in enumerate(history, start=1):
            w.writerows((k, a, repr(float(r))) for a, r in zip(agent_ids, row))


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_summary(out_dir, summary):
    _dump_json(Path(out_dir) / "summary.json", summary)


def read_summary(path):
    path = Path(path)
    if path.is_dir():
        path = path / "summary.json"
    return json.loads(path.read_text())


def write_run_bundle(out_dir, report: RunReport, emit_plots=False):
    """Write trajectories, weights, summary and (when ADMM ran) residuals."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = report.partition
    write_trajectories(out / "trajectories.csv", report.trajectory)
    write_weights(out, report.A1, report.A2, p.followers, p.leaders)
    if report.design is not None and report.design.admm_report is not None:
        write_residuals(out / "residuals.csv", report.design.admm_report.residual_history, p.followers)
    write_summary(out, report.summary())
    if emit_plots:
        write_state_plot(out / "plot_states.csv", report)
        if report.design is not None and report.design.admm_report is not None:
            write_objective_plot(out / "plot_objective_gap.csv", report.design.admm_report, p.followers)
    return out


def write_state_plot(path, report: RunReport):
    leaders = set(report.partition.leaders)
    K, n, dims = report.trajectory.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("iteration", "agent", "role", "dimension", "value"))
        for k in range(K):
            for a in range(n):
                role = "leader" if a in leaders else "follower"
                w.writerows((k, a, role, d, repr(float(report.trajectory[k, a, d]))) for d in range(dims))


def write_objective_plot(path, admm_report, agent_ids, reference=None):
    """Per-agent copy objective per outer iteration, and its gap to ``reference``."""
    hist = admm_report.objective_history
    ref = hist[-1].min() if reference is None else reference
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("outer_iter", "agent", "objective", "gap"))
        for k, row in enumerate(hist, start=1):
            w.writerows((k, a, repr(float(v)), repr(float(v - ref))) for a, v in zip(agent_ids, row))


def write_residual_sweep(path, sweeps):
    """``sweeps``: mapping ``H -> max residual per outer iteration``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("H", "outer_iter", "log10_max_residual"))
        for H, series in sweeps.items():
            w.writerows((H, k, repr(float(np.log10(max(r, 1e-300))))) for k, r in enumerate(series, start=1))


def document_hash(path):
    """Hash of a scenario file as stored in summaries."""
    return config_hash(load_document(path))
