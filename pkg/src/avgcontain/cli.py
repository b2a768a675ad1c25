"""Command-line entry point: ``avgcontain {validate,optimize,simulate,pipeline} [scenario]``.

Without a scenario path the bundled 24-agent scenario is used.  Exit codes:
0 success, 1 domain failure (validation or convergence), 2 usage or parse error.
"""

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .admm import run_admm
from .containment import WeightMatrix, leaders_average, uniform_leader_weights
from .graph import validate_assumptions
from .harness import (
    DesignOutcome,
    PipelineError,
    design_weights,
    leader_edge_pattern,
    prepare,
    run_pipeline,
    scenario_partition,
)
from .io import (
    ScenarioError,
    apply_overrides,
    load_bundled_document,
    load_document,
    read_weights,
    scenario_from_document,
    write_objective_plot,
    write_residual_sweep,
    write_residuals,
    write_run_bundle,
    write_summary,
    write_weights,
)
from .weights import SparsityPattern, solve_centralized

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SWEEP_H = (5, 20, 50)


def _common_flags():
    common = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    common.add_argument("--seed", type=int, default=S, help="random seed (initial states, random A2)")
    common.add_argument("--out", default=S, help="output directory")
    common.add_argument("--method", choices=("admm", "centralized", "wba"), default=S,
                        help="weight design method")
    common.add_argument("--H", type=int, default=S, help="inner consensus rounds per ADMM iteration")
    common.add_argument("--rho", type=float, default=S, help="ADMM penalty")
    common.add_argument("--epsilon", type=float, default=S, help="ADMM residual tolerance")
    common.add_argument("--gamma", type=float, default=S, help="push-sum stopping tolerance")
    common.add_argument("--emit-plots", action="store_true", default=S,
                        help="also write long-format CSVs for plotting")
    return common


def build_parser():
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="avgcontain", parents=[common],
                                     description="Average-consensus containment: validate, design weights, simulate.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"validate": "check the structural assumptions",
             "optimize": "design A1 and write weights + summary",
             "simulate": "run push-sum and write trajectories + summary",
             "pipeline": "optimize then simulate"}
    for name, text in helps.items():
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("scenario", nargs="?", default=None, help="scenario JSON (default: bundled scenario)")
        if name == "simulate":
            sp.add_argument("--weights", default="auto", help="weights.json to use, or 'auto' to design them")
    return parser


def _flag(args, name):
    return getattr(args, name, None)


def _load(args):
    doc = load_bundled_document() if args.scenario is None else load_document(args.scenario)
    doc = apply_overrides(doc, method=_flag(args, "method"), H=_flag(args, "H"), rho=_flag(args, "rho"),
                          epsilon=_flag(args, "epsilon"), gamma=_flag(args, "gamma"), seed=_flag(args, "seed"))
    cfg = scenario_from_document(doc)
    out = _flag(args, "out") or doc.get("out_dir") or "avgcontain_out"
    return cfg, Path(out)


def _err(msg):
    print(msg, file=sys.stderr)


def cmd_validate(args):
    cfg, _ = _load(args)
    report = validate_assumptions(cfg.graph, scenario_partition(cfg))
    print(report)
    print("PASS" if report.passed else f"FAIL: clause(s) {', '.join(report.failures)}")
    return EXIT_OK if report.passed else EXIT_FAIL


def _weights_summary(cfg, design: DesignOutcome, p):
    order = {lead: k for k, lead in enumerate(cfg.leaders)}
    xL = cfg.leader_states[[order[i] for i in p.leaders]]
    out = {
        "method": design.method,
        "objective": float(design.objective),
        "spectral_radius": float(design.spectral_radius),
        "iterations": int(design.iterations),
        "converged": bool(design.converged),
        "leaders_average": [float(v) for v in leaders_average(xL)],
        "min_entry": float(design.A1.min()),
        "config_hash": cfg.hash,
        "followers": list(p.followers),
        "leaders": list(p.leaders),
        "notes": list(design.notes),
    }
    if design.admm_report is not None:
        rep = design.admm_report
        out["agent_objectives"] = [float(v) for v in rep.agent_objectives]
        out["disagreement"] = float(rep.disagreement)
        out["first_primal_hit"] = rep.first_primal_hit
    return out


def _emit_design_plots(out, cfg, gF, design, p):
    rep = design.admm_report
    if rep is None:
        return
    ref = solve_centralized(SparsityPattern.from_graph(gF)).objective
    write_objective_plot(out / "plot_objective_gap.csv", rep, p.followers, reference=ref)
    sweeps = {}
    for H in SWEEP_H:
        if H == cfg.admm.H:
            sweeps[H] = rep.max_residuals
        else:
            cfg_H = dataclasses.replace(cfg.admm, H=H)
            sweeps[H] = run_admm(gF, config=cfg_H).report.max_residuals
    write_residual_sweep(out / "plot_residuals_by_H.csv", sweeps)


def cmd_optimize(args):
    cfg, out = _load(args)
    try:
        p, gF = prepare(cfg)
    except PipelineError as exc:
        _err(str(exc))
        return EXIT_FAIL
    design = design_weights(cfg, gF)
    out.mkdir(parents=True, exist_ok=True)
    A2 = cfg.A2 if cfg.A2 is not None else uniform_leader_weights(leader_edge_pattern(cfg.graph, p))
    write_weights(out, design.A1, A2, p.followers, p.leaders)
    if design.admm_report is not None:
        write_residuals(out / "residuals.csv", design.admm_report.residual_history, p.followers)
    summary = _weights_summary(cfg, design, p)
    write_summary(out, summary)
    if _flag(args, "emit_plots"):
        _emit_design_plots(out, cfg, gF, design, p)
    print(f"{design.method}: ||A1 - J||_2 = {summary['objective']:.6f}, "
          f"rho(A1 - J) = {summary['spectral_radius']:.6f}, converged = {design.converged}")
    print(f"wrote {out}")
    return EXIT_OK if design.converged else EXIT_FAIL


def _report_run(report, out, emit_plots):
    write_run_bundle(out, report, emit_plots=emit_plots)
    s = report.summary()
    avg = ", ".join(f"{v:g}" for v in s["leaders_average"])
    print(f"{s['optimizer']}: converged = {s['converged']} after {s['iterations']} rounds; "
          f"leaders' average = ({avg}); max follower error = {s['max_error']:.3e}")
    if s["empirical_rate"] is not None:
        print(f"empirical rate = {s['empirical_rate']:.6f}, rho(A1 - J) = {s['spectral_radius']:.6f}")
    for note in s["notes"]:
        print(f"note: {note}")
    print(f"wrote {out}")
    return EXIT_OK if s["converged"] and s.get("optimizer_converged", True) else EXIT_FAIL


def cmd_simulate(args):
    cfg, out = _load(args)
    design = None
    if args.weights != "auto":
        A1, A2, followers, leaders = read_weights(args.weights)
        p = scenario_partition(cfg)
        if followers is not None and list(followers) != list(p.followers):
            _err(f"{args.weights}: follower ids {followers} do not match the scenario's {list(p.followers)}")
            return EXIT_FAIL
        try:
            W = WeightMatrix(A1, A2)
        except ValueError as exc:
            _err(f"{args.weights}: {exc}")
            return EXIT_FAIL
        adj = cfg.graph.adjacency[np.ix_(p.followers, p.followers)]
        problems = W.problems(adj, leader_edge_pattern(cfg.graph, p))
        if problems:
            for msg in problems:
                _err(f"invalid weights: {msg}")
            return EXIT_FAIL
        cfg.A2 = A2
        design = DesignOutcome(A1, "fixed")
    try:
        report = run_pipeline(cfg, design=design)
    except PipelineError as exc:
        _err(str(exc))
        return EXIT_FAIL
    return _report_run(report, out, bool(_flag(args, "emit_plots")))


def cmd_pipeline(args):
    cfg, out = _load(args)
    try:
        report = run_pipeline(cfg)
    except PipelineError as exc:
        _err(str(exc))
        return EXIT_FAIL
    code = _report_run(report, out, bool(_flag(args, "emit_plots")))
    if _flag(args, "emit_plots") and report.design is not None:
        p, gF = prepare(cfg)
        _emit_design_plots(out, cfg, gF, report.design, p)
    return code


COMMANDS = {"validate": cmd_validate, "optimize": cmd_optimize, "simulate": cmd_simulate, "pipeline": cmd_pipeline}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ScenarioError as exc:
        _err(f"error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
