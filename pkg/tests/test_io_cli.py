import json
import time

import numpy as np
import pytest

from avgcontain.cli import main
from avgcontain.io import (
    RESIDUAL_HEADER,
    TRAJECTORY_HEADER,
    ScenarioError,
    apply_overrides,
    document_hash,
    load_bundled_document,
    load_document,
    load_scenario,
    read_csv,
    read_summary,
    read_weights,
    scenario_from_document,
)

RING = [[i, (i + 1) % 4] for i in range(4)] + [[(i + 1) % 4, i] for i in range(4)]


def small_doc(**kw):
    doc = {"nodes": 6, "edges": RING + [[4, 0], [5, 2]], "leaders": [4, 5],
           "leader_states": [[1.0, 3.0], [-2.0, 6.0]], "optimizer": {"mode": "centralized"},
           "push_sum": {"gamma": 1e-10, "max_iter": 10000}, "seed": 3}
    doc.update(kw)
    return doc


def write_doc(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture(scope="module")
def bundled_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("scenario") / "bundled.json"
    path.write_text(json.dumps(load_bundled_document(), indent=1))
    return path


@pytest.fixture(scope="module")
def pipeline_run(bundled_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("pipeline")
    t0 = time.perf_counter()
    code = main(["pipeline", str(bundled_file), "--out", str(out)])
    return code, out, time.perf_counter() - t0


# --- scenario parsing ----------------------------------------------------------

def test_bundled_scenario_shape(bundled_cfg):
    assert bundled_cfg.graph.n == 24 and len(bundled_cfg.leaders) == 10
    np.testing.assert_array_equal(bundled_cfg.leader_states[:, 0], [5, 3, 2, 2, 3, 5, 7, 8, 8, 7])
    np.testing.assert_array_equal(bundled_cfg.leader_states[:, 1], [1, 2, 4, 5, 7, 8, 7, 5, 4, 2])
    assert bundled_cfg.optimizer == "admm" and bundled_cfg.admm.rho == 5.0 and bundled_cfg.admm.H == 20


def test_syntax_error_reports_line_and_column(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "nodes": 3,\n  "edges": [[0, 1],,]\n}')
    with pytest.raises(ScenarioError, match=r"bad.json:3:\d+"):
        load_document(bad)


@pytest.mark.parametrize("patch, field", [
    ({"nodes": "six"}, "nodes"),
    ({"edges": [[0, 9]]}, "edges[0]"),
    ({"edges": [[0, 1, -2]]}, "edges[0]"),
    ({"leaders": [4, 4]}, "leaders"),
    ({"leaders": [7]}, "leaders"),
    ({"leader_states": [[1.0, 2.0, 3.0]]}, "leader_states"),
    ({"optimizer": {"mode": "admm", "rho": -1}}, "optimizer.rho"),
    ({"push_sum": {"gamma": 0}}, "push_sum.gamma"),
    ({"seed": 1.5}, "seed"),
])
def test_schema_errors_name_the_field(patch, field):
    with pytest.raises(ScenarioError, match=field.replace("[", r"\[").replace("]", r"\]")):
        scenario_from_document(small_doc(**patch))


def test_missing_field_is_named():
    doc = small_doc()
    del doc["leaders"]
    with pytest.raises(ScenarioError, match="leaders"):
        scenario_from_document(doc)


def test_overrides_only_touch_given_fields():
    doc = small_doc()
    assert apply_overrides(doc) == doc
    new = apply_overrides(doc, H=50, gamma=1e-8, method="wba")
    assert new["optimizer"] == {"mode": "wba", "H": 50}
    assert new["push_sum"]["gamma"] == 1e-8
    assert doc["optimizer"] == {"mode": "centralized"}
    with pytest.raises(KeyError):
        apply_overrides(doc, colour="red")


def test_load_scenario_with_overrides():
    cfg = load_scenario(H=5, method="centralized")
    assert cfg.admm.H == 5 and cfg.optimizer == "centralized"


# --- validate ------------------------------------------------------------------

def test_validate_bundled(capsys):
    assert main(["validate"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_validate_isolated_leader(tmp_path, capsys):
    doc = small_doc(nodes=7, leaders=[4, 5, 6], leader_states=[[1.0, 3.0, 0.0], [-2.0, 6.0, 0.0]])
    assert main(["validate", write_doc(tmp_path / "s.json", doc)]) == 1
    out = capsys.readouterr().out
    assert "(b) FAIL" in out and "clause(s) b" in out


def test_validate_malformed_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{nodes: 3")
    assert main(["validate", str(bad)]) == 2
    assert "bad.json:1:" in capsys.readouterr().err


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["validate", "--bogus"])
    assert exc.value.code == 2


# --- optimize ------------------------------------------------------------------

@pytest.mark.parametrize("method", ["admm", "centralized", "wba"])
def test_optimize_complete_follower_graph(tmp_path, method):
    full = [[i, j] for i in range(4) for j in range(4) if i != j]
    path = write_doc(tmp_path / "s.json", small_doc(edges=full + [[4, 0], [5, 2]]))
    out = tmp_path / "out"
    assert main(["optimize", path, "--method", method, "--out", str(out)]) == 0
    s = read_summary(out)
    assert s["spectral_radius"] <= s["objective"] + 1e-12
    if method != "wba":
        assert s["objective"] <= 1e-3
    A1, A2, followers, leaders = read_weights(out / "weights.json")
    assert A1.shape == (4, 4) and A2.shape == (4, 2)
    assert followers == [0, 1, 2, 3] and leaders == [4, 5]
    assert (out / "residuals.csv").exists() == (method == "admm")


def test_optimize_bundled_centralized(tmp_path, bundled_centralized):
    out = tmp_path / "out"
    assert main(["optimize", "--method", "centralized", "--out", str(out)]) == 0
    s = read_summary(out)
    assert s["spectral_radius"] <= s["objective"] < 1
    assert s["objective"] == pytest.approx(bundled_centralized.objective, abs=1e-9)


# --- simulate ------------------------------------------------------------------

def test_simulate_with_weights_file(tmp_path, bundled_file):
    w_dir = tmp_path / "w"
    assert main(["optimize", str(bundled_file), "--method", "centralized", "--out", str(w_dir)]) == 0
    out = tmp_path / "sim"
    assert main(["simulate", str(bundled_file), "--weights", str(w_dir / "weights.json"), "--out", str(out)]) == 0
    s = read_summary(out)
    assert s["converged"] and s["max_error"] <= 1e-6
    assert s["empirical_rate"] == pytest.approx(s["spectral_radius"], rel=0.15)
    header, rows = read_csv(out / "trajectories.csv")
    assert tuple(header) == TRAJECTORY_HEADER
    assert len(rows) == (s["iterations"] + 1) * 24 * 2
    final = {(int(a), int(d)): float(v) for it, a, d, v in rows if int(it) == s["iterations"]}
    for f in s["followers"]:
        assert final[(f, 0)] == pytest.approx(5.0, abs=1e-6)
        assert final[(f, 1)] == pytest.approx(4.5, abs=1e-6)


def test_simulate_rejects_invalid_weights(tmp_path, bundled_file, capsys):
    w_dir = tmp_path / "w"
    main(["optimize", str(bundled_file), "--method", "wba", "--out", str(w_dir)])
    doc = json.loads((w_dir / "weights.json").read_text())
    doc["A1"][0][0] -= 0.3
    (w_dir / "weights.json").write_text(json.dumps(doc))
    out = tmp_path / "sim"
    assert main(["simulate", str(bundled_file), "--weights", str(w_dir / "weights.json"), "--out", str(out)]) == 1
    assert "invalid weights" in capsys.readouterr().err
    assert not (out / "trajectories.csv").exists()


def test_simulate_leaders_at_one_point(tmp_path):
    path = write_doc(tmp_path / "s.json", small_doc(leader_states=[[2.0, 2.0], [-1.0, -1.0]]))
    out = tmp_path / "out"
    assert main(["simulate", path, "--out", str(out)]) == 0
    s = read_summary(out)
    assert s["leaders_average"] == [2.0, -1.0] and s["max_error"] <= 1e-8


# --- pipeline ------------------------------------------------------------------

def test_pipeline_bundled_end_to_end(pipeline_run):
    code, out, elapsed = pipeline_run
    assert code == 0 and elapsed < 60
    s = read_summary(out)
    assert s["optimizer"] == "admm" and s["converged"] and s["optimizer_converged"]
    assert s["leaders_average"] == [5.0, 4.5] and s["max_error"] <= 1e-6
    assert s["spectral_radius"] <= s["objective"] < 1
    header, rows = read_csv(out / "residuals.csv")
    assert tuple(header) == RESIDUAL_HEADER and len(rows) == s["optimizer_iterations"] * 14
    _, traj = read_csv(out / "trajectories.csv")
    assert len(traj) == (s["iterations"] + 1) * 24 * 2


def test_pipeline_summary_hash_matches_input_file(pipeline_run, bundled_file):
    _, out, _ = pipeline_run
    assert read_summary(out)["config_hash"] == document_hash(bundled_file)


def test_pipeline_admm_needs_fewer_rounds_than_wba(pipeline_run, bundled_file, tmp_path):
    _, out, _ = pipeline_run
    assert main(["pipeline", str(bundled_file), "--method", "wba", "--out", str(tmp_path)]) == 0
    wba, admm = read_summary(tmp_path), read_summary(out)
    assert admm["iterations"] < wba["iterations"]
    assert admm["spectral_radius"] < wba["spectral_radius"]


def test_pipeline_deterministic_bundles(tmp_path):
    path = write_doc(tmp_path / "s.json", small_doc(randomize_A2=True))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["pipeline", path, "--seed", "9", "--out", str(a)]) == 0
    assert main(["pipeline", path, "--seed", "9", "--out", str(b)]) == 0
    for name in ("trajectories.csv", "weights.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    sa, sb = read_summary(a), read_summary(b)
    sa.pop("wall_time"), sb.pop("wall_time")
    assert sa == sb


def test_pipeline_emit_plots(tmp_path):
    path = write_doc(tmp_path / "s.json", small_doc(optimizer={"mode": "admm"}))
    out = tmp_path / "out"
    assert main(["pipeline", path, "--emit-plots", "--out", str(out)]) == 0
    header, _ = read_csv(out / "plot_states.csv")
    assert header == ["iteration", "agent", "role", "dimension", "value"]
    header, rows = read_csv(out / "plot_objective_gap.csv")
    assert header == ["outer_iter", "agent", "objective", "gap"]
    assert min(float(r[3]) for r in rows if int(r[0]) == max(int(x[0]) for x in rows)) >= -1e-6
    header, rows = read_csv(out / "plot_residuals_by_H.csv")
    assert header == ["H", "outer_iter", "log10_max_residual"]
    assert {int(r[0]) for r in rows} == {5, 20, 50}


def test_global_flags_before_subcommand(tmp_path):
    path = write_doc(tmp_path / "s.json", small_doc())
    out = tmp_path / "out"
    assert main(["--out", str(out), "--gamma", "1e-8", "simulate", path]) == 0
    assert read_summary(out)["converged"]
