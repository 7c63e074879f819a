import json
import xml.dom.minidom

import numpy as np

from gridnorm import build_laplacian, h2_norm, is_connected
from gridnorm.cases import case_names, case_network_json, get_case
from gridnorm.cli import main


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# --------------------------------------------------------------------------
# case bank
# --------------------------------------------------------------------------


def test_all_cases_analyze_cleanly(capsys):
    for name in case_names():
        entry = get_case(name)
        assert is_connected(entry.network)
        code, out, _ = _run(capsys, "analyze", f"case:{name}", "--json")
        assert code == 0
        payload = json.loads(out)
        assert payload["h2_squared"] >= 0


def test_kundur_case_structure():
    entry = get_case("kundur-like")
    net = entry.network
    assert net.n == 4
    assert [nd.kind for nd in net.nodes] == ["machine", "converter", "machine", "converter"]
    assert [nd.id for nd in net.nodes] == ["G1", "C2", "G3", "C4"]
    assert net.gamma == 0.05
    lap = build_laplacian(net).laplacian
    p_star = lap @ net.angles_star
    np.testing.assert_allclose(p_star[[0, 2]], [-0.7778, -0.798889], atol=1e-9)
    p_bar = -(p_star[0] + p_star[2])
    assert abs(p_bar - 1.576689) <= 1e-9
    # common power-sharing ratio across the two machines, damping total 40
    ratios = np.abs(p_star[[0, 2]]) / net.dampings[[0, 2]]
    assert abs(ratios[0] - ratios[1]) <= 1e-12
    assert abs(p_bar / ratios[0] - 40.0) <= 1e-9
    assert "SURROGATE" in entry.provenance


def test_kundur_initial_condition_blocks():
    ic = get_case("kundur-like").initial_condition
    np.testing.assert_allclose(ic.mean[[1, 3]], [93.077, 69.3918])
    np.testing.assert_allclose(ic.mean[[5, 7]], [56.5361, 45.6552])
    np.testing.assert_allclose(ic.mean[[0, 2, 4, 6]], 0.0)
    diag = np.diag(ic.cov_factor)
    np.testing.assert_allclose(diag[[1, 3]], np.sqrt(0.07))
    np.testing.assert_allclose(diag[[5, 7]], np.sqrt(0.01))
    np.testing.assert_allclose(diag[[0, 2, 4, 6]], 0.0)


def test_case_bank_bound_flags_reported_on_kundur(capsys):
    """The closed-form bracket is an unproven claim; the shipped two-area case
    is a counterexample (inertia spread ~5x puts the true norm below the
    homogeneous-at-maxima value), and the report must say so rather than
    assert it."""
    code, out, _ = _run(capsys, "analyze", "case:kundur-like", "--json")
    assert code == 0
    payload = json.loads(out)
    b = payload["bounds"]
    assert b["lower"] <= b["upper"]
    holds = b["lower"] - 1e-9 <= payload["h2_squared"] <= b["upper"] + 1e-9
    assert payload["bounds"]["holds"] == holds
    assert holds is False  # documented counterexample to the claimed bracket
    assert payload["h2_squared"] < b["lower"]


def test_case_export_and_show(tmp_path, capsys):
    code, out, _ = _run(capsys, "cases", "export", "triangle", "--dest", str(tmp_path))
    assert code == 0
    net_file = tmp_path / "triangle.network.json"
    assert net_file.exists()
    data = json.loads(net_file.read_text())
    assert len(data["nodes"]) == 3
    code, out, _ = _run(capsys, "cases", "show", "kundur-like", "--json")
    assert code == 0
    payload = json.loads(out)
    assert payload["name"] == "kundur-like"
    assert "allocation" in payload["presets"]


def test_case_json_round_trip_through_analyze(tmp_path, capsys):
    entry = get_case("triangle")
    path = tmp_path / "tri.json"
    path.write_text(json.dumps(case_network_json(entry)))
    code, out, _ = _run(capsys, "analyze", str(path), "--json")
    assert code == 0
    assert abs(json.loads(out)["h2_squared"] - 12.0) <= 1e-9


# --------------------------------------------------------------------------
# CLI error paths / exit codes
# --------------------------------------------------------------------------


def test_malformed_json_exits_2_without_output(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"nodes": [,]}')
    code, out, err = _run(capsys, "analyze", str(bad))
    assert code == 2
    assert out == ""
    assert "line" in err


def test_missing_file_exits_2(capsys):
    code, _, err = _run(capsys, "analyze", "/nonexistent/net.json")
    assert code == 2
    assert "not found" in err


def test_disconnected_network_exits_3(tmp_path, capsys):
    data = {
        "nodes": [{"id": f"n{i}", "inertia": 1.0, "damping": 1.0} for i in range(4)],
        "edges": [
            {"from": 0, "to": 1, "susceptance": 1.0},
            {"from": 2, "to": 3, "susceptance": 1.0},
        ],
        "gamma": 1.0,
    }
    path = tmp_path / "split.json"
    path.write_text(json.dumps(data))
    code, _, err = _run(capsys, "analyze", str(path))
    assert code == 3
    assert "disconnected" in err


def test_unstable_step_exits_5(tmp_path, capsys):
    code, _, err = _run(
        capsys, "simulate", "case:triangle", "--dt", "2.5", "--horizon", "300",
        "--burn-in", "0", "--trials", "2", "--out", str(tmp_path),
    )
    assert code == 5
    assert "unstable" in err


def test_infeasible_problem_exits_7(tmp_path, capsys):
    problem = {
        "scenario": "susceptance",
        "n_nodes": 2,
        "edges": [{"from": 0, "to": 1}],
        "theta_star": [0.0, 0.0],
        "b_min": [0.5],
        "b_max": [2.0],
        "costs": [1.0],
        "budget": 99.0,
        "m_min": 1.0,
        "d_min": 1.0,
        "gamma": 1.0,
    }
    path = tmp_path / "prob.json"
    path.write_text(json.dumps(problem))
    code, _, err = _run(capsys, "optimize", str(path))
    assert code == 7
    assert "budget" in err


def test_unknown_case_exits_2(capsys):
    code, _, err = _run(capsys, "analyze", "case:nope")
    assert code == 2
    assert "unknown case" in err


# --------------------------------------------------------------------------
# commands end to end
# --------------------------------------------------------------------------


def test_simulate_writes_outputs_and_is_deterministic(tmp_path, capsys):
    args = [
        "simulate", "case:two-node", "--dt", "0.01", "--horizon", "4", "--burn-in", "1",
        "--trials", "6", "--seed", "7", "--out", str(tmp_path), "--plot", "--json",
    ]
    code, out, _ = _run(capsys, *args)
    assert code == 0
    payload = json.loads(out)
    assert payload["seed"] == 7
    csv_path = tmp_path / "two-node_trajectories.csv"
    svg_path = tmp_path / "two-node_frequencies.svg"
    summary_path = tmp_path / "two-node_summary.json"
    assert csv_path.exists() and svg_path.exists() and summary_path.exists()
    first_csv = csv_path.read_bytes()
    first_summary = summary_path.read_bytes()
    first_svg = svg_path.read_bytes()
    xml.dom.minidom.parseString(svg_path.read_text())
    header = first_csv.decode().splitlines()[0]
    assert header == "time,trial,node,theta,omega"
    code, _, _ = _run(capsys, *args)
    assert code == 0
    assert csv_path.read_bytes() == first_csv
    assert summary_path.read_bytes() == first_summary
    assert svg_path.read_bytes() == first_svg


def test_exported_network_with_initial_condition_simulates(tmp_path, capsys):
    """Export -> file -> simulate exercises the embedded initial_condition block."""
    _run(capsys, "cases", "export", "kundur-like", "--dest", str(tmp_path), "--quiet")
    code, out, _ = _run(
        capsys, "simulate", str(tmp_path / "kundur-like.network.json"),
        "--dt", "0.01", "--horizon", "2", "--burn-in", "1", "--trials", "4",
        "--seed", "2", "--out", str(tmp_path), "--json",
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["empirical_h2_squared"] > 0  # nonzero: the stored xi0 is far off equilibrium


def test_kundur_frequencies_synchronize_area_first_then_globally():
    """Strong intra-area lines pull each machine/converter pair together long
    before the weak tie aligns the two areas; by the horizon all four units
    hover near a common value."""
    from gridnorm.dynamics import assemble
    from gridnorm.simulate import SimulationConfig, euler_maruyama

    entry = get_case("kundur-like")
    net, ic = entry.network, entry.initial_condition
    ss = assemble(net, build_laplacian(net))
    cfg = SimulationConfig(dt=1e-3, horizon=40.0, burn_in=20.0, trials=2, seed=5, store_every=40, store_trials=1)
    ens = euler_maruyama(ss, ic, cfg)
    omega = ens.frequencies[0] + net.nominal_frequency
    t = ens.time_grid

    k_mid = int(np.argmin(np.abs(t - 20.0)))
    mid = omega[k_mid]
    intra = max(abs(mid[0] - mid[1]), abs(mid[2] - mid[3]))
    inter = abs((mid[0] + mid[1]) / 2 - (mid[2] + mid[3]) / 2)
    assert intra < 0.2 * inter  # areas are internally synchronized first

    spread0 = omega[0].max() - omega[0].min()
    spread_end = omega[-1].max() - omega[-1].min()
    assert spread_end < 0.05 * spread0  # then all units approach a common value


def test_optimize_susceptance_preset(tmp_path, capsys):
    _run(capsys, "cases", "export", "two-node", "--dest", str(tmp_path), "--quiet")
    code, out, _ = _run(capsys, "optimize", str(tmp_path / "two-node.susceptance.json"), "--json")
    assert code == 0
    payload = json.loads(out)
    np.testing.assert_allclose(payload["decision"]["susceptances"], [1.5], atol=1e-8)


def test_optimize_assignment_preset(tmp_path, capsys):
    _run(capsys, "cases", "export", "path-3", "--dest", str(tmp_path), "--quiet")
    code, out, _ = _run(capsys, "optimize", str(tmp_path / "path-3.assignment.json"), "--json")
    assert code == 0
    payload = json.loads(out)
    assert abs(payload["objective_value"] - 11.0) <= 1e-9


def test_optimize_allocation_reports_uniform_comparison(tmp_path, capsys):
    _run(capsys, "cases", "export", "kundur-like", "--dest", str(tmp_path), "--quiet")
    code, out, _ = _run(
        capsys, "optimize", str(tmp_path / "kundur-like.allocation.json"), "--json",
        "--starts", "3", "--max-iter", "120",
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["objective_value"] < payload["uniform"]["objective_value"]
    assert payload["improvement_over_uniform"] > 0
    assert "uniform" in payload and "starts" in payload


def test_optimize_iteration_cap_exits_6(tmp_path, capsys):
    problem = {
        "scenario": "susceptance",
        "n_nodes": 3,
        "edges": [{"from": 0, "to": 1}, {"from": 1, "to": 2}, {"from": 0, "to": 2}],
        "theta_star": [0.0, 0.0, 0.0],
        "b_min": [0.1, 0.1, 0.1],
        "b_max": [2.0, 2.0, 2.0],
        "costs": [1.0, 2.0, 0.7],
        "budget": 3.7,
        "m_min": 1.0,
        "d_min": 1.0,
        "gamma": 1.0,
    }
    path = tmp_path / "capped.json"
    path.write_text(json.dumps(problem))
    code, out, _ = _run(capsys, "optimize", str(path), "--max-iter", "1", "--json")
    assert code == 6
    payload = json.loads(out)  # best iterate still emitted
    assert payload["converged"] is False
    code, _, _ = _run(capsys, "optimize", str(path), "--json")
    assert code == 0


def test_validate_families_small(capsys):
    for family in ("oracle", "gradients", "bounds"):
        code, out, _ = _run(capsys, "validate", "--family", family, "--instances", "5", "--seed", "3", "--json")
        assert code == 0, (family, out)
        payload = json.loads(out)
        assert payload["instances"] == 5
        assert payload["hard_failures"] == []


def test_analyze_text_output_mentions_sqrt(capsys):
    code, out, _ = _run(capsys, "analyze", "case:triangle")
    assert code == 0
    assert "sqrt" in out
    assert "12" in out


def test_analyze_matches_library_value(capsys):
    code, out, _ = _run(capsys, "analyze", "case:triangle", "--json")
    payload = json.loads(out)
    lib = h2_norm(get_case("triangle").network).h2_squared
    assert payload["h2_squared"] == lib
    assert abs(payload["h2"] - np.sqrt(lib)) <= 1e-12
