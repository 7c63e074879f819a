"""Command-line front end: analyze, simulate, optimize, validate, cases.

Exit codes: 0 success; 2 parse/validation error (also bad flags and oversized
exhaustive searches); 3 disconnected network; 4 numerical failure; 5 unstable
integration step; 6 optimizer hit its iteration cap (best iterate still
emitted); 7 infeasible problem.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import _kernels
from .cases import CaseBankEntry, case_names, case_network_json, get_case
from .dynamics import assemble
from .errors import (
    DisconnectedNetworkError,
    GridNormError,
    InfeasibleError,
    NotHurwitzError,
    NumericalFailureError,
    TooLargeError,
    UnstableStepError,
    ValidationError,
)
from .gramian import h2_bounds, h2_norm, mode_centrality
from .harness import FAMILIES, run_family
from .network import PowerNetwork, build_laplacian, network_from_json_dict
from .optimize import (
    AllocationProblem,
    AssignmentProblem,
    MinMaxProblem,
    SusceptanceProblem,
    allocation_value_at,
    solve_allocation,
    solve_assignment,
    solve_minmax,
    solve_susceptance,
    uniform_allocation,
)
from .report import Report, line_plot_svg, render_table
from .simulate import (
    InitialCondition,
    SimulationConfig,
    empirical_h2,
    euler_maruyama,
    initial_condition_from_json,
)

SCENARIOS = ("susceptance", "assignment", "minmax", "allocation")


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _use_color() -> bool:
    return sys.stdout.isatty() and not os.environ.get("NO_COLOR")


def _mark(ok: bool) -> str:
    word = "PASS" if ok else "FAIL"
    if _use_color():
        return f"\x1b[32m{word}\x1b[0m" if ok else f"\x1b[31m{word}\x1b[0m"
    return word


def _load_json_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _load_network(source: str) -> tuple[PowerNetwork, InitialCondition | None, str]:
    """Load a network from a JSON file or from the case bank via 'case:NAME'."""
    if source.startswith("case:"):
        entry = _get_case_or_die(source[5:])
        return entry.network, entry.initial_condition, entry.name
    data = _load_json_file(source)
    net = network_from_json_dict(data)
    ic = None
    if "initial_condition" in data:
        ic = initial_condition_from_json(data["initial_condition"], net.n)
    return net, ic, Path(source).stem


def _get_case_or_die(name: str) -> CaseBankEntry:
    try:
        return get_case(name)
    except KeyError as exc:
        raise ValidationError(str(exc)) from None


def _emit(report: Report, args, default_stem: str) -> None:
    if args.json:
        print(json.dumps(report.payload, indent=2, sort_keys=True))
    elif not args.quiet:
        print(report.text)
    if getattr(args, "out", None):
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{default_stem}.json", "w", encoding="utf-8") as fh:
            json.dump(report.payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for name, svg in report.svgs.items():
            (out / name).write_text(svg, encoding="utf-8")


# --------------------------------------------------------------------------
# analyze
# --------------------------------------------------------------------------


def cmd_analyze(args) -> int:
    net, _, stem = _load_network(args.network)
    spec = build_laplacian(net)
    result = h2_norm(net)
    bounds = h2_bounds(net)
    centrality = mode_centrality(net, bounds.m_min, bounds.d_min)
    slack = 1e-9 * max(1.0, abs(bounds.upper))
    holds = bounds.lower - slack <= result.h2_squared <= bounds.upper + slack
    payload = {
        "network": stem,
        "n_nodes": net.n,
        "n_edges": net.m,
        "gamma": net.gamma,
        "h2_squared": result.h2_squared,
        "h2": float(np.sqrt(result.h2_squared)),
        "gramian_residual": result.residual,
        "laplacian_eigenvalues": [float(v) for v in spec.eigenvalues],
        "bounds": {
            "lower": bounds.lower,
            "upper": bounds.upper,
            "gap_estimate": bounds.gap_estimate,
            "m_min": bounds.m_min,
            "m_max": bounds.m_max,
            "d_min": bounds.d_min,
            "d_max": bounds.d_max,
            "holds": bool(holds),
        },
        "mode_centrality_at_min_params": [float(v) for v in centrality],
    }
    rows = [
        ("h2_squared", _fmt(result.h2_squared)),
        ("h2 (sqrt of the above)", _fmt(float(np.sqrt(result.h2_squared)))),
        ("bound lower", _fmt(bounds.lower)),
        ("bound upper", _fmt(bounds.upper)),
        ("gap estimate", _fmt(bounds.gap_estimate)),
        ("bounds hold", str(bool(holds))),
        ("spectrum", ", ".join(_fmt(v) for v in spec.eigenvalues)),
        ("mode centrality (at m_min, d_min)", ", ".join(_fmt(v) for v in centrality)),
    ]
    text = f"network {stem}: {net.n} nodes, {net.m} edges, gamma={_fmt(net.gamma)}\n"
    text += render_table(rows)
    _emit(Report(payload=payload, text=text), args, f"{stem}_analysis")
    return 0


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


def _write_trajectory_csv(path: Path, ens) -> None:
    n = ens.n_nodes
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("time,trial,node,theta,omega\n")
        for trial_pos, trial in enumerate(ens.stored_trial_indices):
            traj = ens.trajectories[trial_pos]
            for row, t in enumerate(ens.time_grid):
                for node in range(n):
                    fh.write(
                        f"{t:.17g},{trial},{node},{traj[row, node]:.17g},{traj[row, n + node]:.17g}\n"
                    )


def cmd_simulate(args) -> int:
    net, ic, stem = _load_network(args.network)
    if ic is None:
        ic = InitialCondition.zero(net.n)
    cfg = SimulationConfig(
        dt=args.dt,
        horizon=args.horizon,
        burn_in=args.burn_in,
        trials=args.trials,
        seed=args.seed,
        scheme=args.scheme,
        store_every=args.store_every,
        store_trials=args.store_trials,
    )
    ss = assemble(net, build_laplacian(net))
    ens = euler_maruyama(ss, ic, cfg)
    est, err = empirical_h2(ens) if cfg.trials >= 2 else (ens.empirical_h2_squared, float("inf"))
    analytic = h2_norm(net).h2_squared
    rel_gap = abs(est - analytic) / analytic if analytic > 0 else float("inf")

    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{stem}_trajectories.csv"
    _write_trajectory_csv(csv_path, ens)

    payload = {
        "network": stem,
        "empirical_h2_squared": est,
        "empirical_h2_stderr": err,
        "analytic_h2_squared": analytic,
        "relative_gap": rel_gap,
        "seed": int(args.seed),
        "scheme": cfg.scheme,
        "backend": _kernels.BACKEND,
        "config": cfg.to_json_dict(),
        "outputs": {"trajectories_csv": csv_path.name},
    }
    svgs = {}
    if args.plot:
        omega_star = net.nominal_frequency
        series = [
            (net.nodes[i].id, ens.time_grid, omega_star + ens.frequencies[0][:, i])
            for i in range(net.n)
        ]
        svgs[f"{stem}_frequencies.svg"] = line_plot_svg(
            f"frequencies ({stem}, trial 0)", "time [s]", "frequency [p.u.]", series
        )
        payload["outputs"]["plot"] = f"{stem}_frequencies.svg"
    summary_path = out / f"{stem}_summary.json"
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, svg in svgs.items():
        (out / name).write_text(svg, encoding="utf-8")

    rows = [
        ("empirical h2^2", _fmt(est)),
        ("stderr", _fmt(err)),
        ("analytic h2^2", _fmt(analytic)),
        ("relative gap", _fmt(rel_gap)),
        ("scheme / backend", f"{cfg.scheme} / {_kernels.BACKEND}"),
        ("trajectories", str(csv_path)),
        ("summary", str(summary_path)),
    ]
    text = f"simulated {cfg.trials} trials of {stem} (dt={cfg.dt}, T={cfg.horizon}, burn-in={cfg.burn_in})\n"
    text += render_table(rows)
    report = Report(payload=payload, text=text, svgs={})
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    elif not args.quiet:
        print(report.text)
    return 0


# --------------------------------------------------------------------------
# optimize
# --------------------------------------------------------------------------


def _incidence_from_edges(n: int, raw_edges) -> np.ndarray:
    inc = np.zeros((n, len(raw_edges)))
    for col, ed in enumerate(raw_edges):
        if isinstance(ed, dict):
            i, j = int(ed["from"]), int(ed["to"])
        else:
            i, j = int(ed[0]), int(ed[1])
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise ValidationError(f"edge #{col}: bad endpoints ({i},{j}) for {n} nodes")
        lo, hi = min(i, j), max(i, j)
        inc[lo, col] = 1.0
        inc[hi, col] = -1.0
    return inc


def _require(data: dict, *keys):
    for key in keys:
        if key not in data:
            raise ValidationError(f"problem JSON missing required key {key!r}")


def _parse_susceptance(data: dict) -> SusceptanceProblem:
    _require(data, "n_nodes", "edges", "theta_star", "b_min", "b_max", "costs", "budget", "m_min", "d_min", "gamma")
    return SusceptanceProblem(
        incidence=_incidence_from_edges(int(data["n_nodes"]), data["edges"]),
        theta_star=data["theta_star"],
        b_min=data["b_min"],
        b_max=data["b_max"],
        costs=data["costs"],
        budget=float(data["budget"]),
        m_min=float(data["m_min"]),
        d_min=float(data["d_min"]),
        gamma=float(data["gamma"]),
        equality_budget=bool(data.get("equality_budget", True)),
    )


def _parse_assignment(data: dict) -> AssignmentProblem:
    _require(data, "n_nodes", "susceptances", "theta_star", "m_min", "d_min", "gamma")
    return AssignmentProblem(
        n_nodes=int(data["n_nodes"]),
        edge_susceptances=data["susceptances"],
        theta_star=data["theta_star"],
        m_min=float(data["m_min"]),
        d_min=float(data["d_min"]),
        gamma=float(data["gamma"]),
        require_connected=bool(data.get("require_connected", False)),
        strategy=str(data.get("strategy", "exhaustive")),
    )


def _parse_minmax(data: dict) -> MinMaxProblem:
    _require(data, "n_nodes", "n_edges", "b_min", "b_max", "costs", "budget", "theta_star", "m_min", "d_min", "gamma")
    return MinMaxProblem(
        n_nodes=int(data["n_nodes"]),
        n_edges=int(data["n_edges"]),
        b_min=data["b_min"],
        b_max=data["b_max"],
        costs=data["costs"],
        budget=float(data["budget"]),
        theta_star=data["theta_star"],
        m_min=float(data["m_min"]),
        d_min=float(data["d_min"]),
        gamma=float(data["gamma"]),
        require_connected=bool(data.get("require_connected", False)),
        inner_iterations=int(data.get("inner_iterations", 400)),
    )


def _parse_allocation(data: dict) -> tuple[AllocationProblem, PowerNetwork]:
    _require(data, "converter_indices", "machine_indices", "m_bounds", "d_bounds", "budget")
    if "network" in data:
        net = network_from_json_dict(data["network"])
    elif "network_case" in data:
        net = _get_case_or_die(str(data["network_case"])).network
    else:
        raise ValidationError("allocation problem needs 'network' or 'network_case'")
    conv = [int(i) for i in data["converter_indices"]]
    mach = [int(i) for i in data["machine_indices"]]
    lap = build_laplacian(net).laplacian
    p_star = lap @ net.angles_star
    m_bounds = np.asarray(data["m_bounds"], dtype=float).reshape(len(conv), 2)
    d_bounds = np.asarray(data["d_bounds"], dtype=float).reshape(len(conv), 2)
    problem = AllocationProblem(
        converter_indices=tuple(conv),
        machine_power=p_star[mach],
        machine_damping=net.dampings[mach],
        m_lower=m_bounds[:, 0],
        m_upper=m_bounds[:, 1],
        d_lower=d_bounds[:, 0],
        d_upper=d_bounds[:, 1],
        budget=float(data["budget"]),
    )
    return problem, net


def cmd_optimize(args) -> int:
    data = _load_json_file(args.problem)
    scenario = args.scenario or data.get("scenario")
    if scenario not in SCENARIOS:
        raise ValidationError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")

    extra_rows = []
    if scenario == "susceptance":
        sol = solve_susceptance(_parse_susceptance(data), max_iter=args.max_iter or 10_000)
    elif scenario == "assignment":
        sol = solve_assignment(_parse_assignment(data))
    elif scenario == "minmax":
        sol = solve_minmax(_parse_minmax(data))
    else:
        problem, net = _parse_allocation(data)
        sol = solve_allocation(
            problem, net, seed=args.seed, n_starts=args.starts, max_iter=args.max_iter or 300
        )
        m_u, d_u = uniform_allocation(problem)
        j_uniform = allocation_value_at(problem, net, m_u, d_u)
        payload_extra = {
            "uniform": {
                "inertia": [float(v) for v in m_u],
                "damping": [float(v) for v in d_u],
                "objective_value": j_uniform,
            },
            "improvement_over_uniform": (j_uniform - sol.objective_value) / j_uniform,
        }
        extra_rows = [
            ("uniform-split objective", _fmt(j_uniform)),
            ("improvement", f"{100.0 * payload_extra['improvement_over_uniform']:.2f}%"),
        ]

    payload = sol.to_json_dict()
    if scenario == "allocation":
        payload.update(payload_extra)
    rows = [
        ("objective", _fmt(sol.objective_value)),
        ("converged", str(sol.converged)),
        ("iterations", str(sol.iterations)),
        ("certificate", sol.certificate),
        ("max feasibility residual", _fmt(max((v for v in sol.feasibility.values() if isinstance(v, float)), default=0.0))),
    ] + extra_rows
    text = f"scenario {scenario}: decision {json.dumps(sol.decision)}\n" + render_table(rows)
    _emit(Report(payload=payload, text=text), args, f"{Path(args.problem).stem}_solution")
    return 0 if sol.converged else 6


# --------------------------------------------------------------------------
# validate
# --------------------------------------------------------------------------


def cmd_validate(args) -> int:
    if args.instances < 1:
        raise ValidationError("--instances must be >= 1")
    outcome = run_family(args.family, args.instances, args.seed)
    payload = outcome.to_json_dict()
    ok = outcome.passed
    lines = [
        f"family {outcome.family}: {outcome.instances} instances, seed {outcome.master_seed}",
        f"hard failures: {len(outcome.hard_failures)}   findings: {len(outcome.findings)}   worst metric: {outcome.worst:.3e}",
    ]
    for item in (outcome.hard_failures + outcome.findings)[:20]:
        lines.append(f"  reproducer: {json.dumps(item, sort_keys=True)}")
    lines.append(f"result: {_mark(ok)}")
    report = Report(payload=payload, text="\n".join(lines))
    _emit(report, args, f"validate_{outcome.family}")
    return 0 if ok else 1


# --------------------------------------------------------------------------
# cases
# --------------------------------------------------------------------------


def cmd_cases(args) -> int:
    if args.action == "list":
        entries = [get_case(name) for name in case_names()]
        payload = {"cases": [{"name": e.name, "description": e.description} for e in entries]}
        text = render_table(
            [(e.name, f"n={e.network.n}", e.description) for e in entries],
            headers=("name", "size", "description"),
        )
        _emit(Report(payload=payload, text=text), args, "cases")
        return 0
    if not args.name:
        raise ValidationError(f"cases {args.action} needs a case name")
    entry = _get_case_or_die(args.name)
    if args.action == "show":
        payload = {
            "name": entry.name,
            "description": entry.description,
            "provenance": entry.provenance,
            "network": case_network_json(entry),
            "presets": entry.presets,
        }
        text = "\n".join(
            [
                f"case {entry.name}: {entry.description}",
                f"nodes: {', '.join(nd.id for nd in entry.network.nodes)}",
                f"edges: {', '.join(f'({e.i},{e.j}) b={e.susceptance}' for e in entry.network.edges)}",
                f"gamma: {entry.network.gamma}",
                f"presets: {', '.join(entry.presets) or 'none'}",
                f"provenance: {entry.provenance}",
            ]
        )
        _emit(Report(payload=payload, text=text), args, f"case_{entry.name}")
        return 0
    if args.action == "export":
        dest = Path(args.dest or ".")
        dest.mkdir(parents=True, exist_ok=True)
        written = []
        net_path = dest / f"{entry.name}.network.json"
        with open(net_path, "w", encoding="utf-8") as fh:
            json.dump(case_network_json(entry), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(net_path)
        for preset_name, preset in entry.presets.items():
            p_path = dest / f"{entry.name}.{preset_name}.json"
            with open(p_path, "w", encoding="utf-8") as fh:
                json.dump(preset, fh, indent=2, sort_keys=True)
                fh.write("\n")
            written.append(p_path)
        payload = {"exported": [str(p) for p in written]}
        text = "\n".join(f"wrote {p}" for p in written)
        if args.json:
            print(json.dumps(payload, indent=2, sort_keys=True))
        elif not args.quiet:
            print(text)
        return 0
    raise ValidationError(f"unknown cases action {args.action!r}")


# --------------------------------------------------------------------------
# parser / entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print exactly one JSON document to stdout")
    common.add_argument("--quiet", action="store_true", help="suppress human-readable output")
    common.add_argument("--out", help="directory for report files")

    parser = argparse.ArgumentParser(prog="gridnorm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_an = sub.add_parser("analyze", parents=[common], help="H2 norm, spectrum, bounds and centralities")
    p_an.add_argument("network", help="network JSON path or case:NAME")
    p_an.set_defaults(func=cmd_analyze)

    p_sim = sub.add_parser("simulate", parents=[common], help="Monte-Carlo SDE simulation")
    p_sim.add_argument("network", help="network JSON path or case:NAME")
    p_sim.add_argument("--dt", type=float, default=1e-3)
    p_sim.add_argument("--horizon", type=float, default=40.0)
    p_sim.add_argument("--burn-in", dest="burn_in", type=float, default=20.0)
    p_sim.add_argument("--trials", type=int, default=2000)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--scheme", choices=("em", "exact"), default="em")
    p_sim.add_argument("--store-every", dest="store_every", type=int, default=None)
    p_sim.add_argument("--store-trials", dest="store_trials", type=int, default=None)
    p_sim.add_argument("--plot", action="store_true", help="write a frequency SVG (nominal + deviation)")
    p_sim.set_defaults(func=cmd_simulate)

    p_opt = sub.add_parser("optimize", parents=[common], help="solve a design scenario")
    p_opt.add_argument("problem", help="scenario problem JSON")
    p_opt.add_argument("--scenario", choices=SCENARIOS, default=None, help="defaults to the file's 'scenario' key")
    p_opt.add_argument("--seed", type=int, default=0)
    p_opt.add_argument("--starts", type=int, default=8, help="multi-start count (allocation)")
    p_opt.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p_opt.set_defaults(func=cmd_optimize)

    p_val = sub.add_parser("validate", parents=[common], help="run a randomized property harness")
    p_val.add_argument("--family", choices=FAMILIES, required=True)
    p_val.add_argument("--instances", type=int, default=100)
    p_val.add_argument("--seed", type=int, default=0)
    p_val.set_defaults(func=cmd_validate)

    p_cases = sub.add_parser("cases", parents=[common], help="built-in case bank")
    p_cases.add_argument("action", choices=("list", "show", "export"))
    p_cases.add_argument("name", nargs="?", default=None)
    p_cases.add_argument("--dest", help="export destination directory")
    p_cases.set_defaults(func=cmd_cases)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TooLargeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DisconnectedNetworkError as exc:
        print(f"error: disconnected network: {exc}", file=sys.stderr)
        return 3
    except (NotHurwitzError, NumericalFailureError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 4
    except UnstableStepError as exc:
        print(f"error: unstable step: {exc}", file=sys.stderr)
        return 5
    except InfeasibleError as exc:
        print(f"error: infeasible: {exc}", file=sys.stderr)
        return 7
    except GridNormError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
