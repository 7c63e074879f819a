"""Built-in case bank: small fixtures plus the two-area mixed-generation benchmark."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Edge, Node, PowerNetwork, network_to_json_dict
from .simulate import InitialCondition


@dataclass(frozen=True)
class CaseBankEntry:
    """A named, validated network with presets for the CLI commands."""

    name: str
    description: str
    network: PowerNetwork
    initial_condition: InitialCondition | None
    presets: dict
    provenance: str


def homogeneous_network(n: int, pairs, m=1.0, d=1.0, b=1.0, gamma=1.0) -> PowerNetwork:
    """Uniform-parameter network on explicit node pairs (test/fixture helper)."""
    nodes = tuple(Node(id=f"n{i}", inertia=m, damping=d) for i in range(n))
    edges = tuple(Edge(i=i, j=j, susceptance=b) for i, j in pairs)
    return PowerNetwork(nodes=nodes, edges=edges, gamma=gamma)


def two_node_network(**kw) -> PowerNetwork:
    return homogeneous_network(2, [(0, 1)], **kw)


def triangle_network(**kw) -> PowerNetwork:
    return homogeneous_network(3, [(0, 1), (1, 2), (0, 2)], **kw)


def path_network(n: int, **kw) -> PowerNetwork:
    return homogeneous_network(n, [(i, i + 1) for i in range(n - 1)], **kw)


def _steady_angles(edges, n, p_star):
    lap = np.zeros((n, n))
    for i, j, b in edges:
        lap[i, i] += b
        lap[j, j] += b
        lap[i, j] -= b
        lap[j, i] -= b
    return np.linalg.pinv(lap) @ np.asarray(p_star, dtype=float)


def _build_two_node() -> CaseBankEntry:
    net = two_node_network()
    return CaseBankEntry(
        name="two-node",
        description="Two identical machines on one unit line; squared H2 norm is 3.",
        network=net,
        initial_condition=InitialCondition.zero(2),
        presets={
            "susceptance": {
                "scenario": "susceptance",
                "n_nodes": 2,
                "edges": [{"from": 0, "to": 1}],
                "theta_star": [0.0, 0.0],
                "b_min": [0.5],
                "b_max": [2.0],
                "costs": [1.0],
                "budget": 1.5,
                "m_min": 1.0,
                "d_min": 1.0,
                "gamma": 1.0,
            },
            "minmax": {
                "scenario": "minmax",
                "n_nodes": 2,
                "n_edges": 1,
                "b_min": [0.5],
                "b_max": [2.0],
                "costs": [1.0],
                "budget": 1.0,
                "theta_star": [0.0, 0.0],
                "m_min": 1.0,
                "d_min": 1.0,
                "gamma": 1.0,
            },
        },
        provenance="Synthetic fixture; every value chosen by hand for easy arithmetic.",
    )


def _build_triangle() -> CaseBankEntry:
    net = triangle_network()
    return CaseBankEntry(
        name="triangle",
        description="Three identical machines on a unit triangle; squared H2 norm is 12.",
        network=net,
        initial_condition=InitialCondition.zero(3),
        presets={
            "susceptance": {
                "scenario": "susceptance",
                "n_nodes": 3,
                "edges": [{"from": 0, "to": 1}, {"from": 1, "to": 2}, {"from": 0, "to": 2}],
                "theta_star": [0.0, 0.0, 0.0],
                "b_min": [0.1, 0.1, 0.1],
                "b_max": [2.0, 2.0, 2.0],
                "costs": [1.0, 1.0, 1.0],
                "budget": 3.0,
                "m_min": 1.0,
                "d_min": 1.0,
                "gamma": 1.0,
            },
            "simulate": {"dt": 1e-3, "horizon": 40.0, "burn_in": 20.0, "trials": 2000},
        },
        provenance="Synthetic fixture; every value chosen by hand for easy arithmetic.",
    )


def _build_path3() -> CaseBankEntry:
    net = path_network(3)
    return CaseBankEntry(
        name="path-3",
        description="Three identical machines in a line; Laplacian spectrum {0, 1, 3}.",
        network=net,
        initial_condition=InitialCondition.zero(3),
        presets={
            "assignment": {
                "scenario": "assignment",
                "n_nodes": 4,
                "susceptances": [1.0, 1.0, 1.0],
                "theta_star": [0.0, 0.0, 0.0, 0.0],
                "m_min": 1.0,
                "d_min": 1.0,
                "gamma": 1.0,
                "require_connected": False,
                "strategy": "exhaustive",
            }
        },
        provenance="Synthetic fixture; the assignment preset asks for the best 3-edge pairing of 4 units.",
    )


# Two-area benchmark: machine steady powers and the resulting converter total.
_KUNDUR_PG = (-0.7778, -0.798889)
_KUNDUR_PBAR = -(_KUNDUR_PG[0] + _KUNDUR_PG[1])  # 1.576689
_KUNDUR_D_TOTAL = 40.0
_KUNDUR_RATIO = _KUNDUR_PBAR / _KUNDUR_D_TOTAL


def _build_kundur() -> CaseBankEntry:
    # Node order: G1, C2 (area 1), G3, C4 (area 2).
    p_star = np.array(
        [_KUNDUR_PG[0], 0.5 * _KUNDUR_PBAR, _KUNDUR_PG[1], 0.5 * _KUNDUR_PBAR]
    )
    edge_list = [(0, 1, 20.0), (2, 3, 2.0), (1, 3, 1.5)]
    theta = _steady_angles(edge_list, 4, p_star)
    d_g = tuple(abs(pg) / _KUNDUR_RATIO for pg in _KUNDUR_PG)
    nodes = (
        Node(id="G1", kind="machine", inertia=13.0, damping=d_g[0], angle_star=float(theta[0])),
        Node(id="C2", kind="converter", inertia=60.0, damping=20.0, angle_star=float(theta[1]), power_max=2.0),
        Node(id="G3", kind="machine", inertia=12.35, damping=d_g[1], angle_star=float(theta[2])),
        Node(id="C4", kind="converter", inertia=60.0, damping=20.0, angle_star=float(theta[3]), power_max=2.0),
    )
    net = PowerNetwork(
        nodes=nodes,
        edges=tuple(Edge(i=i, j=j, susceptance=b) for i, j, b in edge_list),
        gamma=0.05,
    )
    # Published initial-condition statistics give a 4-vector plus a block
    # covariance; we read it as the converters' (angle, frequency) sub-vector
    # with the machines starting at equilibrium.
    mean = np.zeros(8)
    mean[[1, 3]] = (93.077, 69.3918)
    mean[[5, 7]] = (56.5361, 45.6552)
    diag = np.zeros(8)
    diag[[1, 3]] = np.sqrt(0.07)
    diag[[5, 7]] = np.sqrt(0.01)
    ic = InitialCondition(mean=mean, cov_factor=np.diag(diag))
    allocation = {
        "scenario": "allocation",
        "network_case": "kundur-like",
        "converter_indices": [1, 3],
        "machine_indices": [0, 2],
        "m_bounds": [[10.0, 110.0], [5.0, 115.0]],
        "d_bounds": [[5.0, 35.0], [5.0, 35.0]],
        "budget": 120.0,
    }
    return CaseBankEntry(
        name="kundur-like",
        description=(
            "Kundur-style four-unit two-area layout with G2 and G4 replaced by "
            "grid-forming converters C2 and C4; correlated noise gamma = 0.05."
        ),
        network=net,
        initial_condition=ic,
        presets={
            "allocation": allocation,
            "assignment": {
                "scenario": "assignment",
                "n_nodes": 4,
                "susceptances": [1.0, 1.0, 1.0],
                "theta_star": [0.0, 0.0, 0.0, 0.0],
                "m_min": 1.0,
                "d_min": 1.0,
                "gamma": 1.0,
                "require_connected": False,
                "strategy": "exhaustive",
            },
            "simulate": {"dt": 1e-3, "horizon": 40.0, "burn_in": 20.0, "trials": 256},
        },
        provenance=(
            "SURROGATE VALUES: line susceptances (20.0, 2.0, 1.5) and machine inertias "
            "(13.0, 12.35) are surrogates chosen so the graph is connected and two-area "
            "structured; Kundur's book line data is not reproduced here. Steady angles "
            "solve L theta* = P* for machine powers (-0.7778, -0.798889), whose negated "
            "sum 1.576689 is the converter power total; machine dampings make the power "
            "sharing ratio uniform with the damping total 40. Noise intensity 0.05, the "
            "initial-condition statistics, converter bound/budget values (10/5 lower "
            "bounds, inertia budget 120) follow the published two-area adaptation this "
            "case models; converter upper bounds are surrogates."
        ),
    )


def _build_twin_areas() -> CaseBankEntry:
    # Exactly symmetric two-area layout: swapping areas exchanges the two
    # converters, so the equal split is a stationary allocation, and in this
    # weakly-coupled, strongly-damped regime a dense grid search confirms it
    # is the global optimum (heavier coupling makes symmetry breaking pay off
    # and moves the optimum to a bound; see tests).
    q = 0.8
    p_star = np.array([-q, q, -q, q])
    edge_list = [(0, 1, 1.0), (2, 3, 1.0), (1, 3, 0.3)]
    theta = _steady_angles(edge_list, 4, p_star)
    nodes = (
        Node(id="G1", kind="machine", inertia=1.0, damping=8.0, angle_star=float(theta[0])),
        Node(id="C2", kind="converter", inertia=5.0, damping=8.0, angle_star=float(theta[1])),
        Node(id="G3", kind="machine", inertia=1.0, damping=8.0, angle_star=float(theta[2])),
        Node(id="C4", kind="converter", inertia=5.0, damping=8.0, angle_star=float(theta[3])),
    )
    net = PowerNetwork(
        nodes=nodes,
        edges=tuple(Edge(i=i, j=j, susceptance=b) for i, j, b in edge_list),
        gamma=0.05,
    )
    allocation = {
        "scenario": "allocation",
        "network_case": "twin-areas",
        "converter_indices": [1, 3],
        "machine_indices": [0, 2],
        "m_bounds": [[1.0, 9.0], [1.0, 9.0]],
        "d_bounds": [[3.2, 12.8], [3.2, 12.8]],
        "budget": 10.0,
    }
    return CaseBankEntry(
        name="twin-areas",
        description="Mirror-symmetric two-area network; the optimal converter allocation is the equal split.",
        network=net,
        initial_condition=InitialCondition.zero(4),
        presets={"allocation": allocation},
        provenance="Synthetic symmetric fixture for allocation sanity checks.",
    )


_BUILDERS = {
    "two-node": _build_two_node,
    "triangle": _build_triangle,
    "path-3": _build_path3,
    "kundur-like": _build_kundur,
    "twin-areas": _build_twin_areas,
}


def case_names() -> tuple[str, ...]:
    return tuple(_BUILDERS)


def get_case(name: str) -> CaseBankEntry:
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise KeyError(f"unknown case {name!r}; available: {', '.join(_BUILDERS)}") from None


def case_network_json(entry: CaseBankEntry) -> dict:
    """Network JSON (including the initial condition) for `cases export`."""
    data = network_to_json_dict(entry.network)
    if entry.initial_condition is not None:
        ic = entry.initial_condition
        data["initial_condition"] = {
            "mean": [float(v) for v in ic.mean],
            "cov_factor": [[float(v) for v in row] for row in ic.cov_factor],
        }
    return data
