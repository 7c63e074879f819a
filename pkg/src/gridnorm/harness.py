"""Randomized validation harnesses: oracle equivalence, gradient checks, bound sweeps.

Each instance derives its randomness from (master_seed, instance_index) through
a counter-based Philox stream, so runs are reproducible and order-independent;
every failure or finding carries its instance index as the reproducer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gramian import closed_form_h2, h2_bounds, h2_norm
from .network import Edge, Node, PowerNetwork, build_laplacian, replace_node_params
from .optimize import _allocation_value, allocation_objective

FAMILIES = ("oracle", "gradients", "bounds")

ORACLE_RTOL = 1e-8
GRADIENT_RTOL = 1e-5


@dataclass
class HarnessOutcome:
    """Result of one harness family run."""

    family: str
    instances: int
    master_seed: int
    hard_failures: list = field(default_factory=list)
    findings: list = field(default_factory=list)
    worst: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.hard_failures

    def to_json_dict(self) -> dict:
        return {
            "family": self.family,
            "instances": self.instances,
            "master_seed": self.master_seed,
            "hard_failures": self.hard_failures,
            "findings": self.findings,
            "worst_metric": self.worst,
            "passed": self.passed,
        }


def instance_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(key=np.array([master_seed, index], dtype=np.uint64))
    )


def _log_uniform(rng: np.random.Generator, low: float, high: float, size=None):
    return np.exp(rng.uniform(np.log(low), np.log(high), size=size))


def random_connected_network(
    rng: np.random.Generator,
    n_low: int,
    n_high: int,
    param_low: float,
    param_high: float,
    homogeneous: bool = False,
    extra_edge_prob: float = 0.3,
) -> PowerNetwork:
    """Random connected network: a random spanning tree plus Bernoulli extra edges.

    Inertia, damping, susceptances and gamma are log-uniform in
    [param_low, param_high]; homogeneous networks share a single (m, d).
    """
    n = int(rng.integers(n_low, n_high + 1))
    pairs = set()
    for k in range(1, n):
        pairs.add((int(rng.integers(0, k)), k))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in pairs and rng.random() < extra_edge_prob:
                pairs.add((i, j))
    if homogeneous:
        m = float(_log_uniform(rng, param_low, param_high))
        d = float(_log_uniform(rng, param_low, param_high))
        m_vec = np.full(n, m)
        d_vec = np.full(n, d)
    else:
        m_vec = _log_uniform(rng, param_low, param_high, n)
        d_vec = _log_uniform(rng, param_low, param_high, n)
    gamma = float(_log_uniform(rng, param_low, param_high))
    nodes = tuple(
        Node(id=f"n{i}", inertia=float(m_vec[i]), damping=float(d_vec[i])) for i in range(n)
    )
    edges = tuple(
        Edge(i=i, j=j, susceptance=float(_log_uniform(rng, param_low, param_high)))
        for i, j in sorted(pairs)
    )
    return PowerNetwork(nodes=nodes, edges=edges, gamma=gamma)


def run_oracle_family(instances: int, master_seed: int) -> HarnessOutcome:
    """Closed-form vs Lyapunov-route equivalence on random homogeneous networks."""
    out = HarnessOutcome(family="oracle", instances=instances, master_seed=master_seed)
    for i in range(instances):
        rng = instance_rng(master_seed, i)
        try:
            net = random_connected_network(rng, 2, 10, 0.1, 10.0, homogeneous=True)
            spec = build_laplacian(net)
            cf = closed_form_h2(spec.eigenvalues, net.nodes[0].inertia, net.nodes[0].damping, net.gamma)
            lyap = h2_norm(net).h2_squared
            rel = abs(cf - lyap) / max(abs(cf), 1e-300)
            out.worst = max(out.worst, rel)
            if rel > ORACLE_RTOL:
                out.hard_failures.append({"index": i, "relative_error": rel})
        except Exception as exc:  # noqa: BLE001 - harness records, never hides
            out.hard_failures.append({"index": i, "error": f"{type(exc).__name__}: {exc}"})
    return out


def run_gradient_family(instances: int, master_seed: int) -> HarnessOutcome:
    """Adjoint allocation gradient vs central finite differences."""
    out = HarnessOutcome(family="gradients", instances=instances, master_seed=master_seed)
    for i in range(instances):
        rng = instance_rng(master_seed, i)
        try:
            net = random_connected_network(rng, 3, 6, 0.5, 2.0)
            n_c = int(rng.integers(1, net.n + 1))
            conv = sorted(rng.choice(net.n, size=n_c, replace=False).tolist())
            _, grad_m, grad_d = allocation_objective(net, conv)
            grad = np.concatenate([grad_m, grad_d])
            scale = max(float(np.max(np.abs(grad))), 1e-12)

            fd = np.empty_like(grad)
            params = [(idx, "m") for idx in conv] + [(idx, "d") for idx in conv]
            for k, (idx, which) in enumerate(params):
                node = net.nodes[idx]
                base = node.inertia if which == "m" else node.damping
                h = 1e-5 * base
                vals = []
                for sgn in (+1.0, -1.0):
                    m_i = node.inertia + sgn * h if which == "m" else node.inertia
                    d_i = node.damping + sgn * h if which == "d" else node.damping
                    vals.append(_allocation_value(replace_node_params(net, {idx: (m_i, d_i)})))
                fd[k] = (vals[0] - vals[1]) / (2.0 * h)
            rel = float(np.max(np.abs(fd - grad)) / scale)
            out.worst = max(out.worst, rel)
            if rel > GRADIENT_RTOL:
                out.hard_failures.append({"index": i, "relative_error": rel})
        except Exception as exc:  # noqa: BLE001
            out.hard_failures.append({"index": i, "error": f"{type(exc).__name__}: {exc}"})
    return out


def run_bounds_family(instances: int, master_seed: int) -> HarnessOutcome:
    """Closed-form bracket check on random heterogeneous networks.

    Bound violations are reported as findings with their reproducer index,
    not as hard failures; only crashes fail the harness.
    """
    out = HarnessOutcome(family="bounds", instances=instances, master_seed=master_seed)
    for i in range(instances):
        rng = instance_rng(master_seed, i)
        try:
            net = random_connected_network(rng, 3, 8, 0.5, 2.0)
            bounds = h2_bounds(net)
            val = h2_norm(net).h2_squared
            slack = 1e-9 * max(1.0, abs(bounds.upper))
            margin = max(bounds.lower - val, val - bounds.upper)
            out.worst = max(out.worst, margin)
            if margin > slack:
                out.findings.append(
                    {
                        "index": i,
                        "lower": bounds.lower,
                        "value": val,
                        "upper": bounds.upper,
                        "violation": margin,
                    }
                )
        except Exception as exc:  # noqa: BLE001
            out.hard_failures.append({"index": i, "error": f"{type(exc).__name__}: {exc}"})
    return out


def run_family(family: str, instances: int, master_seed: int) -> HarnessOutcome:
    if family == "oracle":
        return run_oracle_family(instances, master_seed)
    if family == "gradients":
        return run_gradient_family(instances, master_seed)
    if family == "bounds":
        return run_bounds_family(instances, master_seed)
    raise ValueError(f"unknown family {family!r}; choose from {FAMILIES}")
