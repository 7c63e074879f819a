"""Power network graph model: incidence/Laplacian construction and spectral utilities.

A :class:`PowerNetwork` is an undirected weighted graph of generation units
(synchronous machines or grid-forming converters).  Each node carries inertia,
damping and a steady-state angle; each edge carries a positive susceptance.
Voltage magnitudes are fixed at 1 p.u. and are not represented.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalFailureError, ValidationError

NODE_KINDS = ("machine", "converter")

# Relative threshold (with floor 1.0 on lambda_max) below which a Laplacian
# eigenvalue counts as zero.
ZERO_EIG_RTOL = 1e-9

# Eigenvalues below this fraction of lambda_max are clamped to zero before the
# matrix square root, preventing NaN from round-off negatives.
SQRT_CLAMP_RTOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)  # copy: never freeze a caller-owned buffer
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Node:
    """One generation unit (bus) of the reduced network."""

    id: str
    inertia: float
    damping: float
    kind: str = "machine"
    angle_star: float = 0.0
    power_max: float | None = None

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise ValidationError(f"node {self.id!r}: kind must be one of {NODE_KINDS}, got {self.kind!r}")
        if not self.inertia > 0:
            raise ValidationError(f"node {self.id!r}: inertia must be > 0, got {self.inertia}")
        if not self.damping > 0:
            raise ValidationError(f"node {self.id!r}: damping must be > 0, got {self.damping}")
        if self.power_max is not None and not self.power_max > 0:
            raise ValidationError(f"node {self.id!r}: power_max must be > 0 when given")


@dataclass(frozen=True)
class Edge:
    """Undirected transmission line between node indices ``i`` and ``j``."""

    i: int
    j: int
    susceptance: float

    def __post_init__(self):
        if self.i == self.j:
            raise ValidationError(f"edge ({self.i},{self.j}): self-loops are not allowed")
        if not self.susceptance > 0:
            raise ValidationError(f"edge ({self.i},{self.j}): susceptance must be > 0, got {self.susceptance}")

    @property
    def key(self) -> tuple[int, int]:
        return (self.i, self.j) if self.i < self.j else (self.j, self.i)


@dataclass(frozen=True)
class PowerNetwork:
    """Immutable network model: nodes, weighted edges, and noise intensity gamma."""

    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    gamma: float
    nominal_frequency: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        n = len(self.nodes)
        if n < 1:
            raise ValidationError("network must have at least one node")
        if not self.gamma > 0:
            raise ValidationError(f"gamma must be > 0, got {self.gamma}")
        if not self.nominal_frequency > 0:
            raise ValidationError(f"nominal_frequency must be > 0, got {self.nominal_frequency}")
        seen: set[tuple[int, int]] = set()
        for e in self.edges:
            if not (0 <= e.i < n and 0 <= e.j < n):
                raise ValidationError(f"edge ({e.i},{e.j}) references a node outside 0..{n - 1}")
            if e.key in seen:
                raise ValidationError(f"duplicate edge {e.key}; merge parallel lines before building the network")
            seen.add(e.key)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def inertias(self) -> np.ndarray:
        return np.array([nd.inertia for nd in self.nodes])

    @property
    def dampings(self) -> np.ndarray:
        return np.array([nd.damping for nd in self.nodes])

    @property
    def angles_star(self) -> np.ndarray:
        return np.array([nd.angle_star for nd in self.nodes])

    @property
    def susceptances(self) -> np.ndarray:
        return np.array([e.susceptance for e in self.edges])


@dataclass(frozen=True)
class SpectralData:
    """Laplacian of a network together with its eigendecomposition and PSD square root."""

    laplacian: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    sqrt: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("laplacian", "eigenvalues", "eigenvectors", "sqrt"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    def zero_eigenvalue_count(self) -> int:
        lam_max = max(float(self.eigenvalues[-1]), 1.0)
        return int(np.sum(np.abs(self.eigenvalues) <= ZERO_EIG_RTOL * lam_max))


def build_incidence(net: PowerNetwork) -> np.ndarray:
    """Signed node-edge incidence matrix; the lower node index of each edge gets +1."""
    b = np.zeros((net.n, net.m))
    for col, e in enumerate(net.edges):
        lo, hi = e.key
        b[lo, col] = 1.0
        b[hi, col] = -1.0
    return b


def build_laplacian(net: PowerNetwork) -> SpectralData:
    """Susceptance-weighted Laplacian L = B diag(b) B^T with symmetric eigendecomposition.

    The square root is assembled as V diag(sqrt(clamp(lambda))) V^T, where
    eigenvalues below ``SQRT_CLAMP_RTOL * lambda_max`` are clamped to zero.
    """
    b_inc = build_incidence(net)
    lap = (b_inc * net.susceptances) @ b_inc.T
    lap = 0.5 * (lap + lap.T)
    try:
        eigvals, eigvecs = np.linalg.eigh(lap)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"Laplacian eigendecomposition failed: {exc}") from exc
    lam_max = float(eigvals[-1]) if net.n > 0 else 0.0
    clamped = np.where(eigvals < SQRT_CLAMP_RTOL * max(lam_max, 0.0), 0.0, eigvals)
    root = (eigvecs * np.sqrt(clamped)) @ eigvecs.T
    root = 0.5 * (root + root.T)
    return SpectralData(laplacian=lap, eigenvalues=eigvals, eigenvectors=eigvecs, sqrt=root)


def connected_component_count(n: int, pairs) -> int:
    """Number of connected components of the undirected graph on ``n`` nodes."""
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    comps = n
    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            comps -= 1
    return comps


def is_connected(net: PowerNetwork) -> bool:
    """True iff the undirected graph is connected (graph traversal, not spectral)."""
    return connected_component_count(net.n, [(e.i, e.j) for e in net.edges]) == 1


def replace_node_params(net: PowerNetwork, updates: dict[int, tuple[float, float]]) -> PowerNetwork:
    """Return a copy of ``net`` with (inertia, damping) replaced at the given node indices."""
    nodes = list(net.nodes)
    for idx, (m_i, d_i) in updates.items():
        nodes[idx] = replace(nodes[idx], inertia=float(m_i), damping=float(d_i))
    return replace(net, nodes=tuple(nodes))


def network_from_json_dict(data: dict) -> PowerNetwork:
    """Build a PowerNetwork from the documented JSON schema (see README)."""
    if not isinstance(data, dict):
        raise ValidationError("network JSON must be an object")
    try:
        raw_nodes = data["nodes"]
        raw_edges = data["edges"]
        gamma = float(data["gamma"])
    except KeyError as exc:
        raise ValidationError(f"network JSON missing required key {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"network JSON: bad gamma: {exc}") from exc

    nodes = []
    ids: dict[str, int] = {}
    for k, nd in enumerate(raw_nodes):
        try:
            node = Node(
                id=str(nd.get("id", f"n{k}")),
                kind=nd.get("kind", "machine"),
                inertia=float(nd["inertia"]),
                damping=float(nd["damping"]),
                angle_star=float(nd.get("angle_star", 0.0)),
                power_max=(float(nd["power_max"]) if nd.get("power_max") is not None else None),
            )
        except KeyError as exc:
            raise ValidationError(f"node #{k}: missing key {exc.args[0]!r}") from exc
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"node #{k}: {exc}") from exc
        if node.id in ids:
            raise ValidationError(f"duplicate node id {node.id!r}")
        ids[node.id] = k
        nodes.append(node)

    def resolve(ref, k: int) -> int:
        if isinstance(ref, bool):
            raise ValidationError(f"edge #{k}: node reference must be an index or id")
        if isinstance(ref, int):
            return ref
        if isinstance(ref, str) and ref in ids:
            return ids[ref]
        raise ValidationError(f"edge #{k}: unknown node reference {ref!r}")

    edges = []
    for k, ed in enumerate(raw_edges):
        try:
            edges.append(
                Edge(i=resolve(ed["from"], k), j=resolve(ed["to"], k), susceptance=float(ed["susceptance"]))
            )
        except KeyError as exc:
            raise ValidationError(f"edge #{k}: missing key {exc.args[0]!r}") from exc
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"edge #{k}: {exc}") from exc

    return PowerNetwork(
        nodes=tuple(nodes),
        edges=tuple(edges),
        gamma=gamma,
        nominal_frequency=float(data.get("nominal_frequency", 1.0)),
    )


def network_to_json_dict(net: PowerNetwork) -> dict:
    """Inverse of :func:`network_from_json_dict` (initial condition not included)."""
    return {
        "nodes": [
            {
                "id": nd.id,
                "kind": nd.kind,
                "inertia": nd.inertia,
                "damping": nd.damping,
                "angle_star": nd.angle_star,
                **({"power_max": nd.power_max} if nd.power_max is not None else {}),
            }
            for nd in net.nodes
        ],
        "edges": [{"from": e.i, "to": e.j, "susceptance": e.susceptance} for e in net.edges],
        "gamma": net.gamma,
        "nominal_frequency": net.nominal_frequency,
    }
