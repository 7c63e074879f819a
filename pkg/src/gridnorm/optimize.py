"""Network-design optimization scenarios driven by the spectral H2 objective.

Four problem families:

* susceptance allocation on a fixed topology (continuous, convex) under box
  capacity and budget constraints;
* node-edge assignment of given susceptance values to node pairs
  (combinatorial; exhaustive search with a greedy heuristic);
* combined min-max design over topology and susceptances, penalizing the
  largest Laplacian eigenvalue;
* inertia/damping allocation across grid-forming converters with an inertia
  budget and damping pinned by power sharing (multi-start projected gradient
  with adjoint gradients through the Lyapunov equation).

Steady-state power is reported as P* = L theta*, a determined output of the
design, never a free variable.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dynamics import assemble, deflate
from .errors import InfeasibleError, TooLargeError, ValidationError
from .gramian import gramian_of, lyapunov_solve
from .network import (
    PowerNetwork,
    build_laplacian,
    connected_component_count,
    replace_node_params,
)

EVAL_BUDGET = 10_000_000
TIE_TOL = 1e-12


# --------------------------------------------------------------------------
# projections
# --------------------------------------------------------------------------


def project_box_hyperplane(
    y: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    w: np.ndarray,
    k: float,
    equality: bool = True,
) -> np.ndarray:
    """Euclidean projection onto {lo <= x <= hi, w.x = k} for positive weights w.

    Exact up to bisection precision: the KKT system gives x = clip(y - tau w)
    with w.x(tau) monotone in tau, so tau is bracketed and bisected.  With
    ``equality=False`` the hyperplane becomes the halfspace w.x <= k (the box
    projection is returned unchanged when it already satisfies it).
    """
    y = np.asarray(y, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    w = np.asarray(w, dtype=float)
    if not np.all(w > 0):
        raise ValidationError("projection weights must be positive")
    boxed = np.clip(y, lo, hi)
    if not equality and float(w @ boxed) <= k:
        return boxed

    def dot(tau: float) -> float:
        return float(w @ np.clip(y - tau * w, lo, hi))

    t_lo = float(np.min((y - hi) / w))  # x(t_lo) = hi, w.x maximal
    t_hi = float(np.max((y - lo) / w))  # x(t_hi) = lo, w.x minimal
    if dot(t_lo) < k or dot(t_hi) > k:
        raise InfeasibleError(f"target {k} outside the attainable range of w.x over the box")
    for _ in range(200):
        mid = 0.5 * (t_lo + t_hi)
        if dot(mid) >= k:
            t_lo = mid
        else:
            t_hi = mid
    # midpoint is accurate to ~1e-60 relative; snap the residual onto the
    # hyperplane through the free (strictly interior) coordinates
    tau = 0.5 * (t_lo + t_hi)
    x = np.clip(y - tau * w, lo, hi)
    free = (x > lo) & (x < hi)
    if np.any(free):
        x[free] -= (float(w @ x) - k) / float(w[free] @ w[free]) * w[free]
        x = np.clip(x, lo, hi)
    return x


def project_box_hyperplane_dykstra(
    y: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    w: np.ndarray,
    k: float,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    equality: bool = True,
) -> np.ndarray:
    """Dykstra alternation between the box and the budget hyperplane.

    Used by the susceptance solver, whose iterates stay near the polytope
    where the alternation converges quickly; stops once the box-feasible
    iterate meets the budget within ``tol`` and has stopped moving.  Agrees
    with :func:`project_box_hyperplane` (tested); the latter is preferred for
    far-out inputs, where alternation needs O(|y|) sweeps to unwind.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    ww = float(w @ w)
    scale = max(1.0, abs(k))
    x = y.copy()
    p = np.zeros_like(y)
    q = np.zeros_like(y)
    u_prev = None
    for _ in range(max_iter):
        u = np.clip(x + p, lo, hi)
        p = x + p - u
        z = u + q
        viol = (float(w @ z) - k) / ww
        if equality or viol > 0:
            v = z - viol * w
        else:
            v = z.copy()
        q = z - v
        x = v
        budget_gap = float(w @ u) - k
        if not equality:
            budget_gap = max(0.0, budget_gap)
        moved = np.inf if u_prev is None else float(np.max(np.abs(u - u_prev)))
        if abs(budget_gap) <= tol * scale and moved <= tol:
            return u
        u_prev = u
    return project_box_hyperplane(y, lo, hi, w, k, equality=equality)


# --------------------------------------------------------------------------
# scenario 1: susceptance allocation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SusceptanceProblem:
    """Fixed-topology susceptance design data."""

    incidence: np.ndarray = field(repr=False)
    theta_star: np.ndarray
    b_min: np.ndarray
    b_max: np.ndarray
    costs: np.ndarray
    budget: float
    m_min: float
    d_min: float
    gamma: float
    equality_budget: bool = True

    def __post_init__(self):
        b_inc = np.asarray(self.incidence, dtype=float)
        if b_inc.ndim != 2:
            raise ValidationError("incidence must be a 2-D matrix")
        m = b_inc.shape[1]
        for name in ("theta_star", "b_min", "b_max", "costs"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "incidence", b_inc)
        if self.theta_star.shape != (b_inc.shape[0],):
            raise ValidationError("theta_star length must match the node count")
        for name in ("b_min", "b_max", "costs"):
            if getattr(self, name).shape != (m,):
                raise ValidationError(f"{name} must have one entry per edge ({m})")
        if not np.all(self.b_min > 0):
            raise ValidationError("b_min must be > 0 componentwise")
        if not np.all(self.b_max >= self.b_min):
            raise ValidationError("b_max must dominate b_min componentwise")
        if not np.all(self.costs > 0):
            raise ValidationError("costs must be > 0 componentwise")
        if min(self.m_min, self.d_min, self.gamma) <= 0:
            raise ValidationError("m_min, d_min and gamma must be > 0")
        lo = float(self.costs @ self.b_min)
        hi = float(self.costs @ self.b_max)
        if self.equality_budget and not (lo <= self.budget <= hi):
            raise InfeasibleError(
                f"budget {self.budget} outside attainable cost range [{lo}, {hi}]"
            )
        if not self.equality_budget and self.budget < lo:
            raise InfeasibleError(f"budget {self.budget} below minimal cost {lo}")

    @property
    def n_edges(self) -> int:
        return self.incidence.shape[1]


def spectral_objective(
    b: np.ndarray, incidence: np.ndarray, m_min: float, d_min: float, gamma: float
) -> tuple[float, np.ndarray]:
    """Homogeneous-bound objective and analytic gradient in trace form.

    value = gamma/(2 d_min) * (trace(L^2) + trace(L)/m_min) with L = B diag(b) B^T;
    trace(L^2) = b^T G b for G the elementwise square of B^T B, and
    trace(L) = 2 sum(b).
    """
    b = np.asarray(b, dtype=float)
    gram = incidence.T @ incidence
    g2 = gram * gram
    scale = gamma / (2.0 * d_min)
    value = scale * (float(b @ g2 @ b) + 2.0 * float(np.sum(b)) / m_min)
    grad = scale * (2.0 * g2 @ b + 2.0 / m_min)
    return value, grad


@dataclass(frozen=True)
class ScenarioSolution:
    """Solver output: decision variables, objective, and feasibility evidence."""

    scenario: str
    decision: dict
    objective_value: float
    steady_power: np.ndarray
    iterations: int
    converged: bool
    certificate: str
    feasibility: dict
    starts: tuple = ()

    def to_json_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "decision": self.decision,
            "objective_value": self.objective_value,
            "steady_power": [float(v) for v in self.steady_power],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "certificate": self.certificate,
            "feasibility": self.feasibility,
            "starts": list(self.starts),
        }


def susceptance_feasibility(p: SusceptanceProblem, b: np.ndarray) -> dict:
    """Constraint residuals of a candidate susceptance vector (independent check)."""
    b = np.asarray(b, dtype=float)
    box = float(max(np.max(p.b_min - b, initial=0.0), np.max(b - p.b_max, initial=0.0)))
    cost = float(p.costs @ b)
    budget = abs(cost - p.budget) if p.equality_budget else max(0.0, cost - p.budget)
    return {"box": max(box, 0.0), "budget": budget, "cost": cost}


def solve_susceptance(
    p: SusceptanceProblem, max_iter: int = 10_000, grad_tol: float = 1e-8
) -> ScenarioSolution:
    """Projected-gradient descent for the susceptance allocation problem.

    The objective is a convex quadratic in b (G is PSD by the Schur product
    theorem), so a fixed 1/L step with Dykstra projections converges; the
    projected-gradient norm is the stopping certificate.
    """
    gram = p.incidence.T @ p.incidence
    g2 = gram * gram
    scale = p.gamma / (2.0 * p.d_min)
    lip = 2.0 * scale * float(np.linalg.eigvalsh(g2)[-1])
    step = 1.0 / lip if lip > 0 else 1.0

    def project(y):
        return project_box_hyperplane_dykstra(
            y, p.b_min, p.b_max, p.costs, p.budget, equality=p.equality_budget
        )

    b = project(0.5 * (p.b_min + p.b_max))
    pg_norm = math.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        _, grad = spectral_objective(b, p.incidence, p.m_min, p.d_min, p.gamma)
        b_next = project(b - step * grad)
        pg_norm = float(np.linalg.norm(b - b_next)) / step
        b = b_next
        if pg_norm < grad_tol:
            break
    converged = pg_norm < grad_tol
    value, _ = spectral_objective(b, p.incidence, p.m_min, p.d_min, p.gamma)
    lap = (p.incidence * b) @ p.incidence.T
    return ScenarioSolution(
        scenario="susceptance",
        decision={"susceptances": [float(v) for v in b]},
        objective_value=value,
        steady_power=lap @ p.theta_star,
        iterations=iterations,
        converged=converged,
        certificate=f"projected-gradient norm {pg_norm:.3e}",
        feasibility=susceptance_feasibility(p, b),
    )


# --------------------------------------------------------------------------
# scenario 2: node-edge assignment
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AssignmentProblem:
    """Pairing of generation units: place given susceptances on node pairs."""

    n_nodes: int
    edge_susceptances: np.ndarray
    theta_star: np.ndarray
    m_min: float
    d_min: float
    gamma: float
    require_connected: bool = False
    strategy: str = "exhaustive"

    def __post_init__(self):
        object.__setattr__(
            self, "edge_susceptances", np.asarray(self.edge_susceptances, dtype=float)
        )
        object.__setattr__(self, "theta_star", np.asarray(self.theta_star, dtype=float))
        n = int(self.n_nodes)
        if n < 1:
            raise ValidationError("n_nodes must be >= 1")
        m = self.edge_susceptances.size
        if m > n * (n - 1) // 2:
            raise ValidationError(
                f"{m} edges cannot be placed on {n} nodes without parallel edges"
            )
        if not np.all(self.edge_susceptances > 0):
            raise ValidationError("edge susceptances must be > 0")
        if self.theta_star.shape != (n,):
            raise ValidationError("theta_star length must match n_nodes")
        if min(self.m_min, self.d_min, self.gamma) <= 0:
            raise ValidationError("m_min, d_min and gamma must be > 0")
        if self.strategy not in ("exhaustive", "greedy"):
            raise ValidationError("strategy must be 'exhaustive' or 'greedy'")

    @property
    def n_edges(self) -> int:
        return self.edge_susceptances.size


def _distinct_permutation_count(values: np.ndarray) -> int:
    total = math.factorial(values.size)
    for _, group in itertools.groupby(sorted(values)):
        total //= math.factorial(sum(1 for _ in group))
    return total


def _assignment_value(trace_sq: float, b_sum: float, p) -> float:
    return p.gamma / (2.0 * p.d_min) * (trace_sq + 2.0 * b_sum / p.m_min)


def _trace_sq_edges(pairs, bvals) -> float:
    s = 4.0 * float(np.sum(np.square(bvals)))
    for e in range(len(pairs)):
        for f in range(e + 1, len(pairs)):
            ie, je = pairs[e]
            if ie in pairs[f] or je in pairs[f]:
                s += 2.0 * bvals[e] * bvals[f]
    return s


def assignment_feasibility(p: AssignmentProblem, edges) -> dict:
    pairs = [(int(i), int(j)) for i, j, _ in edges]
    simple = len({tuple(sorted(pr)) for pr in pairs}) == len(pairs) and all(i != j for i, j in pairs)
    comps = connected_component_count(p.n_nodes, pairs)
    placed = sorted(float(b) for _, _, b in edges)
    wanted = sorted(float(b) for b in p.edge_susceptances)
    multiset_gap = float(np.max(np.abs(np.array(placed) - np.array(wanted)))) if placed else 0.0
    return {
        "simple_graph": 0.0 if simple else 1.0,
        "connectivity": 0.0 if (not p.require_connected or comps == 1) else float(comps - 1),
        "susceptance_multiset": multiset_gap,
    }


def solve_assignment(p: AssignmentProblem, batch_size: int = 8192) -> ScenarioSolution:
    """Optimal pairing of units: exhaustive enumeration or greedy construction.

    Exhaustive enumerates every simple-edge subset and every distinct
    assignment of the susceptance values, in lexicographic order (which makes
    the documented tie-break deterministic).  Greedy adds one edge at a time
    by best marginal objective and is benchmarked against exhaustive in tests.
    """
    n, m = int(p.n_nodes), p.n_edges
    slots = list(itertools.combinations(range(n), 2))
    if p.require_connected and m < n - 1:
        raise InfeasibleError(f"{m} edges cannot connect {n} nodes")

    if p.strategy == "exhaustive":
        n_subsets = math.comb(len(slots), m)
        n_perms = _distinct_permutation_count(p.edge_susceptances)
        total = n_subsets * n_perms
        if total > EVAL_BUDGET:
            raise TooLargeError(
                f"exhaustive search needs {total} evaluations (> {EVAL_BUDGET}); use strategy='greedy'"
            )
        return _solve_assignment_exhaustive(p, slots, batch_size)
    return _solve_assignment_greedy(p, slots)


def _solve_assignment_exhaustive(p, slots, batch_size) -> ScenarioSolution:
    n, m = int(p.n_nodes), p.n_edges
    perms = sorted(set(itertools.permutations(tuple(float(v) for v in p.edge_susceptances))))
    best_value = math.inf
    best_edges: list[tuple[int, int, float]] | None = None
    evaluated = 0

    buf_pairs: list[tuple[tuple[int, int], ...]] = []
    buf_b: list[tuple[float, ...]] = []

    def flush():
        nonlocal best_value, best_edges, evaluated
        if not buf_pairs:
            return
        k = len(buf_pairs)
        iarr = np.array([[pr[0] for pr in cand] for cand in buf_pairs], dtype=np.int64)
        jarr = np.array([[pr[1] for pr in cand] for cand in buf_pairs], dtype=np.int64)
        bmat = np.array(buf_b, dtype=float)
        out = np.empty(k)
        if m > 0:
            _kernels.trace_square_batch(iarr, jarr, bmat, out)
        else:
            out[:] = 0.0
        values = p.gamma / (2.0 * p.d_min) * (out + 2.0 * bmat.sum(axis=1) / p.m_min)
        evaluated += k
        for idx in range(k):
            v = float(values[idx])
            if v < best_value - TIE_TOL:
                best_value = v
                best_edges = [
                    (buf_pairs[idx][e][0], buf_pairs[idx][e][1], buf_b[idx][e]) for e in range(m)
                ]
        buf_pairs.clear()
        buf_b.clear()

    for subset in itertools.combinations(slots, m):
        if p.require_connected and connected_component_count(n, subset) != 1:
            continue
        for perm in perms:
            buf_pairs.append(subset)
            buf_b.append(perm)
            if len(buf_pairs) >= batch_size:
                flush()
    flush()

    if best_edges is None:
        raise InfeasibleError("no feasible edge subset (connectivity requirement)")
    lap = np.zeros((n, n))
    for i, j, b in best_edges:
        lap[i, i] += b
        lap[j, j] += b
        lap[i, j] -= b
        lap[j, i] -= b
    return ScenarioSolution(
        scenario="assignment",
        decision={"edges": [[int(i), int(j), float(b)] for i, j, b in best_edges]},
        objective_value=best_value,
        steady_power=lap @ p.theta_star,
        iterations=evaluated,
        converged=True,
        certificate=f"exhaustive argmin over {evaluated} candidates, ties broken lexicographically",
        feasibility=assignment_feasibility(p, best_edges),
    )


def _solve_assignment_greedy(p, slots) -> ScenarioSolution:
    n, m = int(p.n_nodes), p.n_edges
    chosen: list[tuple[int, int]] = []
    chosen_b: list[float] = []
    remaining = sorted(float(v) for v in p.edge_susceptances)
    free = list(slots)
    evaluated = 0

    for round_idx in range(m):
        picks_left_after = m - round_idx - 1
        best = None
        for slot in free:
            if p.require_connected:
                comps = connected_component_count(n, chosen + [slot])
                if comps - 1 > picks_left_after:
                    continue
            for v in sorted(set(remaining)):
                trace_sq = _trace_sq_edges(chosen + [slot], chosen_b + [v])
                value = _assignment_value(trace_sq, sum(chosen_b) + v, p)
                evaluated += 1
                if best is None or value < best[0] - TIE_TOL:
                    best = (value, slot, v)
        if best is None:
            raise InfeasibleError("greedy could not keep the connectivity requirement satisfiable")
        _, slot, v = best
        chosen.append(slot)
        chosen_b.append(v)
        free.remove(slot)
        remaining.remove(v)

    edges = [(i, j, b) for (i, j), b in zip(chosen, chosen_b)]
    trace_sq = _trace_sq_edges(chosen, chosen_b)
    value = _assignment_value(trace_sq, sum(chosen_b), p)
    lap = np.zeros((n, n))
    for i, j, b in edges:
        lap[i, i] += b
        lap[j, j] += b
        lap[i, j] -= b
        lap[j, i] -= b
    return ScenarioSolution(
        scenario="assignment",
        decision={"edges": [[int(i), int(j), float(b)] for i, j, b in edges]},
        objective_value=value,
        steady_power=lap @ p.theta_star,
        iterations=evaluated,
        converged=True,
        certificate="greedy best-marginal construction (heuristic; exhaustive is the oracle)",
        feasibility=assignment_feasibility(p, edges),
    )


# --------------------------------------------------------------------------
# scenario 3: combined min-max design
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MinMaxProblem:
    """Joint topology + susceptance design penalizing the top Laplacian eigenvalue."""

    n_nodes: int
    n_edges: int
    b_min: np.ndarray
    b_max: np.ndarray
    costs: np.ndarray
    budget: float
    theta_star: np.ndarray
    m_min: float
    d_min: float
    gamma: float
    require_connected: bool = False
    inner_iterations: int = 400

    def __post_init__(self):
        for name in ("b_min", "b_max", "costs", "theta_star"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n, m = int(self.n_nodes), int(self.n_edges)
        if m > n * (n - 1) // 2:
            raise ValidationError(f"{m} edges cannot be placed on {n} nodes")
        for name in ("b_min", "b_max", "costs"):
            if getattr(self, name).shape != (m,):
                raise ValidationError(f"{name} must have one entry per edge slot ({m})")
        if self.theta_star.shape != (n,):
            raise ValidationError("theta_star length must match n_nodes")
        if not np.all(self.b_min > 0) or not np.all(self.b_max >= self.b_min):
            raise ValidationError("need 0 < b_min <= b_max componentwise")
        if not np.all(self.costs > 0):
            raise ValidationError("costs must be > 0")
        if min(self.m_min, self.d_min, self.gamma) <= 0:
            raise ValidationError("m_min, d_min and gamma must be > 0")
        lo, hi = float(self.costs @ self.b_min), float(self.costs @ self.b_max)
        if not (lo <= self.budget <= hi):
            raise InfeasibleError(f"budget {self.budget} outside attainable range [{lo}, {hi}]")


DEGENERACY_RTOL = 1e-8


def lambda_max_subgradient(incidence: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    """Top Laplacian eigenvalue and a subgradient wrt edge susceptances.

    On a (near-)degenerate top eigenvalue the subgradients of the whole top
    eigenspace are averaged.
    """
    lap = (incidence * b) @ incidence.T
    lam, vec = np.linalg.eigh(lap)
    top = float(lam[-1])
    group = lam >= top - DEGENERACY_RTOL * max(1.0, abs(top))
    proj = incidence.T @ vec[:, group]
    grad = np.mean(proj**2, axis=1)
    return top, grad


def _minmax_value(lam_top: float, p: MinMaxProblem) -> float:
    return p.n_nodes * p.gamma / (2.0 * p.d_min) * (lam_top**2 + lam_top / p.m_min)


def solve_minmax(p: MinMaxProblem) -> ScenarioSolution:
    """Nested search: exhaustive over topologies, projected subgradient over susceptances.

    Edge slot k's box/cost applies to the k-th chosen node pair in
    lexicographic order.
    """
    n, m = int(p.n_nodes), int(p.n_edges)
    slots = list(itertools.combinations(range(n), 2))
    if p.require_connected and m < n - 1:
        raise InfeasibleError(f"{m} edges cannot connect {n} nodes")
    n_topologies = math.comb(len(slots), m)
    if n_topologies * max(1, p.inner_iterations) > EVAL_BUDGET:
        raise TooLargeError(
            f"{n_topologies} topologies x {p.inner_iterations} inner steps exceed the budget"
        )

    best = None  # (value, lam, subset, b)
    iterations = 0
    for subset in itertools.combinations(slots, m):
        if p.require_connected and connected_component_count(n, subset) != 1:
            continue
        inc = np.zeros((n, m))
        for col, (i, j) in enumerate(subset):
            inc[i, col] = 1.0
            inc[j, col] = -1.0
        b = project_box_hyperplane(0.5 * (p.b_min + p.b_max), p.b_min, p.b_max, p.costs, p.budget)
        lam_top, _ = lambda_max_subgradient(inc, b)
        best_b, best_lam = b.copy(), lam_top
        alpha0 = float(np.max(p.b_max - p.b_min)) or 1.0
        for t in range(p.inner_iterations):
            lam_top, grad = lambda_max_subgradient(inc, b)
            b = project_box_hyperplane(
                b - alpha0 / math.sqrt(t + 1.0) * grad, p.b_min, p.b_max, p.costs, p.budget
            )
            lam_new, _ = lambda_max_subgradient(inc, b)
            iterations += 1
            if lam_new < best_lam:
                best_lam, best_b = lam_new, b.copy()
        value = _minmax_value(best_lam, p)
        if best is None or value < best[0] - TIE_TOL:
            best = (value, best_lam, subset, best_b)

    if best is None:
        raise InfeasibleError("no feasible topology (connectivity requirement)")
    value, lam_top, subset, b = best
    lap = np.zeros((n, n))
    for (i, j), be in zip(subset, b):
        lap[i, i] += be
        lap[j, j] += be
        lap[i, j] -= be
        lap[j, i] -= be
    return ScenarioSolution(
        scenario="minmax",
        decision={
            "edges": [[int(i), int(j), float(be)] for (i, j), be in zip(subset, b)],
            "lambda_max": float(lam_top),
        },
        objective_value=value,
        steady_power=lap @ p.theta_star,
        iterations=iterations,
        converged=True,
        certificate="projected subgradient (best iterate) inside exhaustive topology search",
        feasibility={
            "box": float(
                max(np.max(p.b_min - b, initial=0.0), np.max(b - p.b_max, initial=0.0), 0.0)
            ),
            "budget": abs(float(p.costs @ b) - p.budget),
        },
    )


# --------------------------------------------------------------------------
# scenario 4: inertia/damping allocation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AllocationProblem:
    """Converter inertia/damping design with budget, boxes, and power sharing.

    The sharing ratio r = |P*_G,i| / d_G,i of the machines, together with
    power balance, pins the converters' total damping to p_bar / r; the
    inertia budget pins their total inertia to K.  Power variables are then
    determined by the damping values and drop out of the search space.
    """

    converter_indices: tuple[int, ...]
    machine_power: np.ndarray
    machine_damping: np.ndarray
    m_lower: np.ndarray
    m_upper: np.ndarray
    d_lower: np.ndarray
    d_upper: np.ndarray
    budget: float

    def __post_init__(self):
        object.__setattr__(self, "converter_indices", tuple(int(i) for i in self.converter_indices))
        for name in ("machine_power", "machine_damping", "m_lower", "m_upper", "d_lower", "d_upper"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n_c = len(self.converter_indices)
        if n_c < 1:
            raise ValidationError("need at least one converter")
        for name in ("m_lower", "m_upper", "d_lower", "d_upper"):
            if getattr(self, name).shape != (n_c,):
                raise ValidationError(f"{name} must have one entry per converter ({n_c})")
        if self.machine_power.shape != self.machine_damping.shape or self.machine_power.ndim != 1:
            raise ValidationError("machine_power and machine_damping must be 1-D and equal length")
        if self.machine_power.size < 1:
            raise ValidationError("need at least one machine for the sharing ratio")
        if not np.all(self.machine_damping > 0):
            raise ValidationError("machine damping must be > 0")
        if not (np.all(self.m_lower > 0) and np.all(self.d_lower > 0)):
            raise ValidationError("lower bounds must be > 0")
        if not (np.all(self.m_upper >= self.m_lower) and np.all(self.d_upper >= self.d_lower)):
            raise ValidationError("upper bounds must dominate lower bounds")
        if not float(np.sum(self.machine_power)) < 0:
            raise InfeasibleError("total machine steady power must be negative for power balance")
        ratios = np.abs(self.machine_power) / self.machine_damping
        r = float(ratios[0])
        if np.max(np.abs(ratios - r)) > 1e-9 * max(r, 1e-30):
            raise ValidationError(f"machine sharing ratios are inconsistent: {ratios}")
        d_total = self.p_bar / r
        if not (float(np.sum(self.d_lower)) - 1e-9 <= d_total <= float(np.sum(self.d_upper)) + 1e-9):
            raise InfeasibleError(
                f"implied damping total {d_total:.6g} outside [{np.sum(self.d_lower)}, {np.sum(self.d_upper)}]"
            )
        if not (float(np.sum(self.m_lower)) - 1e-9 <= self.budget <= float(np.sum(self.m_upper)) + 1e-9):
            raise InfeasibleError(
                f"inertia budget {self.budget} outside [{np.sum(self.m_lower)}, {np.sum(self.m_upper)}]"
            )

    @property
    def n_converters(self) -> int:
        return len(self.converter_indices)

    @property
    def p_bar(self) -> float:
        return -float(np.sum(self.machine_power))

    @property
    def sharing_ratio(self) -> float:
        return float(np.abs(self.machine_power[0]) / self.machine_damping[0])

    @property
    def damping_total(self) -> float:
        return self.p_bar / self.sharing_ratio


def _allocation_value(net: PowerNetwork) -> float:
    return gramian_of(deflate(assemble(net, build_laplacian(net)))).h2_squared


def allocation_objective(
    net: PowerNetwork, converter_indices
) -> tuple[float, np.ndarray, np.ndarray]:
    """Squared H2 norm of ``net`` and its adjoint gradient wrt converter (m, d).

    One extra Lyapunov solve with the output weight gives the adjoint; each
    parameter then costs a couple of inner products because the drift and
    input matrices depend on m_i and d_i only through row i of their lower
    blocks.
    """
    converter_indices = [int(i) for i in converter_indices]
    spec = build_laplacian(net)
    ss = assemble(net, spec)
    defl = deflate(ss)
    n = net.n
    p_gram = lyapunov_solve(defl.a_r, defl.r_r @ defl.r_r.T)
    value = float(np.sum((defl.c_r @ p_gram) * defl.c_r))
    adj = lyapunov_solve(defl.a_r.T, defl.c_r.T @ defl.c_r)

    pl = p_gram @ adj
    rtl = defl.r_r.T @ adj
    lu = spec.laplacian @ defl.u_basis
    lroot = np.sqrt(net.gamma) * spec.sqrt
    m_vec = net.inertias
    d_vec = net.dampings

    grad_m = np.empty(len(converter_indices))
    grad_d = np.empty(len(converter_indices))
    for k, i in enumerate(converter_indices):
        row = n - 1 + i
        inv_m2 = 1.0 / m_vec[i] ** 2
        # dA/dm_i: row `row`, angle columns lu[i]/m^2 and diagonal d_i/m^2
        tr_a = inv_m2 * (float(lu[i] @ pl[: n - 1, row]) + d_vec[i] * float(pl[row, row]))
        # dR/dm_i: row `row` equals -lroot[i]/m^2
        tr_r = -inv_m2 * float(lroot[i] @ rtl[:, row])
        grad_m[k] = 2.0 * (tr_a + tr_r)
        # dA/dd_i: single entry (row, row) = -1/m_i
        grad_d[k] = -2.0 * float(pl[row, row]) / m_vec[i]
    return value, grad_m, grad_d


def allocation_feasibility(p: AllocationProblem, m_c: np.ndarray, d_c: np.ndarray) -> dict:
    m_c = np.asarray(m_c, dtype=float)
    d_c = np.asarray(d_c, dtype=float)
    box = max(
        float(np.max(p.m_lower - m_c, initial=0.0)),
        float(np.max(m_c - p.m_upper, initial=0.0)),
        float(np.max(p.d_lower - d_c, initial=0.0)),
        float(np.max(d_c - p.d_upper, initial=0.0)),
        0.0,
    )
    return {
        "box": box,
        "inertia_budget": abs(float(np.sum(m_c)) - p.budget),
        "damping_total": abs(float(np.sum(d_c)) - p.damping_total),
        "converter_power": [float(p.sharing_ratio * d) for d in d_c],
    }


def solve_allocation(
    p: AllocationProblem,
    net: PowerNetwork,
    seed: int = 0,
    n_starts: int = 8,
    max_iter: int = 300,
    step_tol: float = 1e-8,
) -> ScenarioSolution:
    """Multi-start projected gradient over the two box-constrained budget slices.

    The objective is not assumed convex in (m, d): the solver runs from a
    uniform split plus seeded random feasible points and reports every local
    solution found, returning the best.
    """
    n_c = p.n_converters
    idx = list(p.converter_indices)
    d_total = p.damping_total
    ones = np.ones(n_c)

    def proj(x):
        m_c = project_box_hyperplane(x[:n_c], p.m_lower, p.m_upper, ones, p.budget)
        d_c = project_box_hyperplane(x[n_c:], p.d_lower, p.d_upper, ones, d_total)
        return np.concatenate([m_c, d_c])

    def fval(x):
        return _allocation_value(replace_node_params(net, dict(zip(idx, zip(x[:n_c], x[n_c:])))))

    def fgrad(x):
        net2 = replace_node_params(net, dict(zip(idx, zip(x[:n_c], x[n_c:]))))
        v, gm, gd = allocation_objective(net2, idx)
        return v, np.concatenate([gm, gd])

    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0x51A27], dtype=np.uint64)))
    starts = [proj(np.concatenate([np.full(n_c, p.budget / n_c), np.full(n_c, d_total / n_c)]))]
    for _ in range(max(0, n_starts - 1)):
        ym = rng.uniform(p.m_lower, p.m_upper)
        yd = rng.uniform(p.d_lower, p.d_upper)
        starts.append(proj(np.concatenate([ym, yd])))

    best_x = None
    best_val = math.inf
    best_conv = False
    best_pg = math.inf
    logs = []
    total_iters = 0
    for s_idx, x0 in enumerate(starts):
        x = x0.copy()
        val, grad = fgrad(x)
        val0 = val
        t = 1.0
        converged = False
        it = 0
        for it in range(1, max_iter + 1):
            x_try = proj(x - t * grad)
            dx = x_try - x
            # Armijo on the projection arc; halve the step until sufficient decrease
            shrink = 0
            while shrink < 40:
                f_try = fval(x_try)
                if f_try <= val + float(grad @ dx) + float(dx @ dx) / (2.0 * t):
                    break
                t *= 0.5
                shrink += 1
                x_try = proj(x - t * grad)
                dx = x_try - x
            step_norm = float(np.linalg.norm(dx))
            x = x_try
            val, grad = fgrad(x)
            t = min(t * 1.3, 1e6)
            if step_norm <= step_tol * max(1.0, float(np.linalg.norm(x))):
                converged = True
                break
        total_iters += it
        pg = float(np.linalg.norm(x - proj(x - grad)))
        logs.append(
            {
                "start": s_idx,
                "initial_objective": float(val0),
                "objective": float(val),
                "iterations": it,
                "converged": bool(converged),
            }
        )
        if val < best_val - TIE_TOL:
            best_val, best_x, best_conv, best_pg = val, x.copy(), converged, pg

    m_c, d_c = best_x[:n_c], best_x[n_c:]
    lap = build_laplacian(net).laplacian
    return ScenarioSolution(
        scenario="allocation",
        decision={
            "converter_indices": [int(i) for i in idx],
            "inertia": [float(v) for v in m_c],
            "damping": [float(v) for v in d_c],
            "converter_power": [float(p.sharing_ratio * v) for v in d_c],
        },
        objective_value=float(best_val),
        steady_power=lap @ net.angles_star,
        iterations=total_iters,
        converged=bool(best_conv),
        certificate=f"multi-start projected gradient; best projected-gradient norm {best_pg:.3e}",
        feasibility=allocation_feasibility(p, m_c, d_c),
        starts=tuple(logs),
    )


def uniform_allocation(p: AllocationProblem) -> tuple[np.ndarray, np.ndarray]:
    """Feasible uniform split of the budgets (projection of the equal division)."""
    n_c = p.n_converters
    ones = np.ones(n_c)
    m_c = project_box_hyperplane(np.full(n_c, p.budget / n_c), p.m_lower, p.m_upper, ones, p.budget)
    d_c = project_box_hyperplane(
        np.full(n_c, p.damping_total / n_c), p.d_lower, p.d_upper, ones, p.damping_total
    )
    return m_c, d_c


def allocation_value_at(p: AllocationProblem, net: PowerNetwork, m_c, d_c) -> float:
    """Objective of an explicit allocation (used for uniform-vs-optimal reports)."""
    updates = dict(zip(p.converter_indices, zip(np.asarray(m_c, float), np.asarray(d_c, float))))
    return _allocation_value(replace_node_params(net, updates))
