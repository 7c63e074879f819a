"""gridnorm: H2 performance of stochastic power networks, by analysis,
simulation and design optimization.

The library models linearized swing dynamics of heterogeneous generation
units (machines and grid-forming converters) driven by spatially correlated
noise, computes the squared H2 norm through controllability Gramians and a
spectral closed form, validates it by seeded Euler-Maruyama simulation, and
solves four network-design scenarios (susceptance allocation, node-edge
assignment, min-max design, inertia/damping allocation).
"""

from .errors import (
    DisconnectedNetworkError,
    GridNormError,
    InfeasibleError,
    InsufficientSamplesError,
    NonZeroFirstEigenvalueError,
    NotHurwitzError,
    NumericalFailureError,
    TooLargeError,
    UnstableStepError,
    ValidationError,
)
from .network import (
    Edge,
    Node,
    PowerNetwork,
    SpectralData,
    build_incidence,
    build_laplacian,
    is_connected,
    replace_node_params,
)
from .dynamics import DeflatedSystem, StateSpace, assemble, deflate, helmert_basis
from .gramian import (
    GramianResult,
    H2Bounds,
    closed_form_h2,
    h2_bounds,
    h2_norm,
    lyapunov_solve,
    lyapunov_solve_kron,
    mode_centrality,
)
from .simulate import (
    InitialCondition,
    SimulationConfig,
    SimulationEnsemble,
    empirical_h2,
    euler_maruyama,
    exact_discretization,
    sample_initial,
)
from .optimize import (
    AllocationProblem,
    AssignmentProblem,
    MinMaxProblem,
    ScenarioSolution,
    SusceptanceProblem,
    allocation_objective,
    solve_allocation,
    solve_assignment,
    solve_minmax,
    solve_susceptance,
    spectral_objective,
)

__version__ = "0.1.0"

__all__ = [
    "DisconnectedNetworkError",
    "GridNormError",
    "InfeasibleError",
    "InsufficientSamplesError",
    "NonZeroFirstEigenvalueError",
    "NotHurwitzError",
    "NumericalFailureError",
    "TooLargeError",
    "UnstableStepError",
    "ValidationError",
    "Edge",
    "Node",
    "PowerNetwork",
    "SpectralData",
    "build_incidence",
    "build_laplacian",
    "is_connected",
    "replace_node_params",
    "DeflatedSystem",
    "StateSpace",
    "assemble",
    "deflate",
    "helmert_basis",
    "GramianResult",
    "H2Bounds",
    "closed_form_h2",
    "h2_bounds",
    "h2_norm",
    "lyapunov_solve",
    "lyapunov_solve_kron",
    "mode_centrality",
    "InitialCondition",
    "SimulationConfig",
    "SimulationEnsemble",
    "empirical_h2",
    "euler_maruyama",
    "exact_discretization",
    "sample_initial",
    "AllocationProblem",
    "AssignmentProblem",
    "MinMaxProblem",
    "ScenarioSolution",
    "SusceptanceProblem",
    "allocation_objective",
    "solve_allocation",
    "solve_assignment",
    "solve_minmax",
    "solve_susceptance",
    "spectral_objective",
]
