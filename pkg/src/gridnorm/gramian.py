"""Controllability Gramians, the squared H2 norm, and its spectral closed form.

The squared H2 norm of the noise-driven swing model is the steady-state
expected output energy, trace(C P C^T) with P the controllability Gramian of
the deflated realization.  For homogeneous inertia m and damping d the norm
has the closed form

    gamma/(2 d) * sum_{i>=2} (lambda_i^2 + lambda_i / m)

over the nonzero Laplacian eigenvalues, which also yields computable lower and
upper bounds for heterogeneous parameters by plugging in the componentwise
extrema of (m, d).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dynamics import DeflatedSystem, assemble, deflate
from .errors import (
    DisconnectedNetworkError,
    NonZeroFirstEigenvalueError,
    NotHurwitzError,
    NumericalFailureError,
)
from .network import PowerNetwork, SpectralData, ZERO_EIG_RTOL, _readonly, build_laplacian

LYAP_RESIDUAL_RTOL = 1e-8


@dataclass(frozen=True)
class GramianResult:
    """Controllability Gramian of the deflated system and the scalar squared H2 norm."""

    gramian: np.ndarray = field(repr=False)
    h2_squared: float
    residual: float

    def __post_init__(self):
        object.__setattr__(self, "gramian", _readonly(self.gramian))


@dataclass(frozen=True)
class H2Bounds:
    """Closed-form bracket of the heterogeneous squared H2 norm.

    ``lower`` evaluates the homogeneous closed form at the parameter maxima,
    ``upper`` at the minima; ``gap_estimate`` bounds their difference in terms
    of the Laplacian spectrum and the parameter spreads.
    """

    lower: float
    upper: float
    m_max: float
    m_min: float
    d_max: float
    d_min: float
    gap_estimate: float


def lyapunov_solve(a: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Solve a P + P a^T = -q for symmetric PSD q and Hurwitz a.

    Uses the Schur-factorization (Bartels-Stewart) solver; the result is
    symmetrized and its residual checked against LYAP_RESIDUAL_RTOL.
    """
    a = np.asarray(a, dtype=float)
    q = np.asarray(q, dtype=float)
    abscissa = float(np.max(np.linalg.eigvals(a).real))
    if abscissa >= 0.0:
        raise NotHurwitzError(f"spectral abscissa {abscissa:.3e} >= 0; Lyapunov solve needs a Hurwitz matrix")
    try:
        p = scipy.linalg.solve_continuous_lyapunov(a, -q)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailureError(f"Lyapunov solve failed: {exc}") from exc
    p = 0.5 * (p + p.T)
    q_norm = float(np.linalg.norm(q))
    res = float(np.linalg.norm(a @ p + p @ a.T + q))
    if not np.isfinite(res) or res > LYAP_RESIDUAL_RTOL * max(1.0, q_norm):
        raise NumericalFailureError(
            f"Lyapunov residual {res:.3e} exceeds {LYAP_RESIDUAL_RTOL:.0e} * max(1, |q|)"
        )
    return p


def lyapunov_solve_kron(a: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Dense Kronecker-lift solve of a P + P a^T = -q; O(n^6) oracle for small n."""
    a = np.asarray(a, dtype=float)
    q = np.asarray(q, dtype=float)
    n = a.shape[0]
    eye = np.eye(n)
    k = np.kron(a, eye) + np.kron(eye, a)
    p = np.linalg.solve(k, -q.reshape(-1)).reshape(n, n)
    return 0.5 * (p + p.T)


def gramian_of(defl: DeflatedSystem) -> GramianResult:
    """Gramian and squared H2 norm of a deflated realization."""
    q = defl.r_r @ defl.r_r.T
    p = lyapunov_solve(defl.a_r, q)
    h2 = float(np.sum((defl.c_r @ p) * defl.c_r))
    q_norm = float(np.linalg.norm(q))
    res = float(np.linalg.norm(defl.a_r @ p + p @ defl.a_r.T + q))
    residual = res / q_norm if q_norm > 0 else res
    return GramianResult(gramian=p, h2_squared=h2, residual=residual)


def h2_norm(net: PowerNetwork) -> GramianResult:
    """Squared H2 norm of a connected network via the Lyapunov route."""
    spec = build_laplacian(net)
    ss = assemble(net, spec)
    defl = deflate(ss)
    return gramian_of(defl)


def closed_form_h2(
    laplacian_eigenvalues: np.ndarray, m: float, d: float, gamma: float
) -> float:
    """Homogeneous-parameter squared H2 norm from the Laplacian spectrum.

    Expects eigenvalues sorted non-decreasing with a single leading zero; that
    zero mode is skipped and every other eigenvalue contributes
    lambda^2 + lambda/m, scaled by gamma/(2 d).
    """
    lam = np.asarray(laplacian_eigenvalues, dtype=float)
    if lam.size == 0:
        raise NonZeroFirstEigenvalueError("empty spectrum")
    lam_max = max(float(lam[-1]), 1.0)
    if lam[0] > ZERO_EIG_RTOL * lam_max:
        raise NonZeroFirstEigenvalueError(
            f"first eigenvalue {lam[0]:.3e} is not zero; pass the full spectrum of a connected Laplacian"
        )
    rest = lam[1:]
    return float(gamma / (2.0 * d) * np.sum(rest**2 + rest / m))


def _spectral_or_raise(net: PowerNetwork) -> SpectralData:
    spec = build_laplacian(net)
    if spec.zero_eigenvalue_count() != 1:
        raise DisconnectedNetworkError(
            f"Laplacian has {spec.zero_eigenvalue_count()} zero eigenvalues; network must be connected"
        )
    return spec


def h2_bounds(net: PowerNetwork) -> H2Bounds:
    """Closed-form lower/upper bounds on the heterogeneous squared H2 norm."""
    spec = _spectral_or_raise(net)
    lam = spec.eigenvalues
    m = net.inertias
    d = net.dampings
    m_max, m_min = float(m.max()), float(m.min())
    d_max, d_min = float(d.max()), float(d.min())
    lower = closed_form_h2(lam, m_max, d_max, net.gamma)
    upper = closed_form_h2(lam, m_min, d_min, net.gamma)
    delta_d = d_max - d_min
    delta_md = d_max * m_max - m_min * d_min
    lam_pos = np.maximum(lam, 0.0)
    gap = net.gamma / (2.0 * d_max * d_min) * (
        delta_d * float(np.sum(lam_pos**2))
        + delta_md / (m_min * m_max) * float(np.sum(lam_pos))
    )
    return H2Bounds(
        lower=lower,
        upper=upper,
        m_max=m_max,
        m_min=m_min,
        d_max=d_max,
        d_min=d_min,
        gap_estimate=gap,
    )


def mode_centrality(net: PowerNetwork, m: float, d: float) -> np.ndarray:
    """Average-controllability centrality of each oscillatory mode.

    Returns f_i = gamma/d * lambda_i * (lambda_i + 1/m) for the nonzero
    Laplacian eigenvalues in ascending order; half their sum equals the
    homogeneous closed-form norm at (m, d).
    """
    spec = _spectral_or_raise(net)
    lam = spec.eigenvalues[1:]
    return net.gamma / d * (lam**2 + lam / m)
