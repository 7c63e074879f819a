"""State-space assembly of the linearized swing SDE and its Hurwitz deflation.

The full drift matrix is marginally stable: the uniform angle shift is a zero
eigenvalue, and it is uncontrollable because the noise input lives in the range
of the Laplacian square root.  Removing that mode (deflation) yields a Hurwitz
realization with the same output statistics, which is what the Lyapunov-based
norm computation requires.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DisconnectedNetworkError, NotHurwitzError
from .network import PowerNetwork, SpectralData, ZERO_EIG_RTOL, _readonly

# Spectral abscissa above this value signals degenerate parameters rather than
# round-off on a genuinely stable realization.
HURWITZ_TOL = -1e-9


@dataclass(frozen=True)
class StateSpace:
    """Drift, noise-input and output matrices of the linear swing SDE."""

    a: np.ndarray = field(repr=False)
    r: np.ndarray = field(repr=False)
    c: np.ndarray = field(repr=False)
    m_diag: np.ndarray
    d_diag: np.ndarray

    def __post_init__(self):
        for name in ("a", "r", "c", "m_diag", "d_diag"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def n(self) -> int:
        return self.m_diag.shape[0]

    @property
    def laplacian(self) -> np.ndarray:
        return self.c[: self.n, : self.n]


@dataclass(frozen=True)
class DeflatedSystem:
    """Hurwitz realization with the uniform-angle mode removed.

    The angle block is reduced to coordinates in the orthogonal complement of
    the all-ones vector (basis ``u_basis``); the frequency block stays full,
    so outputs are reproduced exactly.
    """

    u_basis: np.ndarray = field(repr=False)
    a_r: np.ndarray = field(repr=False)
    r_r: np.ndarray = field(repr=False)
    c_r: np.ndarray = field(repr=False)
    spectral_abscissa: float

    def __post_init__(self):
        for name in ("u_basis", "a_r", "r_r", "c_r"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))


def helmert_basis(n: int) -> np.ndarray:
    """Deterministic orthonormal basis of the orthogonal complement of ones(n).

    Column k (1-based) has k entries 1/sqrt(k(k+1)) followed by -k/sqrt(k(k+1))
    and zeros.  Closed-form and platform-independent, unlike a randomized QR.
    """
    u = np.zeros((n, n - 1))
    for k in range(1, n):
        s = 1.0 / np.sqrt(k * (k + 1.0))
        u[:k, k - 1] = s
        u[k, k - 1] = -k * s
    return u


def assemble(net: PowerNetwork, spec: SpectralData) -> StateSpace:
    """State-space matrices of the noise-driven small-signal model.

    A = [[0, I], [-M^-1 L, -M^-1 D]],  R = [0; M^-1 sqrt(gamma) L^(1/2)],
    C = [[L, 0], [0, I]].
    """
    n = net.n
    m = net.inertias
    d = net.dampings
    lap = spec.laplacian

    a = np.zeros((2 * n, 2 * n))
    a[:n, n:] = np.eye(n)
    a[n:, :n] = -lap / m[:, None]
    a[n:, n:] = -np.diag(d / m)

    r = np.zeros((2 * n, n))
    r[n:, :] = np.sqrt(net.gamma) * spec.sqrt / m[:, None]

    c = np.zeros((2 * n, 2 * n))
    c[:n, :n] = lap
    c[n:, n:] = np.eye(n)

    return StateSpace(a=a, r=r, c=c, m_diag=m, d_diag=d)


def deflate(ss: StateSpace) -> DeflatedSystem:
    """Remove the uncontrollable uniform-angle mode from a swing state-space.

    Raises DisconnectedNetworkError when the Laplacian has more than one zero
    eigenvalue (the reduction removes exactly one), and NotHurwitzError when
    the reduced drift is not safely stable.
    """
    n = ss.n
    lap = ss.laplacian
    lam = np.linalg.eigvalsh(lap)
    lam_max = max(float(lam[-1]), 1.0)
    n_zero = int(np.sum(np.abs(lam) <= ZERO_EIG_RTOL * lam_max))
    if n_zero != 1:
        raise DisconnectedNetworkError(
            f"Laplacian has {n_zero} zero eigenvalues; the network must be connected"
        )

    u = helmert_basis(n)
    m = ss.m_diag
    a_r = np.zeros((2 * n - 1, 2 * n - 1))
    a_r[: n - 1, n - 1 :] = u.T
    a_r[n - 1 :, : n - 1] = -(lap @ u) / m[:, None]
    a_r[n - 1 :, n - 1 :] = ss.a[n:, n:]

    r_r = np.zeros((2 * n - 1, n))
    r_r[n - 1 :, :] = ss.r[n:, :]

    c_r = np.zeros((2 * n, 2 * n - 1))
    c_r[:n, : n - 1] = lap @ u
    c_r[n:, n - 1 :] = np.eye(n)

    abscissa = float(np.max(np.linalg.eigvals(a_r).real))
    if abscissa >= HURWITZ_TOL:
        raise NotHurwitzError(
            f"deflated drift has spectral abscissa {abscissa:.3e} >= {HURWITZ_TOL:.0e}"
        )
    return DeflatedSystem(u_basis=u, a_r=a_r, r_r=r_r, c_r=c_r, spectral_abscissa=abscissa)
