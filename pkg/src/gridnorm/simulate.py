"""Monte-Carlo simulation of the swing SDE and empirical output statistics.

Trajectories are driven by spatially correlated noise (the input matrix
carries the Laplacian square-root factor) from Gaussian random initial
conditions.  The time-and-ensemble average of |y|^2 after a burn-in window
estimates the analytic squared H2 norm.

Schemes: explicit Euler-Maruyama (default) and the exact Gaussian one-step
discretization (matrix exponential + discrete noise covariance) for bias-free
validation.

Reproducibility: trial t draws noise from a counter-based Philox stream keyed
(seed, 2t) and its initial condition from (seed, 2t+1), so results are
independent of chunking and worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels
from .dynamics import StateSpace, deflate
from .errors import InsufficientSamplesError, UnstableStepError, ValidationError
from .network import _readonly

SCHEMES = ("em", "exact")

# chunk/block sizing: bound the per-chunk noise buffer to ~64 MB of float64
_MAX_BUFFER_DOUBLES = 8_000_000
_MAX_CHUNK_TRIALS = 512


@dataclass(frozen=True)
class InitialCondition:
    """Gaussian initial state: mean xi0 and covariance factor S (cov = S S^T)."""

    mean: np.ndarray
    cov_factor: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov_factor, dtype=float)
        if mean.ndim != 1 or mean.size % 2 != 0 or mean.size == 0:
            raise ValidationError(f"initial-condition mean must have even length 2n, got shape {mean.shape}")
        if cov.shape != (mean.size, mean.size):
            raise ValidationError(
                f"cov_factor must be {mean.size}x{mean.size} to match the mean, got {cov.shape}"
            )
        object.__setattr__(self, "mean", _readonly(mean))
        object.__setattr__(self, "cov_factor", _readonly(cov))

    @classmethod
    def zero(cls, n: int) -> "InitialCondition":
        return cls(mean=np.zeros(2 * n), cov_factor=np.zeros((2 * n, 2 * n)))

    @classmethod
    def scaled_identity(
        cls, n: int, theta_sigma: float, omega_sigma: float, mean=None
    ) -> "InitialCondition":
        """Block-diagonal factor: theta_sigma on the angle block, omega_sigma on the frequency block."""
        diag = np.concatenate([np.full(n, float(theta_sigma)), np.full(n, float(omega_sigma))])
        mean = np.zeros(2 * n) if mean is None else np.asarray(mean, dtype=float)
        return cls(mean=mean, cov_factor=np.diag(diag))


@dataclass(frozen=True)
class SimulationConfig:
    """Step size, horizon, burn-in, trial count, seed and scheme of one run.

    ``store_every``/``store_trials`` bound the retained trajectory data
    (statistics always use every step of every trial); None picks defaults of
    at most ~2000 stored points and 8 stored trials.
    """

    dt: float = 1e-3
    horizon: float = 40.0
    burn_in: float = 20.0
    trials: int = 2000
    seed: int = 0
    scheme: str = "em"
    store_every: int | None = None
    store_trials: int | None = None

    def __post_init__(self):
        if not self.dt > 0 or not self.horizon > 0:
            raise ValidationError("dt and horizon must be positive")
        if self.dt > self.horizon / 100.0:
            raise ValidationError(f"dt={self.dt} too coarse: need dt <= horizon/100 = {self.horizon / 100.0}")
        if not 0 <= self.burn_in < self.horizon:
            raise ValidationError(f"burn_in must lie in [0, horizon), got {self.burn_in}")
        if int(self.trials) < 1:
            raise ValidationError("trials must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must fit in an unsigned 64-bit integer")
        if self.scheme not in SCHEMES:
            raise ValidationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.store_every is not None and int(self.store_every) < 1:
            raise ValidationError("store_every must be >= 1 when given")
        if self.store_trials is not None and int(self.store_trials) < 0:
            raise ValidationError("store_trials must be >= 0 when given")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def burn_index(self) -> int:
        return int(np.ceil(self.burn_in / self.dt - 1e-9))

    def resolved_store_every(self) -> int:
        return int(self.store_every) if self.store_every is not None else max(1, self.steps // 2000)

    def resolved_store_trials(self) -> int:
        cap = int(self.store_trials) if self.store_trials is not None else 8
        return min(int(self.trials), cap)

    def to_json_dict(self) -> dict:
        return {
            "dt": self.dt,
            "horizon": self.horizon,
            "burn_in": self.burn_in,
            "trials": int(self.trials),
            "seed": int(self.seed),
            "scheme": self.scheme,
            "store_every": self.resolved_store_every(),
            "store_trials": self.resolved_store_trials(),
        }


@dataclass(frozen=True)
class SimulationEnsemble:
    """Seeded trajectory ensemble with empirical output-energy statistics."""

    time_grid: np.ndarray
    trajectories: np.ndarray = field(repr=False)
    per_trial_time_avg: np.ndarray = field(repr=False)
    stored_trial_indices: tuple[int, ...]
    empirical_h2_squared: float
    empirical_h2_stderr: float
    n_nodes: int
    config: SimulationConfig

    def __post_init__(self):
        object.__setattr__(self, "time_grid", _readonly(self.time_grid))
        object.__setattr__(self, "trajectories", _readonly(self.trajectories))
        object.__setattr__(self, "per_trial_time_avg", _readonly(self.per_trial_time_avg))

    @property
    def angles(self) -> np.ndarray:
        return self.trajectories[:, :, : self.n_nodes]

    @property
    def frequencies(self) -> np.ndarray:
        return self.trajectories[:, :, self.n_nodes :]


def noise_stream(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, 2 * trial], dtype=np.uint64)))


def initial_stream(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, 2 * trial + 1], dtype=np.uint64)))


def sample_initial(ic: InitialCondition, rng: np.random.Generator) -> np.ndarray:
    """One draw x0 = mean + cov_factor @ z with z standard normal."""
    z = rng.standard_normal(ic.mean.size)
    return ic.mean + ic.cov_factor @ z


def exact_discretization(a: np.ndarray, q: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """One-step transition matrix and noise-covariance factor of the exact scheme.

    Uses the block matrix exponential of [[-a, q], [0, a^T]] * dt (Van Loan):
    the lower-right block transposed is e^(a dt) and the product with the
    upper-right block recovers the integrated covariance, factored here
    through a clamped eigendecomposition.
    """
    d = a.shape[0]
    blk = np.zeros((2 * d, 2 * d))
    blk[:d, :d] = -a
    blk[:d, d:] = q
    blk[d:, d:] = a.T
    f = scipy.linalg.expm(blk * dt)
    ad = f[d:, d:].T
    qd = ad @ f[:d, d:]
    qd = 0.5 * (qd + qd.T)
    w, v = np.linalg.eigh(qd)
    w = np.clip(w, 0.0, None)
    sd = (v * np.sqrt(w)) @ v.T
    return ad, 0.5 * (sd + sd.T)


def _one_step_matrices(ss: StateSpace, cfg: SimulationConfig) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(ss.a)
    if cfg.scheme == "exact":
        return exact_discretization(a, ss.r @ ss.r.T, cfg.dt)
    trans = np.eye(a.shape[0]) + cfg.dt * a
    gmat = np.sqrt(cfg.dt) * np.asarray(ss.r)
    defl = deflate(ss)
    radius = float(np.max(np.abs(np.linalg.eigvals(np.eye(defl.a_r.shape[0]) + cfg.dt * defl.a_r))))
    if radius >= 1.0:
        raise UnstableStepError(
            f"explicit step unstable: spectral radius {radius:.6f} >= 1 at dt={cfg.dt}; reduce dt"
        )
    return trans, gmat


def euler_maruyama(ss: StateSpace, ic: InitialCondition, cfg: SimulationConfig) -> SimulationEnsemble:
    """Simulate the ensemble and record strided trajectories plus |y|^2 averages."""
    n = ss.n
    d = 2 * n
    if ic.mean.size != d:
        raise ValidationError(f"initial condition has dimension {ic.mean.size}, state needs {d}")
    trans, gmat = _one_step_matrices(ss, cfg)
    trans = np.ascontiguousarray(trans)
    gmat = np.ascontiguousarray(gmat)
    cmat = np.ascontiguousarray(ss.c)
    q = gmat.shape[1]

    steps = cfg.steps
    burn_idx = cfg.burn_index
    store_every = cfg.resolved_store_every()
    n_store = cfg.resolved_store_trials()
    n_rows = steps // store_every + 1
    trials = int(cfg.trials)

    traj = np.zeros((n_store, n_rows, d))
    avgs = np.empty(trials)
    n_avg = steps - burn_idx + 1

    blk_max = max(1, min(steps, _MAX_BUFFER_DOUBLES // max(1, _MAX_CHUNK_TRIALS * q)))
    for chunk_start in range(0, trials, _MAX_CHUNK_TRIALS):
        chunk_end = min(chunk_start + _MAX_CHUNK_TRIALS, trials)
        c = chunk_end - chunk_start
        noise_gens = [noise_stream(cfg.seed, t) for t in range(chunk_start, chunk_end)]
        xt = np.empty((d, c))  # one column per trial
        for ii, t in enumerate(range(chunk_start, chunk_end)):
            xt[:, ii] = sample_initial(ic, initial_stream(cfg.seed, t))
        acc = np.zeros(c)

        n_store_c = max(0, min(chunk_end, n_store) - chunk_start)
        traj_view = traj[chunk_start : chunk_start + n_store_c] if n_store_c > 0 else traj[:0]

        # state index k = 0: stored row 0, and included in the average when burn_in == 0
        if n_store_c > 0:
            traj_view[:, 0, :] = xt[:, :n_store_c].T
        if burn_idx == 0:
            y0 = cmat @ xt
            acc += np.sum(y0 * y0, axis=0)

        k0 = 0
        while k0 < steps:
            blk = min(blk_max, steps - k0)
            dwt = np.empty((blk, q, c))
            for ii in range(c):
                dwt[:, :, ii] = noise_gens[ii].standard_normal((blk, q))
            _kernels.step_block(
                xt, trans, gmat, dwt, cmat, acc, k0, burn_idx, store_every, traj_view, n_store_c
            )
            k0 += blk

        avgs[chunk_start:chunk_end] = acc / n_avg

    if trials >= 2:
        est = float(np.mean(avgs))
        err = float(np.std(avgs, ddof=1) / np.sqrt(trials))
    else:
        est, err = float(avgs[0]), float("inf")

    return SimulationEnsemble(
        time_grid=np.arange(0, steps + 1, store_every) * cfg.dt,
        trajectories=traj,
        per_trial_time_avg=avgs,
        stored_trial_indices=tuple(range(n_store)),
        empirical_h2_squared=est,
        empirical_h2_stderr=err,
        n_nodes=n,
        config=cfg,
    )


def empirical_h2(ens: SimulationEnsemble) -> tuple[float, float]:
    """Ensemble estimate of lim E[y^T y] and its standard error.

    The estimate averages each trial's time average of |y|^2 over the
    post-burn-in window; the standard error comes from the between-trial
    variance of those per-trial averages.
    """
    avgs = ens.per_trial_time_avg
    if avgs.size < 2:
        raise InsufficientSamplesError("need at least 2 trials for a standard error")
    return float(np.mean(avgs)), float(np.std(avgs, ddof=1) / np.sqrt(avgs.size))


def initial_condition_from_json(data: dict, n: int) -> InitialCondition:
    """Parse the network JSON's optional initial_condition block."""
    if not isinstance(data, dict):
        raise ValidationError("initial_condition must be an object")
    d = 2 * n
    mean = np.asarray(data.get("mean", np.zeros(d)), dtype=float)
    cov = data.get("cov_factor")
    if cov is None:
        cov_arr = np.zeros((d, d))
    elif isinstance(cov, dict) and "scaled_identity" in cov:
        si = cov["scaled_identity"]
        try:
            return InitialCondition.scaled_identity(
                n, float(si["theta_sigma"]), float(si["omega_sigma"]), mean=mean
            )
        except KeyError as exc:
            raise ValidationError(f"scaled_identity missing key {exc.args[0]!r}") from exc
    else:
        cov_arr = np.asarray(cov, dtype=float)
        if cov_arr.ndim == 1:
            if cov_arr.size != d * d:
                raise ValidationError(f"flat cov_factor must have {d * d} entries, got {cov_arr.size}")
            cov_arr = cov_arr.reshape(d, d)
    return InitialCondition(mean=mean, cov_factor=cov_arr)
