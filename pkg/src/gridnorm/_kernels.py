"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Backend selection: set GRIDNORM_BACKEND=numpy to force the fallback, or
GRIDNORM_BACKEND=numba to require the jitted path (ImportError if numba is
missing).  Unset/auto uses numba when importable.  Both implementations of a
kernel compute the same recurrence; they may differ in the last floating-point
ulp because of summation order, never in semantics.

The SDE stepping kernel keeps the trial axis innermost (states are stored
transposed, one column per trial) so the jitted loops vectorize across the
ensemble and the fallback spends its time in batched BLAS calls.

benchmarks/bench_kernels.py times the two paths side by side.
"""

from __future__ import annotations

import os

import numpy as np

_ENV_VAR = "GRIDNORM_BACKEND"


def _requested_backend() -> str:
    val = os.environ.get(_ENV_VAR, "auto").strip().lower() or "auto"
    if val not in ("auto", "numba", "numpy"):
        raise ValueError(f"{_ENV_VAR} must be 'numba', 'numpy' or unset, got {val!r}")
    return val


# --------------------------------------------------------------------------
# pure-numpy implementations
# --------------------------------------------------------------------------


def _step_block_numpy(xt, trans, gmat, dwt, cmat, acc, k0, burn_idx, store_every, traj, n_store):
    """Advance a block of SDE steps for a chunk of trials (one column each).

    xt         (d, c)        states, updated in place
    trans      (d, d)        one-step transition matrix
    gmat       (d, q)        per-step noise input matrix
    dwt        (blk, q, c)   noise draws for this block
    cmat       (d, d)        output matrix; acc[i] += |cmat @ x_i|^2 in the window
    acc        (c,)          per-trial output-energy accumulator, in place
    k0         int           global step index of the state on entry
    burn_idx   int           first state index included in the average
    store_every int          trajectory stride (0 disables storage)
    traj       (n_store, n_rows, d)  strided trajectory store, in place
    """
    blk = dwt.shape[0]
    for b in range(blk):
        k = k0 + b + 1
        xt[:] = trans @ xt + gmat @ dwt[b]
        if k >= burn_idx:
            y = cmat @ xt
            acc += np.sum(y * y, axis=0)
        if store_every > 0 and k % store_every == 0:
            traj[:, k // store_every, :] = xt[:, :n_store].T


def _trace_square_batch_numpy(iarr, jarr, bvals, out):
    """trace(L^2) for a batch of candidate edge sets given as node-index pairs.

    iarr, jarr (k, m) int64; bvals (k, m); out (k,) filled in place.
    Uses trace(L^2) = sum_{e,f} b_e b_f (a_e . a_f)^2 with unit-incidence
    columns: the diagonal contributes 4 b_e^2, edge pairs sharing one node
    contribute 2 b_e b_f.
    """
    m = iarr.shape[1]
    out[:] = 4.0 * np.sum(bvals * bvals, axis=1)
    for e in range(m):
        for f in range(e + 1, m):
            shared = (
                (iarr[:, e] == iarr[:, f])
                | (iarr[:, e] == jarr[:, f])
                | (jarr[:, e] == iarr[:, f])
                | (jarr[:, e] == jarr[:, f])
            )
            out += np.where(shared, 2.0 * bvals[:, e] * bvals[:, f], 0.0)


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------


def _build_numba_impls():
    from numba import njit

    @njit(cache=True, fastmath=True)
    def step_block(xt, trans, gmat, dwt, cmat, acc, k0, burn_idx, store_every, traj, n_store):
        d, c = xt.shape
        blk, q = dwt.shape[0], dwt.shape[1]
        xnew = np.empty((d, c))
        tmp = np.empty(c)
        for b in range(blk):
            k = k0 + b + 1
            for r in range(d):
                row = xnew[r]
                for i in range(c):
                    row[i] = 0.0
                for t in range(d):
                    a = trans[r, t]
                    xrow = xt[t]
                    for i in range(c):
                        row[i] += a * xrow[i]
                for t in range(q):
                    g = gmat[r, t]
                    wrow = dwt[b, t]
                    for i in range(c):
                        row[i] += g * wrow[i]
            for r in range(d):
                for i in range(c):
                    xt[r, i] = xnew[r, i]
            if k >= burn_idx:
                for r in range(d):
                    for i in range(c):
                        tmp[i] = 0.0
                    for t in range(d):
                        cc = cmat[r, t]
                        xrow = xt[t]
                        for i in range(c):
                            tmp[i] += cc * xrow[i]
                    for i in range(c):
                        acc[i] += tmp[i] * tmp[i]
            if store_every > 0 and k % store_every == 0:
                row_idx = k // store_every
                for i in range(n_store):
                    for r in range(d):
                        traj[i, row_idx, r] = xt[r, i]

    @njit(cache=True)
    def trace_square_batch(iarr, jarr, bvals, out):
        k, m = iarr.shape
        for t in range(k):
            s = 0.0
            for e in range(m):
                s += 4.0 * bvals[t, e] * bvals[t, e]
            for e in range(m):
                for f in range(e + 1, m):
                    if (
                        iarr[t, e] == iarr[t, f]
                        or iarr[t, e] == jarr[t, f]
                        or jarr[t, e] == iarr[t, f]
                        or jarr[t, e] == jarr[t, f]
                    ):
                        s += 2.0 * bvals[t, e] * bvals[t, f]
            out[t] = s

    return {"step_block": step_block, "trace_square_batch": trace_square_batch}


_NUMPY_IMPLS = {
    "step_block": _step_block_numpy,
    "trace_square_batch": _trace_square_batch_numpy,
}

_req = _requested_backend()
if _req == "numpy":
    BACKEND = "numpy"
    _NUMBA_IMPLS = None
else:
    try:
        _NUMBA_IMPLS = _build_numba_impls()
        BACKEND = "numba"
    except ImportError:
        if _req == "numba":
            raise
        _NUMBA_IMPLS = None
        BACKEND = "numpy"

_ACTIVE = _NUMBA_IMPLS if BACKEND == "numba" else _NUMPY_IMPLS

step_block = _ACTIVE["step_block"]
trace_square_batch = _ACTIVE["trace_square_batch"]


def available_backends() -> tuple[str, ...]:
    return ("numba", "numpy") if _NUMBA_IMPLS is not None else ("numpy",)


def get_impl(kernel: str, backend: str):
    """Fetch a specific backend's kernel (for cross-checks and benchmarks)."""
    if backend == "numpy":
        return _NUMPY_IMPLS[kernel]
    if backend == "numba":
        if _NUMBA_IMPLS is None:
            raise ImportError("numba backend unavailable (not installed or disabled via GRIDNORM_BACKEND)")
        return _NUMBA_IMPLS[kernel]
    raise ValueError(f"unknown backend {backend!r}")
