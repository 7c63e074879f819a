import itertools
import subprocess
import sys

import numpy as np
import pytest

from gridnorm import _kernels

NUMBA_AVAILABLE = "numba" in _kernels.available_backends()

needs_numba = pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba backend unavailable")


def _step_inputs(seed, c=37, d=6, q=3, blk=400):
    rng = np.random.default_rng(seed)
    xt = np.ascontiguousarray(rng.standard_normal((d, c)))
    trans = np.eye(d) + 1e-3 * rng.standard_normal((d, d))
    gmat = 0.05 * rng.standard_normal((d, q))
    cmat = rng.standard_normal((d, d))
    dwt = np.ascontiguousarray(rng.standard_normal((blk, q, c)))
    traj = np.zeros((5, blk // 7 + 1, d))
    acc = np.zeros(c)
    return xt, trans, gmat, dwt, cmat, acc, traj


@needs_numba
def test_step_block_backends_agree():
    for seed in range(5):
        xt, trans, gmat, dwt, cmat, acc, traj = _step_inputs(seed)
        x_nb, a_nb, t_nb = xt.copy(), acc.copy(), traj.copy()
        x_np, a_np, t_np = xt.copy(), acc.copy(), traj.copy()
        _kernels.get_impl("step_block", "numba")(x_nb, trans, gmat, dwt, cmat, a_nb, 0, 100, 7, t_nb, 5)
        _kernels.get_impl("step_block", "numpy")(x_np, trans, gmat, dwt, cmat, a_np, 0, 100, 7, t_np, 5)
        np.testing.assert_allclose(x_nb, x_np, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(a_nb, a_np, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(t_nb, t_np, rtol=1e-10, atol=1e-12)


def test_step_block_matches_naive_recurrence():
    xt, trans, gmat, dwt, cmat, acc, traj = _step_inputs(9, c=4, blk=50)
    x_ref = xt.copy()
    acc_ref = acc.copy()
    for b in range(dwt.shape[0]):
        x_ref = trans @ x_ref + gmat @ dwt[b]
        if b + 1 >= 10:
            y = cmat @ x_ref
            acc_ref += np.sum(y * y, axis=0)
    x_k = xt.copy()
    acc_k = acc.copy()
    _kernels.step_block(x_k, trans, gmat, dwt, cmat, acc_k, 0, 10, 0, traj[:0], 0)
    np.testing.assert_allclose(x_k, x_ref, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(acc_k, acc_ref, rtol=1e-10, atol=1e-12)


def _trace_sq_dense(pairs, bvals, n):
    lap = np.zeros((n, n))
    for (i, j), b in zip(pairs, bvals):
        lap[i, i] += b
        lap[j, j] += b
        lap[i, j] -= b
        lap[j, i] -= b
    return float(np.trace(lap @ lap))


def test_trace_square_batch_matches_dense():
    rng = np.random.default_rng(3)
    n, m = 5, 4
    slots = list(itertools.combinations(range(n), 2))
    cands = [tuple(slots[k] for k in rng.choice(len(slots), m, replace=False)) for _ in range(64)]
    bvals = rng.uniform(0.2, 3.0, (64, m))
    iarr = np.array([[p[0] for p in cand] for cand in cands], dtype=np.int64)
    jarr = np.array([[p[1] for p in cand] for cand in cands], dtype=np.int64)
    out = np.empty(64)
    _kernels.trace_square_batch(iarr, jarr, bvals, out)
    for k in range(64):
        assert abs(out[k] - _trace_sq_dense(cands[k], bvals[k], n)) <= 1e-10 * max(1.0, out[k])


@needs_numba
def test_trace_square_batch_backends_agree():
    rng = np.random.default_rng(4)
    iarr = rng.integers(0, 6, (128, 5)).astype(np.int64)
    jarr = (iarr + 1 + rng.integers(0, 4, (128, 5))).astype(np.int64) % 7
    bvals = rng.uniform(0.1, 2.0, (128, 5))
    out1 = np.empty(128)
    out2 = np.empty(128)
    _kernels.get_impl("trace_square_batch", "numba")(iarr, jarr, bvals, out1)
    _kernels.get_impl("trace_square_batch", "numpy")(iarr, jarr, bvals, out2)
    np.testing.assert_allclose(out1, out2, rtol=1e-12)


def test_env_flag_selects_numpy_backend():
    import os

    code = "from gridnorm import _kernels; print(_kernels.BACKEND)"
    out = subprocess.run(
        [sys.executable, "-c", code],
        capture_output=True,
        text=True,
        env={**os.environ, "GRIDNORM_BACKEND": "numpy"},
        check=False,
    )
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "numpy"


def test_env_flag_rejects_unknown(monkeypatch):
    monkeypatch.setenv("GRIDNORM_BACKEND", "cuda")
    with pytest.raises(ValueError):
        _kernels._requested_backend()
