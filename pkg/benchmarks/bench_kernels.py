#!/usr/bin/env python3
"""Benchmark the jitted kernels against the pure-numpy fallback.

Times the SDE step kernel on an ensemble workload (first call includes JIT
compilation, second call is steady state) and the combinatorial trace batch,
then cross-checks that both backends agree.

Run:  python benchmarks/bench_kernels.py
Force the fallback everywhere with GRIDNORM_BACKEND=numpy.
"""

import itertools
import time

import numpy as np

from gridnorm import _kernels


def _time(fn, *args, repeat=3):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_step_block(trials=512, steps=5000, n_nodes=3):
    d, q = 2 * n_nodes, n_nodes
    rng = np.random.default_rng(0)
    trans = np.eye(d) + 1e-3 * rng.standard_normal((d, d))
    gmat = 0.03 * rng.standard_normal((d, q))
    cmat = rng.standard_normal((d, d))
    xt0 = np.ascontiguousarray(rng.standard_normal((d, trials)))
    dwt = np.ascontiguousarray(rng.standard_normal((steps, q, trials)))
    traj = np.zeros((8, steps // 20 + 1, d))

    print(f"\nSDE step kernel: {trials} trials x {steps} steps, state dim {d}")
    results = {}
    for backend in _kernels.available_backends():
        kernel = _kernels.get_impl("step_block", backend)
        xt, acc = xt0.copy(), np.zeros(trials)
        t_first = time.perf_counter()
        kernel(xt, trans, gmat, dwt, cmat, acc, 0, steps // 2, 20, traj, 8)
        t_first = time.perf_counter() - t_first

        def run():
            x2, a2 = xt0.copy(), np.zeros(trials)
            kernel(x2, trans, gmat, dwt, cmat, a2, 0, steps // 2, 20, traj, 8)
            return x2, a2

        t_steady = _time(lambda: run())
        x_final, acc_final = run()
        results[backend] = (x_final, acc_final)
        rate = trials * steps / t_steady / 1e6
        print(f"  {backend:6s}  first {t_first * 1e3:8.1f} ms   steady {t_steady * 1e3:8.1f} ms   {rate:7.1f} Msteps/s")
    if len(results) == 2:
        x_scale = max(1.0, float(np.max(np.abs(results["numpy"][0]))))
        a_scale = max(1.0, float(np.max(np.abs(results["numpy"][1]))))
        dx = np.max(np.abs(results["numba"][0] - results["numpy"][0])) / x_scale
        da = np.max(np.abs(results["numba"][1] - results["numpy"][1])) / a_scale
        print(f"  backend agreement: max relative state gap {dx:.2e}, accumulator gap {da:.2e}")
        assert dx < 1e-9 and da < 1e-9


def bench_trace_batch(candidates=100_000, n=7, m=5):
    rng = np.random.default_rng(1)
    slots = np.array(list(itertools.combinations(range(n), 2)), dtype=np.int64)
    picks = np.stack([rng.choice(len(slots), m, replace=False) for _ in range(candidates)])
    iarr = np.ascontiguousarray(slots[picks, 0])
    jarr = np.ascontiguousarray(slots[picks, 1])
    bvals = rng.uniform(0.3, 3.0, (candidates, m))

    print(f"\ntopology trace batch: {candidates} candidates, {m} edges on {n} nodes")
    results = {}
    for backend in _kernels.available_backends():
        kernel = _kernels.get_impl("trace_square_batch", backend)
        out = np.empty(candidates)
        t_first = time.perf_counter()
        kernel(iarr, jarr, bvals, out)
        t_first = time.perf_counter() - t_first
        t_steady = _time(kernel, iarr, jarr, bvals, out)
        results[backend] = out.copy()
        rate = candidates / t_steady / 1e6
        print(f"  {backend:6s}  first {t_first * 1e3:8.1f} ms   steady {t_steady * 1e3:8.1f} ms   {rate:7.2f} Mcand/s")
    if len(results) == 2:
        gap = np.max(np.abs(results["numba"] - results["numpy"]))
        print(f"  backend agreement: max gap {gap:.2e}")
        assert gap < 1e-9


def main():
    print(f"active backend: {_kernels.BACKEND}   available: {', '.join(_kernels.available_backends())}")
    bench_step_block()
    bench_trace_batch()


if __name__ == "__main__":
    main()
