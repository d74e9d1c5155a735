"""Benchmark the compiled likelihood kernel against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [repeats]

Times the per-interval Girsanov evaluation (the sampler's hot inner
loop) on a realistic workload (n=500 intervals, m=20 imputed points,
d=3) for every available backend and reports the speedup and the
maximum absolute discrepancy between backends.
"""
import sys
import time

import numpy as np

from choldiff.cholesky import CorrScaleSpec, corr_to_chol
from choldiff.config import strict_lower_from_flat
from choldiff.kernels import available_backends, get_backend
from choldiff.likelihood import uncenter_lattice
from choldiff.models import build_mv_cir
from choldiff.simulate import simulate_euler
from choldiff.transform import TransformContext, transform_H


def build_workload(n=500, m=20, d=3, seed=0):
    spec = build_mv_cir(d)
    theta = np.array([0.2, 0.15, 0.22, 2.5, 3.0, 2.0][:2 * d])
    sigma = np.array([0.45, 0.35, 0.40][:d])
    rho = strict_lower_from_flat([0.45, 0.35, 0.55][:d * (d - 1) // 2], d)
    C = corr_to_chol(CorrScaleSpec(sigma, rho))
    path = simulate_euler(spec, C, theta, theta[d:], float(n), 0.01, seed=seed)
    ctx = TransformContext(spec, C, theta)
    yh = transform_H(ctx, path.states[::100])
    rng = np.random.default_rng(seed)
    z = 0.1 * rng.standard_normal((n, m + 2, d))
    z[:, 0] = 0.0
    z[:, -1] = 0.0
    U = uncenter_lattice(z, yh)
    dts = np.full(n, 1.0 / (m + 1))
    kappa, level = spec.sqrt_linear_params(theta)
    return U, dts, C.entries, ctx.C_inverse, kappa, level, ctx.v_diag()


def main():
    repeats = int(sys.argv[1]) if len(sys.argv) > 1 else 200
    args = build_workload()
    results = {}
    timings = {}
    for name in available_backends():
        fn = get_backend(name).girsanov_sqrt_model
        fn(*args)  # warm up
        t0 = time.perf_counter()
        for _ in range(repeats):
            out, ok = fn(*args)
        dt = (time.perf_counter() - t0) / repeats
        results[name] = out
        timings[name] = dt
        print(f"{name:>10}: {dt * 1e3:8.3f} ms/call "
              f"({repeats} repeats, n=500, m=20, d=3)")
    if len(results) == 2:
        diff = float(np.max(np.abs(results["compiled"] - results["python"])))
        speedup = timings["python"] / timings["compiled"]
        print(f"{'speedup':>10}: {speedup:8.2f}x (compiled vs python)")
        print(f"{'max |diff|':>10}: {diff:8.2e}")
    else:
        print("only one backend available; install with the Cython extension "
              "for the comparison")


if __name__ == "__main__":
    main()
