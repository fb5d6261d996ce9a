"""Compiled kernel vs numpy backend on the same paths.

    python benchmarks/bench_backends.py [--paths 2000] [--steps 1000]

Prints path-steps per second for each backend and the largest difference
between their terminal states.
"""

import argparse
import time

import numpy as np

from fkbismut import fields, geometry, paths


def cases():
    th = np.pi / 3
    yield "flat sin, gradient", geometry.Euclidean(1), fields.FieldSpec(payoff=fields.payoff_sin()), [0.0], ("gradient",)
    yield "OU, all", geometry.Euclidean(1), fields.FieldSpec(drift=fields.drift_ou(1.0), payoff=fields.payoff_quadratic()), [0.0], (
        "gradient", "generator", "hessian")
    yield "S2 height, all", geometry.sphere(2), fields.FieldSpec(payoff=fields.payoff_height()), [np.sin(th), 0, np.cos(th)], (
        "gradient", "generator", "hessian")
    yield "H2 quadratic V, hessian", geometry.hyperbolic(2), fields.FieldSpec(potential=fields.potential_quadratic(0.1)), [
        0.3, 0.1, 0.0], ("hessian",)


def timed(cfg, backend, normals, P):
    t0 = time.perf_counter()
    idx = np.arange(P)
    if backend == "kernel":
        st = paths._simulate_kernel(cfg, idx, normals)
    else:
        st = paths._simulate_numpy(cfg, idx, normals)
    return st, time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--steps", type=int, default=1000)
    args = ap.parse_args()
    if not paths.kernel_available():
        print("compiled kernel not built; only the numpy backend is available")
    print(f"{'case':28s} {'numpy [steps/s]':>16s} {'kernel [steps/s]':>17s} {'speedup':>8s} {'max diff':>10s}")
    for name, model, fs, x0, est in cases():
        cfg = paths.SimConfig(T=1.0, dt=1.0 / args.steps, n_paths=args.paths, seed=1, model=model, fields=fs, x0=x0,
                              estimators=est)
        normals = paths.rng.batch_normals(cfg.seed, 0, args.paths, cfg.n_steps, model.dim)
        work = args.paths * cfg.n_steps
        a, ta = timed(cfg, "python", normals, args.paths)
        row = f"{name:28s} {work / ta:16.3e}"
        if paths.kernel_available():
            b, tb = timed(cfg, "kernel", normals, args.paths)
            diff = max(np.abs(getattr(a, k) - getattr(b, k)).max() for k in ("X", "W", "Wp", "fk") + paths.PathState.ACC)
            row += f" {work / tb:17.3e} {ta / tb:8.1f} {diff:10.1e}"
        print(row)


if __name__ == "__main__":
    main()
