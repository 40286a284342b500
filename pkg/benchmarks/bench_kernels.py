"""Compare the numba kernels with their numpy fallbacks.

Each kernel runs once on both paths to compile and to check that the
outputs agree, then the best of ``--repeat`` timings is reported.

    python benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]
"""
import argparse
import time

import numpy as np

from mslap import accel, graph, linalg, mmbo, mml
from mslap.data import generate_blobs
from mslap.eigen import lanczos_smallest


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(scale):
    rng = np.random.default_rng(0)
    n = int(4000 * scale)
    ds = generate_blobs(n // 10, 10, dim=5, spread=4.0, seed=0)
    w = graph.build_multiscale_graph(ds.features, [graph.ScaleParams(sigma=2.0)], 10).weights[0]
    lap = graph.laplacian(w)
    x = rng.standard_normal(lap.shape[0])
    v = rng.standard_normal((n, 10))
    eig = lanczos_smallest(lap, 50, tol=1e-8)
    labeled = np.arange(0, ds.n, 40)
    fid = mmbo.FidelitySpec.from_indices(ds.n, labeled, ds.labels[labeled], mu=10.0)
    dense = rng.standard_normal((100, 100))
    dense = dense + dense.T
    pts = rng.standard_normal((int(400 * scale), 5))
    k = mml.gram(pts, mml.BaseKernelConfig(2.0))
    y = np.where(pts[:, 0] > 0, 1.0, -1.0)
    return {
        "spmv": lambda: linalg.spmv(lap, x),
        "spgemm (L @ L)": lambda: linalg.spgemm(lap, lap),
        "knn search": lambda: graph.knn_search(ds.features, 10),
        "simplex projection": lambda: mmbo.project_simplex(v),
        "jacobi eigensolver (100x100)": lambda: linalg.dense_sym_eig(dense, method="jacobi"),
        "smo": lambda: mml.smo(k, y, 1.0)[0],
        "mmbo run": lambda: mmbo.run(eig, fid, 10, mmbo.MmboConfig(dt=0.1, n_e=50)).classes,
    }


def as_array(out):
    if isinstance(out, linalg.SparseMatrix):
        return out.data
    if isinstance(out, tuple):
        return out[0]
    if hasattr(out, "indices"):
        return out.indices
    return np.asarray(out)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--scale", type=float, default=1.0, help="problem size multiplier")
    args = parser.parse_args()
    if not accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"{'kernel':30s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speedup':>8s}  agree")
    for name, fn in cases(args.scale).items():
        with accel.use_numba(True):
            a = as_array(fn())
            t_nb = best_of(fn, args.repeat)
        with accel.use_numba(False):
            b = as_array(fn())
            t_np = best_of(fn, args.repeat)
        agree = a.shape == b.shape and np.allclose(a, b, rtol=1e-9, atol=1e-9)
        print(f"{name:30s} {1e3 * t_nb:11.3f} {1e3 * t_np:11.3f} {t_np / t_nb:7.1f}x  {agree}")


if __name__ == "__main__":
    main()
