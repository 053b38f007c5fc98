"""Compare the compiled and numpy kernel backends on the hot loops.

Run ``python benchmarks/bench_kernels.py``. Each kernel is fed identical
inputs on both backends; outputs are checked for equality before timing.
"""
import argparse
import time

import numpy as np

from phaselock import _kernels_py
from phaselock.graph_core import Lattice, build_lattice_graph
from phaselock.heat_kernel import _poisson_chunks, _walk_tables

try:
    from phaselock import _kernels as _compiled
except ImportError:
    _compiled = None


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(extent, n_walks, t_walk):
    g = build_lattice_graph(Lattice((extent, extent), boundary="torus"))
    nb = Lattice((extent, extent), boundary="torus").neighborhoods()
    rng = np.random.default_rng(0)
    phase = rng.uniform(-np.pi, np.pi, g.n_vertices)
    cos_coef = np.array([0.0, 0.1, 0.05])
    sin_coef = np.array([0.0, 1.0, 0.2])
    indptr, indices, cumprob = _walk_tables(g)
    weights, rate = _poisson_chunks(t_walk)
    starts = np.full(n_walks, g.n_vertices // 2, dtype=np.int64)
    a = g.adjacency
    bi, bx = a.indptr.astype(np.int64), a.indices.astype(np.int64)

    def coupling(k):
        return k.fourier_coupling_sum(nb.indptr, nb.indices, phase, cos_coef, sin_coef)

    def walks(k):
        seeds = k.walk_seeds(7, 0, n_walks)
        return k.ctrw_endpoints(indptr, indices, cumprob, starts, seeds, weights, rate)

    def bfs(k):
        return k.bfs_distances(bi, bx, 0, -1)

    return {
        f"coupling_sum ({g.n_vertices} vertices, 3 harmonics)": coupling,
        f"ctrw_endpoints ({n_walks} walks, t={t_walk:g})": walks,
        f"bfs_distances ({g.n_vertices} vertices)": bfs,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--extent", type=int, default=101)
    ap.add_argument("--walks", type=int, default=20000)
    ap.add_argument("--t", type=float, default=10.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _compiled is None:
        print("compiled backend not built; timing numpy backend only")
    print(f"{'kernel':<48} {'numpy [s]':>11} {'cython [s]':>11} {'speedup':>8}")
    for name, fn in cases(args.extent, args.walks, args.t).items():
        t_py = _best(lambda: fn(_kernels_py), args.repeat)
        if _compiled is None:
            print(f"{name:<48} {t_py:11.4f} {'-':>11} {'-':>8}")
            continue
        ref, out = fn(_kernels_py), fn(_compiled)
        if not np.array_equal(np.asarray(ref), np.asarray(out)):
            if not np.allclose(ref, out, rtol=1e-12, atol=1e-12):
                raise SystemExit(f"backend mismatch in {name}")
        t_c = _best(lambda: fn(_compiled), args.repeat)
        print(f"{name:<48} {t_py:11.4f} {t_c:11.4f} {t_py / t_c:8.1f}")


if __name__ == "__main__":
    main()
