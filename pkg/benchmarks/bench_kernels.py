"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 3]

Both backends get identical inputs; the script also checks the outputs agree
bitwise before reporting the speedup.
"""

import argparse
import time

import numpy as np

from qstail import _fallback, mesh, rng, simulator

try:
    from qstail import _kernels
except ImportError:  # extension not built
    _kernels = None


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def cases():
    cfg = mesh.MeshConfig(10.0, 400, 400, 1)
    L = mesh.initial_cdf(cfg)
    us = cfg.u_grid()
    a_star, a_one = mesh.tail_thresholds(L.A, float(L.values[-1]))
    mesh_args = (L.x_grid, us, np.diff(us), np.ascontiguousarray(L.values), a_star, a_one)

    keys = rng.replicate_keys(1, 200)
    cdf, offsets = simulator.subtree_cost_law(64)
    tn_args = (100_000, keys, cdf, offsets)

    s_keys = rng.replicate_keys(2, 200)
    truncs_args = (12, 0.0, s_keys)
    return [
        ("mesh_q N=M=400", "mesh_q", mesh_args),
        ("sample_tn_batch n=1e5 x200", "sample_tn_batch", tn_args),
        ("sample_truncs_batch m=12 x200", "sample_truncs_batch", truncs_args),
    ]


def same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if _kernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'kernel':34s} {'compiled':>10s} {'python':>10s} {'speedup':>8s}")
    for label, name, call_args in cases():
        t_c, out_c = best_of(lambda: getattr(_kernels, name)(*call_args), args.repeat)
        t_p, out_p = best_of(lambda: getattr(_fallback, name)(*call_args), args.repeat)
        flag = "" if same(out_c, out_p) else "  OUTPUT MISMATCH"
        print(f"{label:34s} {t_c:10.4f} {t_p:10.4f} {t_p / t_c:7.1f}x{flag}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
