"""Time the numba kernels against their numpy fallbacks and check they agree.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]

The first numba call (JIT compilation) is timed separately.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from abplab import kernels
from abplab.envelope import _node_tables, default_directions, default_steps
from abplab.grid import Domain, make_grid, sample


def _cases(quick: bool):
    rng = np.random.default_rng(0)
    res2, res4 = (64, 10) if quick else (128, 16)

    # relaxation sweep on a 2-D cap and a 4-D paraboloid well
    def relax_case(dim, res):
        om = Domain.ball(1.0, dim)
        g = make_grid(om, res)
        f = sample(lambda x: np.minimum(np.sum(x * x, axis=-1) - 0.5, 0.0), g, om)
        U = f.values[f.mask].astype(float)
        mi, lut = _node_tables(f.mask)
        args = (U.copy(), U, mi, np.arange(len(mi), dtype=np.int64), np.full(len(mi), -np.inf), lut,
                np.asarray(g.shape, dtype=np.int64), default_directions(dim), default_steps(max(g.shape)),
                np.asarray(g.origin, dtype=float), np.asarray(g.h, dtype=float), np.zeros(dim), 2.0)
        return f"relax_sweep dim={dim} res={res} nodes={len(mi)}", "relax_sweep", args

    yield relax_case(2, res2)
    yield relax_case(4, res4)

    P = rng.normal(size=(20000 if quick else 100000, 4))
    X = rng.uniform(-1, 1, size=(2000, 4))
    V = rng.normal(size=2000)
    yield f"tilted_argmin slopes={len(P)} points={len(X)}", "tilted_argmin", (P, X, V)

    G = rng.normal(size=(4000 if quick else 17 ** 3, 17))
    x = np.linspace(-1, 1, 17)
    p = np.linspace(-5, 5, 65)
    yield f"legendre_lines lines={len(G)}", "legendre_lines", (G, x, p)

    pts = rng.uniform(-1, 1, size=(400, 2))
    from scipy.spatial import Delaunay
    tri = pts[Delaunay(pts).simplices]
    shape = np.array([257, 257], dtype=np.int64)
    yield f"rasterize_facets triangles={len(tri)} grid=257^2", "rasterize_facets", (
        np.ascontiguousarray(tri), np.array([-1.0, -1.0]), np.array([2 / 256, 2 / 256]), shape)


def _time(fn, args, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def _max_diff(a, b):
    # argmin outputs can differ on exact ties; compare the values only
    a = a[0] if isinstance(a, tuple) else a
    b = b[0] if isinstance(b, tuple) else b
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)), initial=0.0))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    npk = kernels.get_kernels("numpy")
    nbk = kernels.get_kernels("numba")
    print(f"{'kernel':<48} {'numpy s':>9} {'numba s':>9} {'jit s':>7} {'speedup':>8} max|diff|")
    for label, name, a in _cases(args.quick):
        t0 = time.perf_counter()
        nbk[name](*a)
        jit = time.perf_counter() - t0
        t_nb, out_nb = _time(nbk[name], a, args.repeat)
        t_np, out_np = _time(npk[name], a, args.repeat)
        print(f"{label:<48} {t_np:9.4f} {t_nb:9.4f} {jit:7.2f} {t_np / t_nb:8.1f} {_max_diff(out_np, out_nb):.1e}")


if __name__ == "__main__":
    main()
