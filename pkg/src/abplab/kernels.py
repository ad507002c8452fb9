"""Hot inner loops, each with a numba and a pure-numpy implementation.

The backend is picked once at import from ``ABPLAB_BACKEND`` (``numba`` or
``numpy``); numba is the default when it imports. Both implementations
of a kernel agree up to floating-point summation order; ``benchmarks/bench_kernels.py``
times them against each other.

Kernels
-------
rasterize_facets
    For a 2-D triangulation, the index of the first triangle containing
    each grid node (-1 if none).
relax_sweep
    One Jacobi sweep of the midpoint-relaxation operator for the convex
    envelope, with chords closed off on a carrier sphere where the envelope
    vanishes. May update a subset of the nodes it reads from.
tilted_argmin
    For each slope p, the minimum and argmin over sample points of
    ``v(x) - <p, x>``.
legendre_lines
    Brute-force 1-D discrete Legendre transform of many lines at once:
    ``out[k, j] = max_i (p_j x_i + G[k, i])``.
"""
from __future__ import annotations

import os

import numpy as np

_BARY_TOL = 1e-10


# ---------------------------------------------------------------- numpy path

def _rasterize_facets_np(tri, origin, h, shape):
    out = np.full(shape, -1, dtype=np.int64)
    ox, oy = origin
    hx, hy = h
    for f in range(tri.shape[0]):
        (x0, y0), (x1, y1), (x2, y2) = tri[f]
        det = (y1 - y2) * (x0 - x2) + (x2 - x1) * (y0 - y2)
        if det == 0.0:
            continue
        i0 = max(int(np.ceil((min(x0, x1, x2) - ox) / hx - 1e-9)), 0)
        i1 = min(int(np.floor((max(x0, x1, x2) - ox) / hx + 1e-9)), shape[0] - 1)
        j0 = max(int(np.ceil((min(y0, y1, y2) - oy) / hy - 1e-9)), 0)
        j1 = min(int(np.floor((max(y0, y1, y2) - oy) / hy + 1e-9)), shape[1] - 1)
        if i1 < i0 or j1 < j0:
            continue
        px = (ox + hx * np.arange(i0, i1 + 1))[:, None]
        py = (oy + hy * np.arange(j0, j1 + 1))[None, :]
        l0 = ((y1 - y2) * (px - x2) + (x2 - x1) * (py - y2)) / det
        l1 = ((y2 - y0) * (px - x2) + (x0 - x2) * (py - y2)) / det
        l2 = 1.0 - l0 - l1
        inside = (l0 >= -_BARY_TOL) & (l1 >= -_BARY_TOL) & (l2 >= -_BARY_TOL)
        block = out[i0:i1 + 1, j0:j1 + 1]
        block[inside & (block < 0)] = f
    return out


def _sphere_dist_np(x, w, center, radius):
    d = x - center
    b = d @ w
    c = np.einsum("ij,ij->i", d, d) - radius * radius
    return -b + np.sqrt(np.maximum(b * b - c, 0.0))


def _relax_sweep_np(G, U, mi, own, thresh, lut, box_shape, dirs, ks, origin, h, center, radius):
    box_shape = np.asarray(box_shape)
    strides = np.ones(len(box_shape), dtype=np.int64)
    for a in range(len(box_shape) - 2, -1, -1):
        strides[a] = strides[a + 1] * box_shape[a + 1]
    x = origin + mi * h
    best = np.minimum(G[own], U[own])

    def lookup(idx):
        ok = np.all((idx >= 0) & (idx < box_shape), axis=1)
        flat = np.where(ok, idx @ strides, 0)
        return np.where(ok, lut[flat], -1)

    for e in dirs:
        step = e * h
        ell = np.sqrt(step @ step)
        w = step / ell
        s_plus = _sphere_dist_np(x, w, center, radius)
        s_minus = _sphere_dist_np(x, -w, center, radius)
        for k in ks:
            live = best >= thresh
            jm = lookup(mi - k * e)
            jp = lookup(mi + k * e)
            both = (jm >= 0) & (jp >= 0)
            gm = G[np.maximum(jm, 0)]
            gp = G[np.maximum(jp, 0)]
            cand = np.where(both, 0.5 * (gm + gp), np.inf)
            cand = np.minimum(cand, np.where(jm >= 0, s_plus / (s_plus + k * ell) * gm, np.inf))
            cand = np.minimum(cand, np.where(jp >= 0, s_minus / (s_minus + k * ell) * gp, np.inf))
            best = np.where(live, np.minimum(best, cand), best)
    return best


def _tilted_argmin_np(P, X, V, chunk=2048):
    S = P.shape[0]
    mins = np.empty(S)
    arg = np.empty(S, dtype=np.int64)
    for s0 in range(0, S, chunk):
        vals = V[None, :] - P[s0:s0 + chunk] @ X.T
        a = np.argmin(vals, axis=1)
        arg[s0:s0 + chunk] = a
        mins[s0:s0 + chunk] = vals[np.arange(len(a)), a]
    return mins, arg


def _legendre_lines_np(G, x, p, chunk=4096):
    out = np.empty((G.shape[0], p.shape[0]))
    px = p[:, None] * x[None, :]
    for k0 in range(0, G.shape[0], chunk):
        out[k0:k0 + chunk] = np.max(px[None, :, :] + G[k0:k0 + chunk, None, :], axis=2)
    return out


# ---------------------------------------------------------------- numba path

def _build_numba():
    from numba import njit

    @njit(cache=True)
    def rasterize_facets(tri, origin, h, shape):
        out = np.full((shape[0], shape[1]), -1, dtype=np.int64)
        ox, oy = origin[0], origin[1]
        hx, hy = h[0], h[1]
        for f in range(tri.shape[0]):
            x0, y0 = tri[f, 0, 0], tri[f, 0, 1]
            x1, y1 = tri[f, 1, 0], tri[f, 1, 1]
            x2, y2 = tri[f, 2, 0], tri[f, 2, 1]
            det = (y1 - y2) * (x0 - x2) + (x2 - x1) * (y0 - y2)
            if det == 0.0:
                continue
            i0 = max(int(np.ceil((min(x0, x1, x2) - ox) / hx - 1e-9)), 0)
            i1 = min(int(np.floor((max(x0, x1, x2) - ox) / hx + 1e-9)), shape[0] - 1)
            j0 = max(int(np.ceil((min(y0, y1, y2) - oy) / hy - 1e-9)), 0)
            j1 = min(int(np.floor((max(y0, y1, y2) - oy) / hy + 1e-9)), shape[1] - 1)
            for i in range(i0, i1 + 1):
                px = ox + hx * i
                for j in range(j0, j1 + 1):
                    if out[i, j] >= 0:
                        continue
                    py = oy + hy * j
                    l0 = ((y1 - y2) * (px - x2) + (x2 - x1) * (py - y2)) / det
                    l1 = ((y2 - y0) * (px - x2) + (x0 - x2) * (py - y2)) / det
                    l2 = 1.0 - l0 - l1
                    if l0 >= -1e-10 and l1 >= -1e-10 and l2 >= -1e-10:
                        out[i, j] = f
        return out

    @njit(cache=True)
    def _sphere_dist(x, w, center, radius):
        b = 0.0
        c = 0.0
        for a in range(x.shape[0]):
            d = x[a] - center[a]
            b += d * w[a]
            c += d * d
        c -= radius * radius
        q = b * b - c
        if q < 0.0:
            q = 0.0
        return -b + np.sqrt(q)

    @njit(cache=True)
    def relax_sweep(G, U, mi, own, thresh, lut, box_shape, dirs, ks, origin, h, center, radius):
        N, D = mi.shape
        strides = np.ones(D, dtype=np.int64)
        for a in range(D - 2, -1, -1):
            strides[a] = strides[a + 1] * box_shape[a + 1]
        M = dirs.shape[0]
        ells = np.empty(M)
        W = np.empty((M, D))
        for m in range(M):
            s2 = 0.0
            for a in range(D):
                s2 += (dirs[m, a] * h[a]) ** 2
            ells[m] = np.sqrt(s2)
            for a in range(D):
                W[m, a] = dirs[m, a] * h[a] / ells[m]
        dflat = np.zeros(M, dtype=np.int64)
        for m in range(M):
            for a in range(D):
                dflat[m] += dirs[m, a] * strides[a]
        out = np.empty(N)
        x = np.empty(D)
        wn = np.empty(D)
        for i in range(N):
            best = min(G[own[i]], U[own[i]])
            base = 0
            for a in range(D):
                x[a] = origin[a] + mi[i, a] * h[a]
                base += mi[i, a] * strides[a]
            for m in range(M):
                if best < thresh[i]:
                    break
                for a in range(D):
                    wn[a] = -W[m, a]
                s_plus = _sphere_dist(x, W[m], center, radius)
                s_minus = _sphere_dist(x, wn, center, radius)
                ell = ells[m]
                for kk in range(ks.shape[0]):
                    if best < thresh[i]:
                        break
                    k = ks[kk]
                    okm = True
                    okp = True
                    for a in range(D):
                        t = k * dirs[m, a]
                        if mi[i, a] - t < 0 or mi[i, a] - t >= box_shape[a]:
                            okm = False
                        if mi[i, a] + t < 0 or mi[i, a] + t >= box_shape[a]:
                            okp = False
                    jm = lut[base - k * dflat[m]] if okm else -1
                    jp = lut[base + k * dflat[m]] if okp else -1
                    if jm >= 0 and jp >= 0:
                        c = 0.5 * (G[jm] + G[jp])
                        if c < best:
                            best = c
                    if jm >= 0:
                        c = s_plus / (s_plus + k * ell) * G[jm]
                        if c < best:
                            best = c
                    if jp >= 0:
                        c = s_minus / (s_minus + k * ell) * G[jp]
                        if c < best:
                            best = c
            out[i] = best
        return out

    @njit(cache=True)
    def tilted_argmin(P, X, V):
        # blocked through np.dot (BLAS); the scan fuses the subtraction and the argmin
        S = P.shape[0]
        C = X.shape[0]
        XT = np.ascontiguousarray(X.T)
        mins = np.empty(S)
        arg = np.empty(S, dtype=np.int64)
        for s0 in range(0, S, 2048):
            s1 = min(s0 + 2048, S)
            T = np.dot(P[s0:s1], XT)
            for s in range(s1 - s0):
                bv = np.inf
                bj = -1
                for j in range(C):
                    t = V[j] - T[s, j]
                    if t < bv:
                        bv = t
                        bj = j
                mins[s0 + s] = bv
                arg[s0 + s] = bj
        return mins, arg

    @njit(cache=True)
    def legendre_lines(G, x, p):
        K, N = G.shape
        M = p.shape[0]
        out = np.empty((K, M))
        for k in range(K):
            for j in range(M):
                best = -np.inf
                for i in range(N):
                    t = p[j] * x[i] + G[k, i]
                    if t > best:
                        best = t
                out[k, j] = best
        return out

    return {"rasterize_facets": rasterize_facets, "relax_sweep": relax_sweep,
            "tilted_argmin": tilted_argmin, "legendre_lines": legendre_lines}


_NUMPY = {"rasterize_facets": _rasterize_facets_np, "relax_sweep": _relax_sweep_np,
          "tilted_argmin": _tilted_argmin_np, "legendre_lines": _legendre_lines_np}
_NUMBA = None


def get_kernels(backend: str) -> dict:
    """Kernel table for ``backend`` ('numba' or 'numpy')."""
    global _NUMBA
    if backend == "numpy":
        return _NUMPY
    if backend == "numba":
        if _NUMBA is None:
            _NUMBA = _build_numba()
        return _NUMBA
    raise ValueError(f"unknown backend {backend!r}")


def _pick_backend() -> str:
    want = os.environ.get("ABPLAB_BACKEND", "numba").lower()
    if want == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        return "numpy"
    return "numba"


BACKEND = _pick_backend()
_active = get_kernels(BACKEND)


def rasterize_facets(tri, origin, h, shape):
    return _active["rasterize_facets"](np.ascontiguousarray(tri, dtype=np.float64),
                                       np.asarray(origin, dtype=np.float64),
                                       np.asarray(h, dtype=np.float64),
                                       np.asarray(shape, dtype=np.int64))


def relax_sweep(G, U, mi, lut, box_shape, dirs, ks, origin, h, center, radius, own=None, thresh=None):
    """New values at the nodes ``mi``; ``own[i]`` is node i's slot in ``G``/``U`` (default i).

    A node stops looking for lower chords once its value drops below ``thresh[i]``.
    """
    own = np.arange(len(mi), dtype=np.int64) if own is None else np.asarray(own, dtype=np.int64)
    thresh = np.full(len(mi), -np.inf) if thresh is None else np.asarray(thresh, dtype=np.float64)
    return _active["relax_sweep"](G, U, mi, own, thresh, lut, np.asarray(box_shape, dtype=np.int64),
                                  dirs, ks, np.asarray(origin, dtype=np.float64),
                                  np.asarray(h, dtype=np.float64),
                                  np.asarray(center, dtype=np.float64), float(radius))


def tilted_argmin(P, X, V):
    return _active["tilted_argmin"](np.ascontiguousarray(P, dtype=np.float64),
                                    np.ascontiguousarray(X, dtype=np.float64),
                                    np.ascontiguousarray(V, dtype=np.float64))


def legendre_lines(G, x, p):
    return _active["legendre_lines"](np.ascontiguousarray(G, dtype=np.float64),
                                     np.asarray(x, dtype=np.float64),
                                     np.asarray(p, dtype=np.float64))
