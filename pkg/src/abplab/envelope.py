"""Convex envelopes of the zero-extended negative part and their contact sets.

Two constructions are provided. In two real dimensions the envelope of the
sampled point cloud is computed exactly as the lower convex hull in R^3
(:func:`convex_envelope_exact`). In any even dimension the
midpoint-relaxation iteration (:func:`convex_envelope_iterative`) gives a
grid function that is bounded below by the exact envelope, and the double
discrete Legendre transform (:func:`convex_envelope_legendre`) gives one
bounded above by it, with an explicit error bound. The latter is the one
that stays affordable in four dimensions.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import ConvexHull, Delaunay, QhullError

from . import kernels
from .grid import Domain, Grid, GridError, ScalarField, concentric_grid


class EnvelopeError(RuntimeError):
    def __init__(self, msg: str, residual: float | None = None):
        super().__init__(msg if residual is None else f"{msg} (residual {residual:.3e})")
        self.residual = residual


# ------------------------------------------------------------------ types

@dataclass(eq=False)
class PLConvexFunction:
    """Piecewise-linear convex function given by a lower hull triangulation.

    ``points``/``values`` are the hull input samples; ``facets`` index into
    them and ``grads``/``offsets`` give each facet's affine function
    ``<grad, x> + offset``.
    """

    points: np.ndarray
    values: np.ndarray
    facets: np.ndarray
    grads: np.ndarray
    offsets: np.ndarray

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @cached_property
    def vertices(self) -> np.ndarray:
        return np.unique(self.facets)

    @cached_property
    def adjacency(self) -> dict[int, np.ndarray]:
        order = np.argsort(self.facets.ravel(), kind="stable")
        verts = self.facets.ravel()[order]
        fids = order // self.facets.shape[1]
        cuts = np.flatnonzero(np.diff(verts)) + 1
        return {int(g[0]): f for g, f in zip(np.split(verts, cuts), np.split(fids, cuts))}

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        """Vertices on the outer boundary of the projected triangulation."""
        f = np.sort(self.facets, axis=1)
        edges = np.concatenate([f[:, [0, 1]], f[:, [0, 2]], f[:, [1, 2]]])
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        return np.unique(uniq[counts == 1])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate as the max of facet planes (exact inside the hull's projection)."""
        x = np.atleast_2d(x)
        out = np.full(len(x), -np.inf)
        for s in range(0, len(x), 4096):
            out[s:s + 4096] = np.max(x[s:s + 4096] @ self.grads.T + self.offsets, axis=1)
        return out

    def evaluate_on_grid(self, grid: Grid, mask: np.ndarray) -> ScalarField:
        if self.dim != 2:
            raise EnvelopeError("grid rasterisation is implemented for dim 2")
        tri = self.points[self.facets]
        idx = kernels.rasterize_facets(tri, grid.origin, grid.h, grid.shape)
        pts = grid.points()
        vals = np.einsum("...i,...i->...", pts, self.grads[np.maximum(idx, 0)]) + self.offsets[np.maximum(idx, 0)]
        miss = mask & (idx < 0)
        if miss.any():
            vals[miss] = self(pts[miss])
        return ScalarField(grid, np.where(mask, vals, np.nan), mask.copy())

    def convexity_defect(self) -> float:
        """max over vertices/facets of (facet plane - vertex value); <= tol for convex data."""
        v = self.vertices
        worst = -np.inf
        for s in range(0, len(v), 2048):
            vv = v[s:s + 2048]
            planes = self.points[vv] @ self.grads.T + self.offsets
            worst = max(worst, float(np.max(planes - self.values[vv, None])))
        return worst

    def interpolation_defect(self) -> float:
        planes = np.einsum("fkd,fd->fk", self.points[self.facets], self.grads) + self.offsets[:, None]
        return float(np.max(np.abs(planes - self.values[self.facets])))

    def to_json(self) -> str:
        return json.dumps({
            "kind": "PLConvexFunction", "dim": self.dim,
            "vertices": [{"x": self.points[i].tolist(), "value": float(self.values[i])} for i in range(len(self.points))],
            "facets": [{"vertices": self.facets[f].tolist(), "gradient": self.grads[f].tolist(),
                        "offset": float(self.offsets[f])} for f in range(len(self.facets))],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PLConvexFunction":
        d = json.loads(text)
        pts = np.array([v["x"] for v in d["vertices"]], dtype=float)
        vals = np.array([v["value"] for v in d["vertices"]], dtype=float)
        facets = np.array([f["vertices"] for f in d["facets"]], dtype=np.int64)
        grads = np.array([f["gradient"] for f in d["facets"]], dtype=float)
        offs = np.array([f["offset"] for f in d["facets"]], dtype=float)
        return cls(pts, vals, facets, grads, offs)


@dataclass(frozen=True, eq=False)
class ContactSet:
    cells: np.ndarray
    eta: float
    grid: Grid | None = None

    @property
    def count(self) -> int:
        return int(self.cells.sum())

    def points(self) -> np.ndarray:
        return self.grid.points()[self.cells]


@dataclass(eq=False)
class GridEnvelope:
    """Result of the iterative scheme: Gamma and u-tilde on the Omega grid."""

    gamma: ScalarField
    u_tilde: ScalarField
    carrier_center: np.ndarray
    carrier_radius: float
    iterations: int = 0
    residual: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.gamma.grid.dim


# ------------------------------------------------------------ operations

def _inside(omega: Domain, ball_d: Domain) -> bool:
    c = np.asarray(ball_d.center)
    if omega.kind == "ball":
        return np.linalg.norm(np.asarray(omega.center) - c) + omega.radius <= ball_d.radius * (1 + 1e-12)
    far_corner = np.abs(np.asarray(omega.center) - c) + omega.extents()
    return np.linalg.norm(far_corner) <= ball_d.radius * (1 + 1e-12)


def tilde_extend(u_shifted: ScalarField, omega: Domain, ball_d: Domain,
                 carrier_radius: float | None = None, on_carrier: bool = True) -> ScalarField:
    """min(u, 0) on Omega, zero on the rest of the carrier ball.

    With ``on_carrier=False`` the result stays on the Omega grid; the zero
    extension is then implicit and the carrier only enters through
    :func:`convex_envelope_iterative`'s sphere closure.
    """
    R = 2.0 * ball_d.radius if carrier_radius is None else float(carrier_radius)
    if not _inside(omega, ball_d):
        raise GridError("Omega must lie inside B_d")
    if not R > ball_d.radius:
        raise GridError("carrier ball must strictly contain B_d")
    meta = {"carrier_center": list(ball_d.center), "carrier_radius": R}
    neg = np.minimum(np.where(u_shifted.mask, u_shifted.values, 0.0), 0.0)
    if not on_carrier:
        return ScalarField(u_shifted.grid, np.where(u_shifted.mask, neg, np.nan), u_shifted.mask.copy(), meta)
    big, off = concentric_grid(u_shifted.grid, ball_d.center, R)
    pts = big.points()
    mask = np.linalg.norm(pts - np.asarray(ball_d.center), axis=-1) <= R * (1 + 1e-12)
    vals = np.zeros(big.shape)
    sl = tuple(slice(o, o + m) for o, m in zip(off, u_shifted.grid.shape))
    vals[sl] = neg
    omega_mask = np.zeros(big.shape, dtype=bool)
    omega_mask[sl] = u_shifted.mask
    meta["omega_mask"] = omega_mask
    meta["omega_offset"] = off
    return ScalarField(big, np.where(mask, vals, np.nan), mask, meta)


def _ring(mask: np.ndarray) -> np.ndarray:
    padded = np.pad(mask, 1, constant_values=False)
    inner = padded.copy()
    for a in range(mask.ndim):
        for s in (1, -1):
            inner &= np.roll(padded, s, axis=a)
    return mask & ~inner[tuple(slice(1, -1) for _ in range(mask.ndim))]


def _flat_pl(pts: np.ndarray, vals: np.ndarray) -> PLConvexFunction:
    A = np.c_[pts, np.ones(len(pts))]
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    tri = Delaunay(pts).simplices.astype(np.int64)
    grads = np.tile(coef[:2], (len(tri), 1))
    return PLConvexFunction(pts, vals, tri, grads, np.full(len(tri), coef[2]))


def lower_hull(points: np.ndarray, values: np.ndarray) -> PLConvexFunction:
    """Lower convex hull of {(x, v)} in R^3 for planar sample points."""
    pts = np.asarray(points, dtype=float)
    vals = np.asarray(values, dtype=float)
    if pts.shape[1] != 2:
        raise EnvelopeError("exact hulls are implemented for dim 2 only")
    cen = pts - pts.mean(axis=0)
    if len(pts) < 3 or np.linalg.matrix_rank(cen, tol=1e-12 * max(1.0, np.abs(cen).max())) < 2:
        raise EnvelopeError("need at least 3 affinely independent sample points")
    lifted = np.c_[pts, vals]
    scale = np.abs(lifted - lifted.mean(axis=0)).max()
    sv = np.linalg.svd(lifted - lifted.mean(axis=0), compute_uv=False)
    if sv[-1] <= 1e-12 * max(scale, 1e-300) * np.sqrt(len(pts)):
        return _flat_pl(pts, vals)
    try:
        hull = ConvexHull(lifted, qhull_options="Qt")
    except QhullError:
        return _flat_pl(pts, vals)
    eq = hull.equations
    low = eq[:, 2] < -1e-12
    eq = eq[low]
    facets = hull.simplices[low].astype(np.int64)
    grads = -eq[:, :2] / eq[:, 2:3]
    offsets = -eq[:, 3] / eq[:, 2]
    return PLConvexFunction(pts, vals, facets, grads, offsets)


def convex_envelope_exact(u_tilde: ScalarField) -> PLConvexFunction:
    """Exact envelope of the samples of a 2-D field (lower convex hull).

    Samples equal to the field's maximum that are not on the outer ring of
    the mask are dropped: they can only touch the hull when the field is
    constant, which is handled separately.
    """
    if u_tilde.grid.dim != 2:
        raise EnvelopeError("exact envelope requires dim 2; use convex_envelope_iterative")
    pts = u_tilde.grid.points()
    vals = u_tilde.values
    vmax = np.max(u_tilde.masked_values())
    keep = u_tilde.mask & ((vals < vmax) | _ring(u_tilde.mask))
    if np.count_nonzero(keep & (vals < vmax)) == 0:
        keep = u_tilde.mask
    return lower_hull(pts[keep], vals[keep])


def default_directions(dim: int) -> np.ndarray:
    eye = np.eye(dim, dtype=np.int64)
    dirs = list(eye)
    for i in range(dim):
        for j in range(i + 1, dim):
            dirs.append(eye[i] + eye[j])
            dirs.append(eye[i] - eye[j])
    if dim == 2:
        dirs += [np.array([1, 2]), np.array([2, 1]), np.array([1, -2]), np.array([2, -1])]
    return np.array(dirs, dtype=np.int64)


def default_steps(n_max: int) -> np.ndarray:
    ks = set(range(1, min(n_max, 6) + 1))
    k = 6.0
    while k < n_max:
        k *= 1.4
        ks.add(min(int(round(k)), n_max))
    return np.array(sorted(ks), dtype=np.int64)


def _node_tables(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mi = np.argwhere(mask).astype(np.int64)
    lut = np.full(mask.size, -1, dtype=np.int64)
    lut[np.ravel_multi_index(mi.T, mask.shape)] = np.arange(len(mi))
    return mi, lut


def convex_envelope_iterative(u_tilde: ScalarField, tol: float = 1e-10, max_iter: int = 500,
                              carrier_center=None, carrier_radius: float | None = None,
                              directions: np.ndarray | None = None,
                              steps: np.ndarray | None = None) -> GridEnvelope:
    """Fixed point of midpoint relaxation along grid direction pairs.

    Iterates ``G <- min(G, u, (G(x-k e) + G(x+k e))/2, sphere chords)`` with
    Jacobi updates until the sup change drops below ``tol``. A sphere chord
    joins ``x - k e`` through ``x`` to the carrier sphere, where the envelope
    is zero; this is what lets the active set stop at the mask of the field.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    g = u_tilde.grid
    if carrier_center is None:
        carrier_center = u_tilde.meta.get("carrier_center")
    if carrier_radius is None:
        carrier_radius = u_tilde.meta.get("carrier_radius")
    if carrier_center is None or carrier_radius is None:
        raise ValueError("carrier ball is required")
    U = u_tilde.values[u_tilde.mask].astype(float)
    if np.any(U > 0):
        raise ValueError("u-tilde must be <= 0")
    mi, lut = _node_tables(u_tilde.mask)
    dirs = default_directions(g.dim) if directions is None else np.asarray(directions, dtype=np.int64)
    ks = default_steps(max(g.shape)) if steps is None else np.asarray(steps, dtype=np.int64)
    G = U.copy()
    change = np.inf
    it = 0
    while it < max_iter:
        it += 1
        Gn = kernels.relax_sweep(G, U, mi, lut, g.shape, dirs, ks, g.origin, g.h,
                                 carrier_center, carrier_radius)
        change = float(np.max(np.abs(Gn - G))) if len(G) else 0.0
        G = Gn
        if change < tol:
            break
    else:
        raise EnvelopeError(f"no convergence within {max_iter} sweeps", change)
    vals = np.full(g.shape, np.nan)
    vals[u_tilde.mask] = G
    gamma = ScalarField(g, vals, u_tilde.mask.copy())
    return GridEnvelope(gamma, u_tilde, np.asarray(carrier_center, dtype=float), float(carrier_radius), it, change)


def _conjugate(F: np.ndarray, axes_in: list[np.ndarray], axes_out: list[np.ndarray]) -> np.ndarray:
    """Discrete conjugate max_x (<p, x> - F(x)) on a tensor grid, one axis at a time."""
    arr = -F
    for a in range(F.ndim):
        moved = np.moveaxis(arr, a, -1)
        lead = moved.shape[:-1]
        out = kernels.legendre_lines(moved.reshape(-1, moved.shape[-1]), axes_in[a], axes_out[a])
        arr = np.moveaxis(out.reshape(*lead, len(axes_out[a])), -1, a)
    return arr


def convex_envelope_legendre(u_tilde: ScalarField, carrier_center=None, carrier_radius: float | None = None,
                             slopes_per_axis: int | None = None) -> GridEnvelope:
    """Envelope as a double discrete Legendre transform, any dimension.

    The conjugate of u-tilde (zero off the mask, out to the carrier sphere)
    is computed exactly on a tensor grid of slopes covering every supporting
    slope, ``|p| <= M / (R - r_Omega)``; the carrier part is the closed form
    ``<p, c> + R |p|``. Transforming back over that finite slope set gives a
    lower bound of the exact sample envelope; ``meta['error_bound']`` bounds
    the gap by half a slope-cell diagonal times the largest distance between
    a node and a carrier point.
    """
    g = u_tilde.grid
    c = np.asarray(u_tilde.meta.get("carrier_center") if carrier_center is None else carrier_center, dtype=float)
    R = float(u_tilde.meta.get("carrier_radius") if carrier_radius is None else carrier_radius)
    vals = np.where(u_tilde.mask, u_tilde.values, 0.0)
    if np.any(vals > 0):
        raise ValueError("u-tilde must be <= 0")
    pts = g.points()
    dist = np.linalg.norm(pts - c, axis=-1)
    if np.any(dist[u_tilde.mask] >= R):
        raise ValueError("carrier must strictly contain the mask")
    M = -float(vals.min())
    out = np.full(g.shape, np.nan)
    if M == 0.0:
        out[u_tilde.mask] = 0.0
        return GridEnvelope(ScalarField(g, out, u_tilde.mask.copy()), u_tilde, c, R, 1, 0.0,
                            {"method": "legendre", "error_bound": 0.0, "slope_step": 0.0})
    # box nodes beyond the carrier carry no data
    F = np.where(dist <= R * (1 + 1e-12), vals, np.inf)
    r_om = float(dist[u_tilde.mask].max())
    L = M / (R - r_om)
    nps = max(g.shape) if slopes_per_axis is None else int(slopes_per_axis)
    xs = g.axes()
    ps = [np.linspace(-L, L, nps) for _ in range(g.dim)]
    conj = _conjugate(F, xs, ps)
    P = np.stack(np.meshgrid(*ps, indexing="ij"), axis=-1)
    conj = np.maximum(conj, P @ c + R * np.linalg.norm(P, axis=-1))
    gamma = _conjugate(conj, ps, xs)
    gamma = np.minimum(gamma, np.where(u_tilde.mask, vals, np.inf))
    out[u_tilde.mask] = gamma[u_tilde.mask]
    hp = 2 * L / (nps - 1)
    bound = 0.5 * hp * math.sqrt(g.dim) * (R + r_om)
    return GridEnvelope(ScalarField(g, out, u_tilde.mask.copy()), u_tilde, c, R, 1, 0.0,
                        {"method": "legendre", "error_bound": bound, "slope_step": hp})


def refine_contact(env: GridEnvelope, candidates: "ContactSet", sweeps: int = 1,
                   eta: float = 1e-9) -> tuple["ContactSet", np.ndarray]:
    """Shrink a contact superset with a few relaxation sweeps on its nodes only.

    Starting from u-tilde, every chord value is an upper bound of the exact
    envelope, so nodes where the bound drops below u-tilde by more than
    ``eta`` are certainly not contact nodes. Returns the refined set and the
    upper bound on the Omega grid (u-tilde off the candidates).
    """
    ut = env.u_tilde
    g = ut.grid
    mi, lut = _node_tables(ut.mask)
    U = ut.values[ut.mask].astype(float)
    G = U.copy()
    sub = np.flatnonzero(candidates.cells[ut.mask])
    dirs = default_directions(g.dim)
    ks = default_steps(max(g.shape))
    for _ in range(sweeps):
        # nodes already certified off the contact set need no further sweeps
        sub = sub[U[sub] - G[sub] <= eta]
        if not len(sub):
            break
        G[sub] = kernels.relax_sweep(G, U, mi[sub], lut, g.shape, dirs, ks, g.origin, g.h,
                                     env.carrier_center, env.carrier_radius, own=sub, thresh=U[sub] - eta)
    upper = np.full(g.shape, np.nan)
    upper[ut.mask] = G
    cells = candidates.cells & (ut.values - upper <= eta)
    return ContactSet(cells, float(eta), g), upper


def max_slope(gamma: ScalarField) -> float:
    """Largest one-step difference quotient of a grid function (Lipschitz estimate)."""
    v = gamma.values
    L = 0.0
    for a, h in enumerate(gamma.grid.h):
        d = np.abs(np.diff(v, axis=a)) / h
        d = d[np.isfinite(d)]
        if d.size:
            L = max(L, float(d.max()))
    return L


ETA_POLICIES = ("auto", "4hL")


def default_eta(gamma, h: float, policy: str = "auto", scale: float = 1.0, lower_error: float = 0.0) -> float:
    """Contact tolerance.

    ``auto``: 1e-9 * max(1, scale) plus ``lower_error``, the amount by which
    the envelope may undershoot the exact sample envelope (zero for the hull
    and the relaxation, which never undershoot). Every exact contact node is
    then detected.
    ``4hL``: 4 h times the largest slope of ``gamma`` (grid field or PL).
    """
    if policy == "auto":
        return 1e-9 * max(1.0, scale) + lower_error
    if policy != "4hL":
        raise ValueError(f"unknown eta policy {policy!r}; choose from {ETA_POLICIES}")
    L = max_slope(gamma) if isinstance(gamma, ScalarField) else float(np.max(np.linalg.norm(gamma.grads, axis=1)))
    return 4.0 * h * L


def contact_set(u_tilde: ScalarField, gamma: ScalarField, eta: float,
                omega_mask: np.ndarray | None = None) -> ContactSet:
    """Cells of Omega where u-tilde - Gamma <= eta."""
    if eta < 0:
        raise ValueError("eta must be >= 0")
    om = u_tilde.mask if omega_mask is None else omega_mask
    diff = np.where(om & gamma.mask, u_tilde.values - gamma.values, np.inf)
    return ContactSet(om & (diff <= eta), float(eta), u_tilde.grid)


# ------------------------------------------------------------ radial helpers

def lower_hull_1d(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Indices of the lower convex hull of points sorted by x (monotone chain)."""
    hull: list[int] = []
    for i in range(len(x)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.array(hull, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class RadialEnvelope:
    """Envelope of a radial profile over a carrier ball, as a function of radius."""

    radii: np.ndarray
    values: np.ndarray
    contact_radius: float

    def __call__(self, r):
        return np.interp(np.abs(r), self.radii, self.values)


def radial_envelope(phi, omega_radius: float, carrier_radius: float, n_samples: int = 200001) -> RadialEnvelope:
    """Envelope of ``min(phi(|x|), 0)`` on B_omega extended by zero to the carrier ball.

    A radial convex envelope is the 1-D envelope of the even extension, so a
    dense 1-D lower hull on [-R, R] suffices.
    """
    r = np.linspace(0.0, carrier_radius, n_samples)
    inside = r <= omega_radius
    v = np.zeros_like(r)
    v[inside] = np.minimum(phi(r[inside]), 0.0)
    xs = np.concatenate([-r[:0:-1], r])
    ys = np.concatenate([v[:0:-1], v])
    idx = lower_hull_1d(xs, ys)
    env = np.interp(r, xs[idx], ys[idx])
    hull_r = xs[idx]
    hull_r = hull_r[hull_r >= 0]
    # contact = hull vertices inside Omega where the profile is negative
    touch = hull_r[(hull_r <= omega_radius) & (np.interp(hull_r, r, v) < 0)]
    rc = float(touch.max()) if touch.size else 0.0
    return RadialEnvelope(r, env, rc)
