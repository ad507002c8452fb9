"""Gradient images and the Alexandrov Monge-Ampere measure of convex envelopes.

For a piecewise-linear convex function every unit of mass sits on a vertex:
the subdifferential at a vertex is the convex hull of the gradients of its
incident facets, and facets map to single slopes. In dimension 2 these
polygons are measured exactly. In higher dimension slopes are hit-tested by
Monte Carlo: a slope ``p`` belongs to the gradient image of a set ``A`` iff
the lowest plane of slope ``p`` lying below the data touches it in ``A``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import kernels
from .envelope import ContactSet, GridEnvelope, PLConvexFunction
from .grid import Grid


class MeasureError(RuntimeError):
    def __init__(self, msg: str, estimate: float | None = None, stderr: float | None = None):
        super().__init__(msg)
        self.estimate = estimate
        self.stderr = stderr


def unit_ball_volume(dim: int) -> float:
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)


@dataclass(frozen=True, eq=False)
class SubdifferentialCell:
    vertex: np.ndarray
    slopes: np.ndarray
    bounded: bool

    def volume(self) -> float:
        if not self.bounded:
            return math.inf
        return _polytope_volume(self.slopes)


@dataclass(eq=False)
class MeasureReport:
    total: float
    per_vertex: dict = field(default_factory=dict)
    method: str = "exact2d"
    mc_stderr: float = 0.0
    seed: int | None = None
    samples: int = 0
    dim: int = 2
    skipped_unbounded: int = 0

    def to_dict(self) -> dict:
        return {
            "total": self.total, "method": self.method, "mc_stderr": self.mc_stderr,
            "seed": self.seed, "samples": self.samples, "dim": self.dim,
            "skipped_unbounded": self.skipped_unbounded,
            "per_vertex": [[int(k), float(v)] for k, v in sorted(self.per_vertex.items())],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _polytope_volume(pts: np.ndarray) -> float:
    pts = np.unique(np.round(pts, 14), axis=0)
    if len(pts) <= pts.shape[1]:
        return 0.0
    try:
        return float(ConvexHull(pts).volume)
    except QhullError:
        return 0.0   # flat hull


def subdifferential_at_vertex(pl: PLConvexFunction, v: int) -> SubdifferentialCell:
    """Convex hull of the gradients of the facets incident to vertex ``v``."""
    fids = pl.adjacency.get(int(v))
    if fids is None or len(fids) == 0:
        raise ValueError(f"vertex {v} has no incident facet")
    bounded = not np.isin(v, pl.boundary_vertices)
    return SubdifferentialCell(pl.points[v], pl.grads[fids], bool(bounded))


def vertices_in_mask(pl: PLConvexFunction, grid: Grid, mask) -> np.ndarray:
    """Hull vertices whose sample node lies in ``mask`` (array or ContactSet)."""
    cells = getattr(mask, "cells", mask)
    v = pl.vertices
    idx = np.rint((pl.points[v] - np.asarray(grid.origin)) / np.asarray(grid.h)).astype(int)
    ok = np.all((idx >= 0) & (idx < np.asarray(grid.shape)), axis=1)
    sel = np.zeros(len(v), dtype=bool)
    sel[ok] = cells[tuple(idx[ok].T)]
    return v[sel]


def gradient_image_volume(envelope, A, *, seed: int | None = None, samples: int = 100_000,
                          target_rel_stderr: float = 0.02, candidates=None) -> MeasureReport:
    """Lebesgue measure of the gradient image of ``A``.

    ``envelope`` is a :class:`PLConvexFunction` (exact polygon areas, dim 2;
    ``A`` is an array of vertex indices) or a :class:`GridEnvelope` (Monte
    Carlo, any dim; ``A`` is a cell mask or :class:`ContactSet`).
    """
    if isinstance(envelope, GridEnvelope):
        return monte_carlo_gradient_image(envelope, A, seed=seed, samples=samples,
                                          target_rel_stderr=target_rel_stderr, candidates=candidates)
    pl = envelope
    A = np.atleast_1d(np.asarray(A, dtype=np.int64))
    if A.size == 0:
        raise ValueError("A must be nonempty")
    if pl.dim != 2:
        raise ValueError("exact cell volumes need dim 2; pass a GridEnvelope for Monte Carlo")
    per = {}
    skipped = 0
    for v in np.unique(A):
        cell = subdifferential_at_vertex(pl, v)
        if not cell.bounded:
            skipped += 1
            continue
        per[int(v)] = cell.volume()
    return MeasureReport(float(sum(per.values())), per, "exact2d", 0.0, None, 0, 2, skipped)


def brute_force_gradient_image(pl: PLConvexFunction, A, slope_grid_resolution: int = 400) -> MeasureReport:
    """Independent slope-scan oracle: count slopes whose lowest touching vertex is in ``A``."""
    if pl.dim != 2:
        raise ValueError("brute-force oracle is for dim 2")
    lo = pl.grads.min(axis=0)
    hi = pl.grads.max(axis=0)
    if np.any(hi - lo <= 1e-14):
        raise ValueError("degenerate slope bounding box")
    m = int(slope_grid_resolution)
    hp = (hi - lo) / m
    ax = [lo[a] + hp[a] * (np.arange(m) + 0.5) for a in range(2)]
    P = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1).reshape(-1, 2)
    V = pl.vertices
    _, arg = kernels.tilted_argmin(P, pl.points[V], pl.values[V])
    hit = np.isin(V[arg], np.asarray(A))
    total = float(hit.sum() * hp.prod())
    return MeasureReport(total, {}, "bruteforce2d", float(hp.prod()), None, len(P), 2)


def monte_carlo_gradient_image(env: GridEnvelope, A, *, seed: int | None, samples: int = 100_000,
                               target_rel_stderr: float = 0.02, candidates=None,
                               block: int = 4096) -> MeasureReport:
    """Stratified Monte Carlo estimate of the gradient image of ``A``.

    The competitor for each slope is the minimum over Omega nodes of
    ``u(x) - <p, x>``, against the carrier sphere term ``-<p, c> - R |p|``
    (u-tilde vanishes off Omega). Candidate nodes default to ``A``, which
    is exact when ``A`` contains the contact set.

    Strata: the ball of slopes that the touching argument guarantees to hit
    (every sample is still tested) and the shell around it out to
    ``M / (R - r_A)``, beyond which no slope can beat the carrier sphere
    (``M`` the depth and ``r_A`` the reach of the candidate nodes).
    """
    if seed is None:
        raise MeasureError("Monte Carlo requires a seed")
    ut = env.u_tilde
    cells = np.asarray(getattr(A, "cells", A), dtype=bool)
    cand = cells if candidates is None else np.asarray(getattr(candidates, "cells", candidates), dtype=bool)
    cand = cand | cells
    if not cells.any():
        raise ValueError("A must be nonempty")
    pts = ut.grid.points()
    X = pts[cand]
    V = ut.values[cand]
    inA = cells[cand]
    dim = ut.grid.dim
    c = env.carrier_center
    R = env.carrier_radius
    M = max(0.0, -float(np.min(V)))
    if M == 0.0:
        return MeasureReport(0.0, {}, "montecarlo", 0.0, seed, 0, dim)
    r_A = float(np.max(np.linalg.norm(X - c, axis=1)))
    if not R > r_A:
        raise MeasureError("carrier must strictly contain the candidate nodes")
    L = M / (R - r_A)
    x_min = X[np.argmin(V)]
    rho0 = min(M / (R + float(np.linalg.norm(x_min - c))), L)
    vol_in = unit_ball_volume(dim) * rho0 ** dim
    vol_out = unit_ball_volume(dim) * L ** dim - vol_in

    def hits(P):
        mins, arg = kernels.tilted_argmin(P, X, V)
        m_out = -(P @ c) - R * np.linalg.norm(P, axis=1)
        return (mins < m_out) & inA[arg]

    ss = np.random.SeedSequence(seed)
    n_in = n_out = h_in = h_out = 0
    est = se = 0.0
    while n_in + n_out < samples:
        rng = np.random.default_rng(ss.spawn(1)[0])
        k_in = block // 4
        g = rng.standard_normal((k_in, dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        P_in = g * (rho0 * rng.random(k_in) ** (1.0 / dim))[:, None]
        k_out = block - k_in
        g = rng.standard_normal((k_out, dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        rad = (rho0 ** dim + rng.random(k_out) * (L ** dim - rho0 ** dim)) ** (1.0 / dim)
        P_out = g * rad[:, None]
        h_in += int(hits(P_in).sum())
        n_in += k_in
        h_out += int(hits(P_out).sum())
        n_out += len(P_out)
        f_in, f_out = h_in / n_in, h_out / n_out
        est = vol_in * f_in + vol_out * f_out
        var = vol_in ** 2 * f_in * (1 - f_in) / n_in + vol_out ** 2 * f_out * (1 - f_out) / n_out
        se = math.sqrt(var)
        if se <= target_rel_stderr * est or est == 0.0:
            break
    else:
        if se > target_rel_stderr * est:
            raise MeasureError(f"Monte Carlo budget of {samples} exhausted at rel. stderr {se / est:.3g}", est, se)
    return MeasureReport(float(est), {}, "montecarlo", float(se), seed, n_in + n_out, dim)


def check_gut2_bound(report: MeasureReport, v_min: float, d: float) -> tuple[bool, float]:
    """Does the measured gradient image dominate omega_{2n} (-v_min)^{2n} / (2d)^{2n}?

    Returns (holds, measured / bound); the ratio is inf when the bound is 0.
    """
    dim = report.dim
    rhs = unit_ball_volume(dim) * (max(0.0, -v_min) / (2.0 * d)) ** dim
    if rhs == 0.0:
        return True, math.inf
    ratio = report.total / rhs
    return bool(report.total >= rhs), float(ratio)


def gut2_rhs(sup_neg: float, d: float, dim: int) -> float:
    return unit_ball_volume(dim) * (sup_neg / (2.0 * d)) ** dim
