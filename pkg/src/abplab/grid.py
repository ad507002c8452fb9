"""Uniform node grids, sampled fields and the boundary conventions used by the pipeline.

Grids are node-centred: an axis with ``resolution`` cells has ``resolution + 1``
nodes, and the node at index ``i`` sits at ``origin + i * h``. A
:class:`ScalarField` pairs a value array with a boolean mask; values outside
the mask are NaN and carry no meaning.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage


class GridError(ValueError):
    """Raised for degenerate grids, bad samples and empty collars."""


@dataclass(frozen=True)
class Domain:
    """A ball or an axis-aligned box in R^dim (dim = 2n)."""

    kind: str
    center: tuple[float, ...]
    radius: float = 1.0
    half_extents: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("ball", "box"):
            raise GridError(f"unknown domain kind {self.kind!r}")
        dim = len(self.center)
        if dim < 2 or dim % 2:
            raise GridError(f"dimension must be even and >= 2, got {dim}")
        if self.kind == "ball" and not self.radius > 0:
            raise GridError("radius must be positive")
        if self.kind == "box":
            if self.half_extents is None or len(self.half_extents) != dim:
                raise GridError("box needs one half extent per axis")
            if min(self.half_extents) <= 0:
                raise GridError("half extents must be positive")

    @classmethod
    def ball(cls, radius: float = 1.0, dim: int = 2, center=None) -> "Domain":
        c = tuple(float(x) for x in (center if center is not None else np.zeros(dim)))
        return cls("ball", c, float(radius))

    @classmethod
    def box(cls, half_extents: Sequence[float], center=None) -> "Domain":
        he = tuple(float(x) for x in half_extents)
        c = tuple(float(x) for x in (center if center is not None else np.zeros(len(he))))
        return cls("box", c, max(he), he)

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def n(self) -> int:
        """Complex dimension."""
        return self.dim // 2

    def extents(self) -> np.ndarray:
        if self.kind == "ball":
            return np.full(self.dim, self.radius)
        return np.asarray(self.half_extents, dtype=float)

    def diameter(self) -> float:
        if self.kind == "ball":
            return 2.0 * self.radius
        return float(2.0 * np.linalg.norm(self.half_extents))

    def contains(self, pts: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        d = np.asarray(pts, dtype=float) - np.asarray(self.center)
        if self.kind == "ball":
            return np.linalg.norm(d, axis=-1) <= self.radius * (1 + tol)
        return np.all(np.abs(d) <= self.extents() * (1 + tol), axis=-1)

    def boundary_distance(self, pts: np.ndarray) -> np.ndarray:
        """Unsigned distance from each point to the boundary."""
        d = np.asarray(pts, dtype=float) - np.asarray(self.center)
        if self.kind == "ball":
            return np.abs(self.radius - np.linalg.norm(d, axis=-1))
        inside = self.extents() - np.abs(d)
        if inside.ndim == 1:
            inside = inside[None]
        out = np.where(np.all(inside >= 0, axis=-1), inside.min(axis=-1),
                       np.linalg.norm(np.maximum(-inside, 0), axis=-1))
        return out if np.ndim(pts) > 1 else out[0]

    def project_to_boundary(self, pts: np.ndarray) -> np.ndarray:
        """Radial projection onto the sphere (balls only)."""
        if self.kind != "ball":
            raise GridError("boundary projection is only defined for balls")
        c = np.asarray(self.center)
        d = np.asarray(pts, dtype=float) - c
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        r = np.where(r == 0, 1.0, r)
        return c + self.radius * d / r


@dataclass(frozen=True)
class Grid:
    origin: tuple[float, ...]
    h: tuple[float, ...]
    shape: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def axes(self) -> list[np.ndarray]:
        return [o + h * np.arange(m) for o, h, m in zip(self.origin, self.h, self.shape)]

    def points(self) -> np.ndarray:
        """All node coordinates, shape ``shape + (dim,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def point(self, index: Sequence[int]) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(self.h) * np.asarray(index)


def make_grid(domain: Domain, resolution: int | Sequence[int]) -> Grid:
    """Grid covering the bounding box of ``domain`` with ``resolution`` cells per axis."""
    res = np.broadcast_to(np.asarray(resolution, dtype=int), (domain.dim,))
    if np.any(res < 4):
        raise GridError(f"resolution must be >= 4 per axis, got {tuple(res)}")
    ext = domain.extents()
    h = 2.0 * ext / res
    origin = np.asarray(domain.center) - ext
    return Grid(tuple(origin.tolist()), tuple(h.tolist()), tuple((res + 1).tolist()))


def concentric_grid(grid: Grid, center: Sequence[float], radius: float) -> tuple[Grid, tuple[int, ...]]:
    """Grid with the same spacing whose nodes include ``grid``'s and cover a ball.

    Returns the new grid and the index offset of ``grid``'s node 0 inside it.
    """
    c = np.asarray(center, dtype=float)
    h = np.asarray(grid.h)
    o = np.asarray(grid.origin)
    lo = np.floor((c - radius - o) / h + 1e-9).astype(int)
    hi = np.ceil((c + radius - o) / h - 1e-9).astype(int)
    lo = np.minimum(lo, 0)
    hi = np.maximum(hi, np.asarray(grid.shape) - 1)
    big = Grid(tuple((o + lo * h).tolist()), grid.h, tuple((hi - lo + 1).tolist()))
    return big, tuple((-lo).tolist())


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray
    mask: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != self.grid.shape or self.mask.shape != self.grid.shape:
            raise GridError("values and mask must match the grid shape")
        if not np.all(np.isfinite(self.values[self.mask])):
            raise GridError("masked cells must hold finite values")
        self.values.setflags(write=False)
        self.mask.setflags(write=False)

    def with_values(self, values: np.ndarray, **meta) -> "ScalarField":
        v = np.where(self.mask, values, np.nan)
        return ScalarField(self.grid, v, self.mask.copy(), {**self.meta, **meta})

    def masked_values(self) -> np.ndarray:
        return self.values[self.mask]

    def masked_points(self) -> np.ndarray:
        return self.grid.points()[self.mask]


def domain_mask(grid: Grid, domain: Domain) -> np.ndarray:
    return domain.contains(grid.points())


def sample(fn: Callable[[np.ndarray], np.ndarray], grid: Grid, domain: Domain) -> ScalarField:
    """Evaluate ``fn`` (vectorised over the last axis) at every node inside ``domain``."""
    pts = grid.points()
    mask = domain.contains(pts)
    vals = np.full(grid.shape, np.nan)
    vals[mask] = np.asarray(fn(pts[mask]), dtype=float)
    bad = mask & ~np.isfinite(vals)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise GridError(f"non-finite value at cell {idx}, point {grid.point(idx).tolist()}")
    return ScalarField(grid, vals, mask)


def _cross_footprint(dim: int) -> np.ndarray:
    return ndimage.generate_binary_structure(dim, 1)


def lsc_regularize(field: ScalarField) -> ScalarField:
    """Discrete liminf: minimum over each cell and its face neighbours inside the mask."""
    if not field.mask.any():
        raise GridError("empty mask")
    v = np.where(field.mask, field.values, np.inf)
    low = ndimage.minimum_filter(v, footprint=_cross_footprint(field.grid.dim), mode="constant", cval=np.inf)
    return field.with_values(np.minimum(low, v))


def sup_neg(field: ScalarField) -> float:
    if not field.mask.any():
        raise GridError("empty mask")
    return max(0.0, -float(np.min(field.masked_values())))


def boundary_collar(field: ScalarField, domain: Domain) -> np.ndarray:
    """Mask of cells within one spacing of the domain boundary."""
    h = max(field.grid.h)
    near = domain.boundary_distance(field.grid.points()) <= h * (1 + 1e-9)
    return near & field.mask


def boundary_sup_neg(field: ScalarField, domain: Domain,
                     fn: Callable[[np.ndarray], np.ndarray] | None = None) -> float:
    """sup of u^- over the boundary collar.

    If ``fn`` is given, the collar nodes are projected onto the boundary sphere
    and ``fn`` is evaluated there, giving the exact trace for closed-form inputs.
    """
    collar = boundary_collar(field, domain)
    if not collar.any():
        raise GridError("empty boundary collar; resolution too coarse")
    if fn is not None:
        vals = np.asarray(fn(domain.project_to_boundary(field.grid.points()[collar])), dtype=float)
    else:
        vals = field.values[collar]
    return max(0.0, -float(np.min(vals)))


def normalize_shift(field: ScalarField, domain: Domain, fn=None) -> tuple[ScalarField, float]:
    """Shift by the boundary sup of u^- so that the shifted field is >= 0 on the boundary."""
    shift = boundary_sup_neg(field, domain, fn)
    if shift == 0.0:
        return field, 0.0
    return field.with_values(field.values + shift, shift=shift), shift


def l2_norm_on(f: ScalarField, mask: np.ndarray) -> float:
    """Riemann-sum L2 norm of ``f`` over the cells selected by ``mask``."""
    m = np.asarray(getattr(mask, "cells", mask), dtype=bool) & f.mask
    vals = f.values[m]
    if not np.all(np.isfinite(vals)):
        raise GridError("f is not finite on the mask; integrate singular densities in closed form")
    return float(np.sqrt(np.sum(vals ** 2) * f.grid.cell_volume))
