"""Finite-difference real and complex Hessians and Monge-Ampere densities.

Points of C^n are stored as real vectors ``(x1, y1, x2, y2, ...)`` with
``z_j = x_j + i y_j``. Functions passed in are vectorised over the last axis.
"""
from __future__ import annotations

import math

import numpy as np


class HessianError(ValueError):
    pass


def default_step(x) -> float:
    return max(1e-4, 1e-4 * float(np.max(np.abs(x))))


def _fd_hessian(fn, x: np.ndarray, h: float) -> np.ndarray:
    m = x.size
    E = np.eye(m) * h
    pts = [x]
    for a in range(m):
        pts += [x + E[a], x - E[a]]
    for a in range(m):
        for b in range(a + 1, m):
            pts += [x + E[a] + E[b], x + E[a] - E[b], x - E[a] + E[b], x - E[a] - E[b]]
    vals = np.asarray(fn(np.array(pts)), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise HessianError(f"non-finite evaluation near {x.tolist()} (outside the function's domain?)")
    f0 = vals[0]
    H = np.empty((m, m))
    for a in range(m):
        H[a, a] = (vals[1 + 2 * a] - 2 * f0 + vals[2 + 2 * a]) / h ** 2
    k = 1 + 2 * m
    for a in range(m):
        for b in range(a + 1, m):
            pp, pm, mp, mm = vals[k:k + 4]
            H[a, b] = H[b, a] = (pp - pm - mp + mm) / (4 * h * h)
            k += 4
    return H


def real_hessian(fn, x, h_fd: float | None = None, richardson: bool | None = None,
                 rtol: float = 1e-5) -> np.ndarray:
    """Symmetric central-difference Hessian.

    With ``richardson=None`` the estimate at ``h`` is compared with the one
    at ``h/2`` and the extrapolated value is returned when they disagree by
    more than ``rtol``.
    """
    x = np.asarray(x, dtype=float)
    h = default_step(x) if h_fd is None else float(h_fd)
    if not h > 0:
        raise HessianError("h_fd must be positive")
    H1 = _fd_hessian(fn, x, h)
    if richardson is False:
        return H1
    H2 = _fd_hessian(fn, x, h / 2)
    if richardson or np.max(np.abs(H1 - H2)) > rtol * max(1.0, np.max(np.abs(H2))):
        return (4 * H2 - H1) / 3
    return H1


def complex_from_real(H: np.ndarray) -> np.ndarray:
    """u_{j kbar} = 1/4 [(d_xj d_xk + d_yj d_yk) + i (d_xj d_yk - d_yj d_xk)] u."""
    Hxx = H[0::2, 0::2]
    Hyy = H[1::2, 1::2]
    Hxy = H[0::2, 1::2]
    Hyx = H[1::2, 0::2]
    C = 0.25 * ((Hxx + Hyy) + 1j * (Hxy - Hyx))
    return 0.5 * (C + C.conj().T)


def complex_hessian(fn, z, h_fd: float | None = None) -> np.ndarray:
    return complex_from_real(real_hessian(fn, z, h_fd))


def cma_from_real(H: np.ndarray) -> float:
    n = H.shape[0] // 2
    return 4 ** n * math.factorial(n) * float(np.linalg.det(complex_from_real(H)).real)


def cma_density(fn, z, h_fd: float | None = None) -> float:
    """4^n n! det(u_{j kbar}); negative values are returned as they are."""
    return cma_from_real(real_hessian(fn, z, h_fd))


def real_hessian_det(fn, x, h_fd: float | None = None) -> float:
    return float(np.linalg.det(real_hessian(fn, x, h_fd)))


def comparison_margin(H: np.ndarray) -> float:
    """4^n n! det(u_{j kbar}) - 2^n n! sqrt(det D^2 u) for a real Hessian ``H``."""
    n = H.shape[0] // 2
    lhs = cma_from_real(H)
    rhs = 2 ** n * math.factorial(n) * math.sqrt(max(float(np.linalg.det(H)), 0.0))
    return lhs - rhs


def hessian_comparison_check(fn_convex, points, h_fd: float | None = None,
                             psd_tol: float = 1e-6) -> tuple[bool, float]:
    """Check the complex-vs-real Hessian inequality at each point.

    Raises if the sampled real Hessian is not positive semidefinite at some
    point (the inequality is only claimed for convex functions).
    """
    worst = math.inf
    bad = []
    margins = []
    for p in np.atleast_2d(points):
        H = real_hessian(fn_convex, p, h_fd)
        scale = max(1.0, float(np.max(np.abs(H))))
        if np.linalg.eigvalsh(H)[0] < -psd_tol * scale:
            bad.append(p.tolist())
            continue
        margins.append((comparison_margin(H), scale))
    if bad:
        raise HessianError(f"not convex at {bad}")
    for m, scale in margins:
        worst = min(worst, m)
    tol = 1e-6 * max((s for _, s in margins), default=1.0)
    return bool(worst >= -tol), float(worst)


def cap_density(n: int, a: float, r):
    """Complex Monge-Ampere density of -sqrt(a^2 - |z|^2)."""
    r = np.asarray(r, dtype=float)
    return 2 ** (n - 1) * math.factorial(n) * (2 * a * a - r * r) / (a * a - r * r) ** ((n + 2) / 2)


def cap_real_det(n: int, a: float, r):
    r = np.asarray(r, dtype=float)
    return a * a / (a * a - r * r) ** (n + 1)


def cap_ratio_upper(a: float, d: float) -> float:
    return 1.0 + a ** 4 / (64 * d ** 4 - 16 * a * a * d * d)


def ratio_bound_check(a: float, d: float, points, n: int = 1) -> bool:
    """1 <= f^2 / (4^n (n!)^2 det D^2 u) <= 1 + a^4/(64 d^4 - 16 a^2 d^2) on the contact disc."""
    if not 0 < a <= d:
        raise ValueError("need 0 < a <= d")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.linalg.norm(pts, axis=1)
    R = a * a / (2 * d)
    if np.any(r > R * (1 + 1e-12)):
        raise ValueError("points must lie in the contact disc")
    f = cap_density(n, a, r)
    ratio = f ** 2 / (4 ** n * math.factorial(n) ** 2 * cap_real_det(n, a, r))
    eps = 1e-12
    return bool(np.all(ratio >= 1 - eps) and np.all(ratio <= cap_ratio_upper(a, d) * (1 + eps)))
