"""Radial real Monge-Ampere Dirichlet problem on a ball in R^m.

For v(x) = V(|x|) convex, det D^2 v = V'' (V'/rho)^(m-1) = (rho^(1-m) ((V')^m)' ) / m,
so the problem det D^2 v = g, v = b on the sphere of radius r integrates to

    V'(rho) = (m * int_0^rho s^(m-1) g(s) ds)^(1/m)
    V(rho)  = b - int_rho^r V'(s) ds
"""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate


class RadialError(ValueError):
    pass


def _quad(fn, a, b, epsabs):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(fn, a, b, epsabs=epsabs, epsrel=1e-11, limit=200)
        except integrate.IntegrationWarning as e:
            raise RadialError(f"quadrature did not converge on [{a:.6g}, {b:.6g}]: {e}") from None
    return val


@dataclass(eq=False)
class RadialProfile:
    radii: np.ndarray
    values: np.ndarray
    dvalues: np.ndarray
    boundary_value: float
    m: int
    _g: object = None
    _mass: np.ndarray | None = None

    def __call__(self, rho):
        return np.interp(rho, self.radii, self.values)

    def dv(self, rho: float) -> float:
        """V'(rho), evaluated by quadrature from the nearest tabulated mass."""
        k = max(int(np.searchsorted(self.radii, rho, side="right")) - 1, 0)
        lo = self.radii[k]
        extra = _quad(lambda s: s ** (self.m - 1) * self._g(s), lo, rho, 0.0) if rho > lo else 0.0
        return (self.m * (self._mass[k] + extra)) ** (1.0 / self.m)

    def residual(self, points, rel_step: float = 1e-4) -> float:
        """max relative mismatch of V'' (V'/rho)^(m-1) against g, with V'' by central differences."""
        worst = 0.0
        for rho in np.atleast_1d(points):
            hs = rel_step * rho
            d2 = (self.dv(rho + hs) - self.dv(rho - hs)) / (2 * hs)
            det = d2 * (self.dv(rho) / rho) ** (self.m - 1)
            g = float(self._g(rho))
            worst = max(worst, abs(det - g) / max(abs(g), 1e-300))
        return worst

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("rho,v,dv\n")
        for row in zip(self.radii, self.values, self.dvalues):
            buf.write(",".join(repr(float(x)) for x in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, boundary_value: float | None = None, m: int = 2) -> "RadialProfile":
        lines = text.strip().splitlines()
        if lines[0].strip() != "rho,v,dv":
            raise RadialError("radial profile CSV must start with 'rho,v,dv'")
        data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
        bv = float(data[-1, 1]) if boundary_value is None else boundary_value
        return cls(data[:, 0], data[:, 1], data[:, 2], bv, m)


def solve_radial_dirichlet(g, r: float, m: int, boundary_value: float, n_points: int = 201) -> RadialProfile:
    """Radial solution of det D^2 v = g on B_r(0) in R^m with v = boundary_value on the sphere."""
    if not r > 0:
        raise RadialError("radius must be positive")
    radii = np.linspace(0.0, r, n_points)
    probe = np.linspace(0.0, r, 4 * n_points + 1)[1:]
    gp = np.array([float(g(s)) for s in probe])
    if np.any(gp < 0) or not np.all(np.isfinite(gp)):
        raise RadialError(f"density must be finite and >= 0 (min sample {np.nanmin(gp):.3g})")

    def weight(s):
        return s ** (m - 1) * g(s)

    mass = np.zeros(n_points)
    for k in range(1, n_points):
        mass[k] = mass[k - 1] + _quad(weight, radii[k - 1], radii[k], 0.0)

    def dv_at(s, k):
        extra = _quad(weight, radii[k], s, 0.0) if s > radii[k] else 0.0
        return (m * (mass[k] + extra)) ** (1.0 / m)

    dvals = (m * mass) ** (1.0 / m)
    scale = max(float(dvals[-1]) * r, 1e-300)
    drop = np.zeros(n_points)
    for k in range(n_points - 2, -1, -1):
        drop[k] = drop[k + 1] + _quad(lambda s, k=k: dv_at(s, k), radii[k], radii[k + 1], 1e-13 * scale)
    values = boundary_value - drop
    return RadialProfile(radii, values, dvals, float(boundary_value), m, g, mass)


@dataclass(frozen=True)
class LemmaCheck:
    holds: bool
    max_violation: float
    radius: float
    boundary_value: float
    center_gap: float
    profile: RadialProfile


def verify_lemma_convexf(entry, z0=None, r: float | None = None, envelope=None,
                         tol: float = 1e-6, n_points: int = 201) -> LemmaCheck:
    """Solve the radial problem with density f^2/(4^n n!^2) and check v <= envelope on B_r(z0).

    ``envelope`` is a radial callable rho -> Gamma(rho) (defaults to the
    entry's exact radial envelope). The boundary constant is the minimum of
    the envelope over the sphere, which for a radial envelope is Gamma(r).
    """
    if entry.radial is None:
        raise RadialError(f"{entry.name} is not radially symmetric; the radial solver does not apply")
    z0 = np.zeros(entry.dim) if z0 is None else np.asarray(z0, dtype=float)
    if np.linalg.norm(z0) > 0:
        raise RadialError("the radial solver needs z0 at the centre of symmetry")
    env = entry.envelope() if envelope is None else envelope
    contact = getattr(env, "contact_radius", entry.analytic_contact_radius)
    if contact is not None and np.linalg.norm(z0) > contact + 1e-12:
        raise RadialError("z0 must lie in the contact set")
    if r is None:
        r = entry.analytic_contact_radius / 2 if entry.analytic_contact_radius else entry.d / 10
    if not 0 < r < entry.d - np.linalg.norm(z0):
        raise RadialError("need 0 < r < dist(z0, boundary)")
    n = entry.n
    c = 4.0 ** n * math.factorial(n) ** 2

    def g(s):
        return float(entry.radial.density(np.array([s]))[0]) ** 2 / c

    bv = float(env(np.array([r]))[0]) if np.ndim(env(np.array([r]))) else float(env(r))
    prof = solve_radial_dirichlet(g, r, entry.dim, bv, n_points)
    gam = np.asarray(env(prof.radii), dtype=float)
    viol = float(np.max(prof.values - gam))
    gap = float(prof.values[0] - entry.radial.phi(np.zeros(1))[0])
    return LemmaCheck(bool(viol <= tol), viol, float(r), bv, gap, prof)
