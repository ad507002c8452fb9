"""Closed-form plurisubharmonic test functions with known contact sets.

All entries except :func:`hessian_identity_entry` are radial, u(z) = phi(|z|),
built from smooth pieces. For a radial function the complex Monge-Ampere
density and the real Hessian determinant are

    f      = 2^(n-1) n! (phi'/r)^(n-1) (phi'' + phi'/r)
    det D2 = phi'' (phi'/r)^(2n-1)

so every density below is evaluated in closed form from phi', phi''.

Transition annuli use a *slope bridge*: phi' (or r phi' in the variable
log r) climbs from the inner slope to the outer one along a quintic
smoothstep, reparametrised by t -> t^beta so that the integrated value hits
the outer piece exactly. A non-decreasing slope makes the bridge convex in
that variable, hence convex (resp. plurisubharmonic) in C^n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .envelope import RadialEnvelope, radial_envelope


class GalleryError(ValueError):
    pass


def sphere_area(dim: int) -> float:
    return 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)


# ------------------------------------------------------------ radial pieces

@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float
    phi: Callable
    dphi: Callable
    ddphi: Callable


def _smoothstep_mean(beta: float) -> float:
    return 6 / (5 * beta + 1) - 15 / (4 * beta + 1) + 10 / (3 * beta + 1)


def slope_bridge(s0, y0, m0, s1, y1, m1, *, what="bridge"):
    """C^1 convex function on [s0, s1] matching value and slope at both ends.

    Returns (psi, dpsi, ddpsi) in the variable s.
    """
    chord = (y1 - y0) / (s1 - s0)
    if not (m0 < chord < m1):
        raise GalleryError(f"{what}: patching needs slope {m0:.6g} < chord {chord:.6g} < slope {m1:.6g}")
    theta = (chord - m0) / (m1 - m0)
    beta = optimize.brentq(lambda b: _smoothstep_mean(b) - theta, 1e-9, 1e9, xtol=1e-14, rtol=1e-15)
    ds = s1 - s0
    dm = m1 - m0

    def t_of(s):
        return np.clip((np.asarray(s, dtype=float) - s0) / ds, 0.0, 1.0)

    def psi(s):
        t = t_of(s)
        tb = t ** beta
        integral = t * (6 * tb ** 5 / (5 * beta + 1) - 15 * tb ** 4 / (4 * beta + 1) + 10 * tb ** 3 / (3 * beta + 1))
        return y0 + ds * (m0 * t + dm * integral)

    def dpsi(s):
        u = t_of(s) ** beta
        return m0 + dm * u ** 3 * (10 - 15 * u + 6 * u * u)

    def ddpsi(s):
        t = t_of(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            u = t ** beta
            du = np.where(t > 0, beta * u / np.where(t > 0, t, 1.0), 0.0)
        return dm * 30 * u ** 2 * (1 - u) ** 2 * du / ds

    psi.beta = beta
    return psi, dpsi, ddpsi


def log_bridge(r0, r1, p0, p1):
    """Bridge convex in log r between radial pieces p0 (inner) and p1 (outer)."""
    s0, s1 = math.log(r0), math.log(r1)
    psi, dpsi, ddpsi = slope_bridge(s0, float(p0.phi(r0)), r0 * float(p0.dphi(r0)),
                                    s1, float(p1.phi(r1)), r1 * float(p1.dphi(r1)), what="log-radial bridge")

    def phi(r):
        return psi(np.log(r))

    def dphi(r):
        return dpsi(np.log(r)) / r

    def ddphi(r):
        s = np.log(r)
        return (ddpsi(s) - dpsi(s)) / r ** 2

    return Piece(r0, r1, phi, dphi, ddphi), psi.beta


def radial_bridge(r0, r1, p0, p1):
    psi, dpsi, ddpsi = slope_bridge(r0, float(p0.phi(r0)), float(p0.dphi(r0)),
                                    r1, float(p1.phi(r1)), float(p1.dphi(r1)), what="radial bridge")
    return Piece(r0, r1, psi, dpsi, ddpsi), psi.beta


def cap_piece(a, lo, hi):
    return Piece(lo, hi,
                 lambda r: -np.sqrt(a * a - np.asarray(r) ** 2),
                 lambda r: np.asarray(r) / np.sqrt(a * a - np.asarray(r) ** 2),
                 lambda r: a * a / (a * a - np.asarray(r) ** 2) ** 1.5)


def line_piece(slope, root, lo, hi):
    return Piece(lo, hi, lambda r: slope * (np.asarray(r) - root),
                 lambda r: np.full_like(np.asarray(r, dtype=float), slope),
                 lambda r: np.zeros_like(np.asarray(r, dtype=float)))


@dataclass(eq=False)
class RadialFunction:
    n: int
    pieces: list[Piece]
    # f ~ r^kappa near 0 (None: bounded there)
    kappa_at_zero: float | None = None

    def _dispatch(self, r, attr):
        r = np.asarray(r, dtype=float)
        top = self.pieces[-1].hi
        # node radii computed as norms can overshoot the outer radius by an ulp
        r = np.where((r > top) & (r <= top * (1 + 1e-12)), top, r)
        out = np.full(r.shape, np.nan)
        for k, p in enumerate(self.pieces):
            last = k == len(self.pieces) - 1
            sel = (r >= p.lo) & ((r <= p.hi) if last else (r < p.hi))
            if np.any(sel):
                with np.errstate(divide="ignore", invalid="ignore"):
                    out[sel] = getattr(p, attr)(r[sel])
        return out

    def phi(self, r):
        return self._dispatch(r, "phi")

    def dphi(self, r):
        return self._dispatch(r, "dphi")

    def ddphi(self, r):
        return self._dispatch(r, "ddphi")

    def _dphi_over_r(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = self.dphi(r) / r
        zero = r == 0
        if np.any(zero):
            q[zero] = self.ddphi(np.zeros(1))[0] if self.kappa_at_zero is None else np.inf
        return q

    def density(self, r):
        q = self._dphi_over_r(r)
        d2 = self.ddphi(r)
        lap = d2 + q
        # harmonic pieces cancel exactly; drop the rounding residue
        lap = np.where(np.abs(lap) <= 1e-12 * (np.abs(d2) + np.abs(q)), 0.0, lap)
        return 2 ** (self.n - 1) * math.factorial(self.n) * q ** (self.n - 1) * lap

    def real_det(self, r):
        q = self._dphi_over_r(r)
        return self.ddphi(r) * q ** (2 * self.n - 1)

    def breakpoints(self) -> list[float]:
        return [p.lo for p in self.pieces] + [self.pieces[-1].hi]

    def radial_integral(self, g: Callable, r_lo: float, r_hi: float) -> float:
        """Integral of g(r) over the annulus r_lo <= |x| <= r_hi in R^{2n}."""
        dim = 2 * self.n
        cuts = sorted({r_lo, r_hi, *[b for b in self.breakpoints() if r_lo < b < r_hi]})
        total = 0.0
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            val, _ = integrate.quad(lambda r: g(np.array([r]))[0] * r ** (dim - 1), lo, hi,
                                    limit=400, epsabs=0.0, epsrel=1e-11)
            total += val
        return sphere_area(dim) * total

    def lp_integral(self, p: float, r_lo: float, r_hi: float) -> float:
        """Integral of f^p over the annulus; inf when the singularity at 0 is not integrable."""
        if r_lo == 0.0 and self.kappa_at_zero is not None and p * self.kappa_at_zero + 2 * self.n <= 0:
            return math.inf
        if r_hi <= r_lo:
            return 0.0
        return self.radial_integral(lambda r: np.abs(self.density(r)) ** p, r_lo, r_hi)

    def check_shape(self, r_max: float, convex: bool, n_samples: int = 20001) -> dict:
        """Numerical convexity / plurisubharmonicity audit of the profile."""
        r = np.linspace(0.0, r_max, n_samples)[1:]
        d1 = self.dphi(r)
        d2 = self.ddphi(r)
        scale = np.maximum(1.0, np.abs(d1 / r) + np.abs(d2))
        psh = bool(np.all(d1 >= -1e-12 * scale) and np.all(d2 + d1 / r >= -1e-9 * scale))
        cvx = bool(np.all(d2 >= -1e-9 * scale))
        return {"psh": psh, "convex": cvx, "ok": psh and (cvx or not convex)}


# ----------------------------------------------------------- gallery entry

@dataclass(eq=False)
class GalleryEntry:
    name: str
    n: int
    params: dict
    omega_radius: float
    u: Callable
    f: Callable
    analytic_contact_radius: float | None
    radial: RadialFunction | None = None
    singular_radii: tuple = ()
    closed_form: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)
    continuous: bool = True
    _env: RadialEnvelope | None = None

    @property
    def dim(self) -> int:
        return 2 * self.n

    @property
    def d(self) -> float:
        return self.omega_radius

    def envelope(self, carrier_radius: float | None = None) -> RadialEnvelope:
        R = 2 * self.d if carrier_radius is None else carrier_radius
        if self._env is None or self._env_R != R:
            self._env = radial_envelope(self.radial.phi, self.d, R)
            self._env_R = R
        return self._env

    def f_radial(self, r):
        return self.radial.density(r)

    def contact_l2(self, radius: float | None = None) -> float:
        """L2 norm of f over the contact ball (analytic radius by default), by radial quadrature."""
        R = self.analytic_contact_radius if radius is None else radius
        return math.sqrt(self.radial.lp_integral(2.0, 0.0, R)) if R > 0 else 0.0

    def lp_norm(self, p: float, r_lo: float = 0.0, r_hi: float | None = None) -> float:
        r_hi = self.d if r_hi is None else r_hi
        return self.radial.lp_integral(p, r_lo, r_hi) ** (1.0 / p)

    def describe(self) -> dict:
        return {"name": self.name, "n": self.n, "params": self.params, "omega_radius": self.d,
                "analytic_contact_radius": self.analytic_contact_radius,
                "singular_radii": list(self.singular_radii),
                "closed_form": self.closed_form, "notes": self.notes}


def _radial_entry(name, n, params, d, rf: RadialFunction, contact, singular=(), closed=None, notes=None,
                  convex=False):
    audit = rf.check_shape(d, convex)
    if not audit["ok"]:
        raise GalleryError(f"{name}: transition profile failed the {'convexity' if convex else 'psh'} audit")

    def u(x):
        return rf.phi(np.linalg.norm(np.asarray(x, dtype=float), axis=-1))

    def f(x):
        return rf.density(np.linalg.norm(np.asarray(x, dtype=float), axis=-1))

    return GalleryEntry(name, n, params, d, u, f, contact, rf, tuple(singular), closed or {},
                        {**(notes or {}), "shape_audit": audit})


def spherical_cap(n: int = 1, a: float = 0.5, d: float = 1.0) -> GalleryEntry:
    """-sqrt(a^2 - |z|^2) near the contact ball B_{a^2/2d}, continued by its tangent line through (d, 0)."""
    if not 0 < a <= d:
        raise GalleryError("spherical_cap needs 0 < a <= d")
    r1 = a * a / d
    pieces = [cap_piece(a, 0.0, r1)]
    if r1 < d:
        s1 = r1 / math.sqrt(a * a - r1 * r1)
        pieces.append(line_piece(s1, d, r1, d))
    rf = RadialFunction(n, pieces)
    R = a * a / (2 * d)
    closed = {
        "contact_radius": R,
        "int_detD2u_contact": math.pi ** n / math.factorial(n) * (R * R / (a * a - R * R)) ** n,
        "sup_neg": a,
        "ratio_upper": 1 + a ** 4 / (64 * d ** 4 - 16 * a * a * d * d),
        "f0": 2 ** (n - 1) * math.factorial(n) * 2 / a ** n,
    }
    sing = (a,) if r1 >= d else ()
    return _radial_entry("spherical_cap", n, {"a": a, "d": d}, d, rf, R, sing, closed, convex=True)


def _tangent_radius(phi, dphi, R, lo, hi):
    return optimize.brentq(lambda t: phi(t) + dphi(t) * (R - t), lo, hi, xtol=1e-15)


def power_example(n: int = 1, alpha: float = 0.5) -> GalleryEntry:
    """|z|^alpha - 1 on the unit ball."""
    if not 0 < alpha < 2:
        raise GalleryError("power example needs 0 < alpha < 2")
    p = Piece(0.0, 1.0, lambda r: np.asarray(r) ** alpha - 1,
              lambda r: alpha * np.asarray(r) ** (alpha - 1),
              lambda r: alpha * (alpha - 1) * np.asarray(r) ** (alpha - 2))
    kappa = n * (alpha - 2)
    rf = RadialFunction(n, [p], kappa_at_zero=kappa)
    if alpha <= 1:
        contact = 0.0
    else:
        contact = _tangent_radius(lambda t: t ** alpha - 1, lambda t: alpha * t ** (alpha - 1), 2.0, 1e-12, 1.0)
    closed = {"lp_threshold": 2 / (2 - alpha), "f_coeff": 2 ** (n - 1) * math.factorial(n) * alpha ** (n + 1),
              "f_exponent": n * alpha - 2 * n, "contact_radius": contact, "sup_neg": 1.0,
              "f_in_L2": alpha > 1}
    return _radial_entry("power", n, {"alpha": alpha}, 1.0, rf, contact, (0.0,), closed, convex=alpha >= 1)


def wang1(eps: float = 0.05, d: float = 1.0, n: int = 1) -> GalleryEntry:
    """Full-sphere cap with a steep linear collar: fixed contact term, unbounded L^p norm."""
    if not 0 < eps < d / 4:
        raise GalleryError("wang1 needs 0 < eps < d/4 so that B_{d-2eps} contains the contact ball B_{d/2}")
    k = math.sqrt(d * d - (d - eps) ** 2) / eps
    inner = cap_piece(d, 0.0, d - 2 * eps)
    outer = line_piece(k, d, d - eps, d)
    bridge, beta = radial_bridge(d - 2 * eps, d - eps, inner, outer)
    rf = RadialFunction(n, [inner, bridge, outer])
    closed = {"contact_radius": d / 2, "sup_neg": d}
    return _radial_entry("wang1", n, {"eps": eps, "d": d}, d, rf, d / 2, (), closed,
                         {"bridge_beta": beta}, convex=True)


def wang2(eps: float = 0.1, alpha: float = 0.5, d: float = 1.0, n: int = 1) -> GalleryEntry:
    """Normalised power function with its tip replaced by a small cap of radius eps."""
    if not 0 < alpha < 1:
        raise GalleryError("wang2 needs 0 < alpha < 1")
    if not 0 < eps < d:
        raise GalleryError("wang2 needs 0 < eps < d")
    r1 = eps * eps / (2 * d)
    rb = 1.25 * r1
    inner = cap_piece(eps, 0.0, rb)

    def outer_from(r2):
        return Piece(r2, d, lambda r: eps * ((np.asarray(r) / d) ** alpha - 1),
                     lambda r: eps * alpha * np.asarray(r) ** (alpha - 1) / d ** alpha,
                     lambda r: eps * alpha * (alpha - 1) * np.asarray(r) ** (alpha - 2) / d ** alpha)

    if not float(outer_from(2 * r1).phi(2 * r1)) > float(inner.phi(r1)):
        raise GalleryError("wang2: u(eps^2/d) > u(eps^2/2d) fails; eps too large")
    # a psh (log-convex) bridge needs the outer log-slope to beat the chord;
    # widen the annulus geometrically from eps^2/d until it does
    r2 = 2 * r1
    while True:
        outer = outer_from(r2)
        try:
            bridge, beta = log_bridge(rb, r2, inner, outer)
            break
        except GalleryError:
            r2 *= 2 ** 0.25
            if r2 >= d / 2:
                raise GalleryError("wang2: no psh patch of the cap into the power profile inside B_{d/2}")
    rf = RadialFunction(n, [inner, bridge, outer])
    env = radial_envelope(rf.phi, d, 2 * d)
    if abs(env.contact_radius - r1) > 2e-3 * r1 + 4 * d / 200000:
        raise GalleryError(f"wang2: bridge changed the contact radius ({env.contact_radius:.6g} vs {r1:.6g})")
    closed = {"contact_radius": r1, "sup_neg": eps,
              # the contact ball sits inside the cap, so the contact term is the cap's
              "contact_l2_cap": spherical_cap(n, eps, d).contact_l2()}
    return _radial_entry("wang2", n, {"eps": eps, "alpha": alpha, "d": d}, d, rf, r1, (rb,), closed,
                         {"bridge_beta": beta, "bridge_outer_radius": r2})


def wang3(eps: float = 0.01, d: float = 1.0, n: int = 1) -> GalleryEntry:
    """log(|z|/d) with a steep quadratic core: growing contact term, vanishing L^p (p < 2) norm."""
    r0 = eps / (3 * d)
    r1 = 3 * eps / d
    if not (0 < eps and r1 < d):
        raise GalleryError("wang3 needs 0 < eps < d^2/3")
    Lg = abs(math.log(eps / d))
    core = Piece(0.0, r0, lambda r: Lg / eps * np.asarray(r) ** 2 - Lg,
                 lambda r: 2 * Lg / eps * np.asarray(r),
                 lambda r: np.full_like(np.asarray(r, dtype=float), 2 * Lg / eps))
    outer = Piece(r1, d, lambda r: np.log(np.asarray(r) / d), lambda r: 1 / np.asarray(r),
                  lambda r: -1 / np.asarray(r) ** 2)
    if not float(outer.phi(r1)) > float(core.phi(r0)):
        raise GalleryError("wang3: u(3eps/d) > u(eps/3d) fails; eps too large")
    bridge, beta = log_bridge(r0, r1, core, outer)
    rf = RadialFunction(n, [core, bridge, outer])
    rc = 2 * d - math.sqrt(4 * d * d - eps)
    if not rc < r0:
        raise GalleryError("wang3: contact ball must lie in the quadratic core")
    rr = np.linspace(r0, r1, 2001)[1:-1]
    fb = rf.density(rr)
    closed = {"contact_radius": rc, "sup_neg": Lg, "log_eps": Lg}
    return _radial_entry("wang3", n, {"eps": eps, "d": d}, d, rf, rc, (), closed,
                         {"bridge_beta": beta, "f_decreasing_on_bridge": bool(np.all(np.diff(fb) <= 1e-9 * fb.max()))})


def hessian_identity_entry(phi: Callable | None = None, t: float = 1.0) -> GalleryEntry:
    """Smooth part (Re z)^2 (1 + |w|^2) of the discontinuous example in C^2.

    The singular potential is replaced by ``t * phi`` with ``phi`` harmonic in z
    (default 0); the raw complex Hessian determinant is then
    (Re z)^2 (1 - |w|^2) / 2.
    """
    def u(x):
        x = np.asarray(x, dtype=float)
        base = x[..., 0] ** 2 * (1 + x[..., 2] ** 2 + x[..., 3] ** 2)
        return base if phi is None else base + t * phi(x)

    def raw_det(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * x[..., 0] ** 2 * (1 - x[..., 2] ** 2 - x[..., 3] ** 2)

    def f(x):
        return 32.0 * raw_det(x)

    e = GalleryEntry("hessian_identity", 2, {"t": t}, 1.0, u, f, None, None, (), {},
                     {"verify_applicable": False})
    e.raw_det = raw_det
    return e


GALLERY = {
    "spherical_cap": (spherical_cap, {"n": 1, "a": 0.5, "d": 1.0}),
    "power": (power_example, {"n": 1, "alpha": 0.5}),
    "wang1": (wang1, {"eps": 0.05, "d": 1.0, "n": 1}),
    "wang2": (wang2, {"eps": 0.1, "alpha": 0.5, "d": 1.0, "n": 1}),
    "wang3": (wang3, {"eps": 0.01, "d": 1.0, "n": 1}),
    "hessian_identity": (hessian_identity_entry, {"t": 1.0}),
}


def get_entry(name: str, **params) -> GalleryEntry:
    if name not in GALLERY:
        raise GalleryError(f"unknown gallery entry {name!r}; choose from {sorted(GALLERY)}")
    ctor, defaults = GALLERY[name]
    kw = {k: params[k] if params.get(k) is not None else v for k, v in defaults.items()}
    return ctor(**kw)
