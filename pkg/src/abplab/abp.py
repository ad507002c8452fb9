"""The ABP inequality for plurisubharmonic functions, checked on a grid.

    sup_Omega u^-  <=  sup_dOmega (u_*)^-  +  C diam(Omega) ||f 1_contact||_{L2}^(1/n)

with the sharp constant C = 1 / (2 sqrt(pi) (n!)^(1/2n)). The report also
carries the gradient-image audit behind it: the measure of the gradient
image of the contact set against omega_{2n} (sup u^- / 2d)^{2n}.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .envelope import (contact_set, convex_envelope_exact, convex_envelope_legendre, default_eta,
                       refine_contact, tilde_extend)
from .hessian import cma_from_real, real_hessian
from .grid import (Domain, ScalarField, boundary_sup_neg, lsc_regularize, make_grid, normalize_shift,
                   sample, sup_neg, l2_norm_on)
from .measure import (MeasureError, MeasureReport, gradient_image_volume, gut2_rhs, unit_ball_volume,
                      vertices_in_mask)

SCHEMA_VERSION = 1


class ABPError(RuntimeError):
    pass


def abp_constant(n: int) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    return 1.0 / (2.0 * math.sqrt(math.pi) * math.factorial(n) ** (1.0 / (2 * n)))


def abp_constant_eps(n: int, d: float, eps: float) -> float:
    """Constant for envelopes taken over B_{d+eps} instead of B_{2d}."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return (d + eps) / (4.0 * d * math.sqrt(math.pi) * math.factorial(n) ** (1.0 / (2 * n)))


@dataclass
class VerifyConfig:
    resolution: int = 256
    eta_policy: str = "auto"
    eta: float | None = None
    seed: int | None = None
    mc_samples: int = 100_000
    mc_rel_stderr: float = 0.02
    carrier: str = "2d"            # "2d" or "d+eps"
    carrier_eps: float = 0.1
    boundary_mode: str = "project"  # "project" (trace of the function) or "collar" (grid values)
    tol: float = 0.02
    refine_sweeps: int = 1
    measure: bool = True
    fd_step: float | None = None
    spot_checks: int = 8

    def validate(self) -> None:
        if self.resolution < 4:
            raise ValueError("resolution must be >= 4")
        if self.carrier not in ("2d", "d+eps"):
            raise ValueError("carrier must be '2d' or 'd+eps'")
        if self.boundary_mode not in ("project", "collar"):
            raise ValueError("boundary_mode must be 'project' or 'collar'")
        if self.fd_step is not None and not self.fd_step > 0:
            raise ValueError("fd_step must be > 0")
        for name in ("tol", "mc_rel_stderr", "carrier_eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.eta is not None and self.eta < 0:
            raise ValueError("eta must be >= 0")


@dataclass
class ABPReport:
    lhs: float
    boundary_term: float
    contact_l2: float
    constant: float
    diam: float
    rhs: float
    ratio: float
    holds: bool
    tol: float
    n: int
    measure_total: float | None = None
    gut2_rhs: float | None = None
    gut2_holds: bool | None = None
    alexandrov_holds: bool | None = None
    alexandrov_slack: float | None = None
    details: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self, include_metadata: bool = True) -> dict:
        d = asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        if not include_metadata:
            d.pop("metadata")
        return _jsonable(d)

    def to_json(self, include_metadata: bool = True) -> str:
        return json.dumps(self.to_dict(include_metadata), sort_keys=True, indent=1)

    def comparable_json(self) -> str:
        """JSON without the metadata block, for byte-level determinism checks."""
        return self.to_json(include_metadata=False)

    CSV_FIELDS = ("name", "params", "n", "resolution", "lhs", "boundary_term", "contact_l2", "constant",
                  "diam", "rhs", "ratio", "holds", "measure_total", "gut2_rhs", "contact_cells")

    def csv_row(self) -> dict:
        det = self.details
        row = {k: getattr(self, k, None) for k in self.CSV_FIELDS}
        row.update(name=det.get("name"), params=json.dumps(det.get("params", {}), sort_keys=True),
                   resolution=det.get("resolution"), contact_cells=det.get("contact_cells"))
        return row


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


def verify_alexandrov_principle(v: ScalarField, omega: Domain, measure_total: float, d: float,
                                fn=None) -> tuple[bool, float]:
    """sup v^- <= sup_boundary v^- + 2d (measure / omega_dim)^(1/dim); returns (holds, slack)."""
    dim = v.grid.dim
    lhs = sup_neg(v)
    bnd = boundary_sup_neg(v, omega, fn)
    rhs = bnd + 2.0 * d * (measure_total / unit_ball_volume(dim)) ** (1.0 / dim)
    return bool(lhs <= rhs * (1 + 1e-12)), float(rhs - lhs)


def corollary_pota_bound(u, f_sup: float | None, U: Domain, resolution: int = 128, f=None) -> dict:
    """sup_U u^- <= sup_dU u^- + C diam(U) Vol(U)^(1/2n) ||f||_inf^(1/n) on a subdomain U."""
    n = U.n
    g = make_grid(U, resolution)
    field_u = sample(u, g, U)
    if f_sup is None:
        if f is None:
            raise ValueError("need f_sup or f")
        f_sup = float(np.max(sample(f, g, U).masked_values()))
    if U.kind == "ball":
        vol = unit_ball_volume(U.dim) * U.radius ** U.dim
    else:
        vol = float(np.prod(2 * np.asarray(U.half_extents)))
    lhs = sup_neg(field_u)
    bnd = boundary_sup_neg(field_u, U, u)
    rhs = bnd + abp_constant(n) * U.diameter() * vol ** (1.0 / (2 * n)) * max(f_sup, 0.0) ** (1.0 / n)
    return {"holds": bool(lhs <= rhs), "slack": float(rhs - lhs), "lhs": lhs, "boundary_term": bnd,
            "rhs": float(rhs), "f_sup": float(f_sup)}


def verify_abp(u, omega: Domain, ball_d: Domain | None = None, *, f=None, contact_l2=None,
               config: VerifyConfig | None = None, continuous: bool = True, name: str = "custom",
               params: dict | None = None) -> ABPReport:
    """Run the whole pipeline for a pointwise function ``u`` on ``omega``.

    ``contact_l2(radius_or_None, contact)`` may supply the L2 norm of f over
    the contact set in closed form; otherwise ``f`` is sampled and summed
    over the contact cells.
    """
    cfg = config or VerifyConfig()
    cfg.validate()
    t0 = time.perf_counter()
    ball_d = ball_d or Domain.ball(max(omega.extents) if omega.kind == "box" else omega.radius,
                                   omega.dim, omega.center)
    n = omega.n
    dim = omega.dim
    d = ball_d.radius
    carrier_R = 2 * d if cfg.carrier == "2d" else d + cfg.carrier_eps
    C = abp_constant(n) if cfg.carrier == "2d" else abp_constant_eps(n, d, cfg.carrier_eps)
    diam = omega.diameter()

    grid = make_grid(omega, cfg.resolution)
    field_u = sample(u, grid, omega)
    low = lsc_regularize(field_u)
    lsc_gap = float(np.nanmax(field_u.values - low.values))
    work = field_u if continuous else low
    fn = u if (cfg.boundary_mode == "project" and continuous) else None
    lhs = sup_neg(work)
    shifted, shift = normalize_shift(work, omega, fn)
    boundary = shift
    h = float(max(grid.h))
    det = {"name": name, "params": params or {}, "resolution": cfg.resolution, "h": h, "dim": dim,
           "shift": shift, "lsc_gap": lsc_gap, "carrier_radius": carrier_R, "carrier": cfg.carrier,
           "boundary_mode": cfg.boundary_mode}

    M = sup_neg(shifted)
    measure = None
    contact = None
    if M == 0.0:
        det.update(contact_cells=0, envelope_method="none")
        l2 = 0.0
    else:
        exact = dim == 2
        if exact:
            ut = tilde_extend(shifted, omega, ball_d, carrier_R)
            pl = convex_envelope_exact(ut)
            om_mask = ut.meta["omega_mask"]
            gamma = pl.evaluate_on_grid(ut.grid, om_mask)
            eta = cfg.eta if cfg.eta is not None else default_eta(pl, h, cfg.eta_policy, M)
            contact = contact_set(ut, gamma, eta, om_mask)
            det.update(envelope_method="exact_hull", hull_facets=len(pl.facets))
        else:
            ut = tilde_extend(shifted, omega, ball_d, carrier_R, on_carrier=False)
            env = convex_envelope_legendre(ut)
            if cfg.eta is not None:
                eta = cfg.eta
                contact = contact_set(ut, env.gamma, eta)
            else:
                eta0 = default_eta(env.gamma, h, cfg.eta_policy, M, env.meta["error_bound"])
                cand = contact_set(ut, env.gamma, eta0)
                contact = cand
                if cfg.eta_policy == "auto":
                    contact, _ = refine_contact(env, cand, cfg.refine_sweeps, default_eta(None, h, "auto", M))
                eta = contact.eta
            det.update(envelope_method="legendre+relaxation", legendre_error_bound=env.meta["error_bound"])
        if contact.count == 0:
            raise ABPError("contact set is empty although u-tilde is not identically zero; refine the grid")
        cpts = contact.points() - np.asarray(ball_d.center)
        r_max = float(np.max(np.linalg.norm(cpts, axis=1)))
        det.update(eta=eta, contact_cells=contact.count, contact_radius_max=r_max)
        if contact_l2 is not None:
            l2 = float(contact_l2(max(r_max, h / 2), contact))
            det["contact_l2_method"] = "radial_quadrature"
        else:
            if f is None:
                raise ValueError("need f or contact_l2")
            cells = contact.cells
            if exact:
                cells = cells[tuple(slice(o, o + m) for o, m in zip(ut.meta["omega_offset"], grid.shape))]
            l2 = l2_norm_on(sample(f, grid, omega), cells)
            det["contact_l2_method"] = "grid_riemann_sum"

        if cfg.measure:
            if exact:
                A = vertices_in_mask(pl, ut.grid, contact)
                measure = gradient_image_volume(pl, A) if len(A) else MeasureReport(0.0)
            else:
                if cfg.seed is None:
                    raise ABPError("a Monte Carlo seed is required for the measure audit in dimension > 2")
                measure = gradient_image_volume(env, contact, seed=cfg.seed, samples=cfg.mc_samples,
                                                target_rel_stderr=cfg.mc_rel_stderr)

    rhs = boundary + C * diam * (l2 ** (1.0 / n) if math.isfinite(l2) else math.inf)
    if lhs == 0.0:
        ratio = 0.0
    elif rhs == 0.0:
        ratio = math.inf
    else:
        ratio = lhs / rhs
    rep = ABPReport(lhs=float(lhs), boundary_term=float(boundary), contact_l2=float(l2), constant=C, diam=diam,
                    rhs=float(rhs), ratio=float(ratio), holds=bool(ratio <= 1 + cfg.tol), tol=cfg.tol, n=n,
                    details=det)
    if measure is not None:
        bound = gut2_rhs(M, d, dim)
        slack = 3 * measure.mc_stderr
        rep.measure_total = measure.total
        rep.gut2_rhs = bound
        rep.gut2_holds = bool(measure.total + slack >= bound * (1 - 1e-12))
        det.update(measure=measure.to_dict() | {"per_vertex": len(measure.per_vertex)},
                   gut2_ratio=measure.total / bound if bound > 0 else math.inf)
        al_rhs = boundary + 2 * d * ((measure.total + slack) / unit_ball_volume(dim)) ** (1.0 / dim)
        rep.alexandrov_holds = bool(lhs <= al_rhs * (1 + 1e-12))
        rep.alexandrov_slack = float(al_rhs - lhs)
    # plotting handles; not a dataclass field, so never serialised
    rep.artifacts = {"u": field_u, "gamma": gamma if M > 0 and exact else (env.gamma if M > 0 else None),
                     "contact": contact, "omega_offset": ut.meta.get("omega_offset") if M > 0 else None}
    rep.metadata = {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"), "runtime_s": time.perf_counter() - t0,
                    "backend": kernels.BACKEND}
    return rep


def verify_entry(entry, config: VerifyConfig | None = None) -> ABPReport:
    """verify_abp for a gallery entry, with the contact L2 term by radial quadrature."""
    if not entry.notes.get("verify_applicable", True) or entry.radial is None:
        raise ABPError(f"{entry.name} has no closed-form psh profile to verify")
    cfg = config or VerifyConfig()
    omega = Domain.ball(entry.d, entry.dim)
    R = 2 * entry.d if cfg.carrier == "2d" else entry.d + cfg.carrier_eps
    if cfg.carrier == "2d" and entry.analytic_contact_radius is not None:
        analytic = entry.analytic_contact_radius
    else:
        analytic = entry.envelope(R).contact_radius

    def l2(grid_radius, contact):
        return entry.contact_l2(analytic if analytic > 0 else grid_radius)

    rep = verify_abp(entry.u, omega, omega, f=entry.f, contact_l2=l2, config=cfg,
                     continuous=entry.continuous, name=entry.name, params=entry.params)
    rep.details["analytic_contact_radius"] = analytic
    rep.details["cma_spot_check"] = cma_spot_check(entry, cfg.spot_checks, cfg.fd_step)
    return rep


def cma_spot_check(entry, count: int = 8, h_fd: float | None = None) -> dict:
    """Finite-difference CMA density at a few smooth points against the closed form."""
    if entry.radial is None:
        raise ABPError("spot check needs a radial entry")
    breaks = set(entry.radial.breakpoints()) | set(entry.singular_radii)
    h = h_fd or 1e-4 * entry.d
    radii = [entry.d * (k + 0.5) / (count + 1) for k in range(count)]
    radii = [r for r in radii if min(abs(r - b) for b in breaks) > 20 * h]
    worst_rel = 0.0
    min_fd = math.inf
    for k, r in enumerate(radii):
        x = np.zeros(entry.dim)
        x[k % entry.dim] = r * math.cos(0.3 * k)
        x[(k + 1) % entry.dim] = r * math.sin(0.3 * k)
        D2 = real_hessian(entry.u, x, h)
        fd = cma_from_real(D2)
        # pluriharmonic regions have f = 0; measure the error against |D2 u|^n there
        scale = 4 ** entry.n * math.factorial(entry.n) * float(np.max(np.abs(D2))) ** entry.n
        exact = float(entry.f(x))
        min_fd = min(min_fd, fd)
        worst_rel = max(worst_rel, abs(fd - exact) / max(abs(exact), 1e-3 * scale, 1e-12))
    return {"points": len(radii), "min_fd_density": min_fd, "max_rel_error": worst_rel}
