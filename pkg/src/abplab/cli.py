"""Command-line front end: ``abplab verify|sweep|envelope|measure|gallery``.

Exit codes: 0 the inequality holds, 1 it is violated, 2 usage or input
error, 3 numerical failure. Errors are written to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import agf
from .abp import ABPError, ABPReport, VerifyConfig, _jsonable, abp_constant, abp_constant_eps, verify_entry
from .envelope import ETA_POLICIES, EnvelopeError, PLConvexFunction, lower_hull
from .gallery import GALLERY, GalleryError, get_entry
from .grid import GridError
from .measure import MeasureError, gradient_image_volume
from .radial import RadialError

EXIT_OK, EXIT_VIOLATED, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
GALLERY_PARAMS = ("n", "a", "d", "alpha", "eps", "t")
USAGE_ERRORS = (GalleryError, GridError, agf.AGFError, ValueError, OSError)
NUMERIC_ERRORS = (EnvelopeError, MeasureError, RadialError, ABPError, FloatingPointError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ------------------------------------------------------------ config


def read_config(path) -> list[str]:
    """Flat ``key = value`` file to CLI tokens; ``#`` starts a comment."""
    tokens = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if val.lower() in ("true", "yes", "on"):
            tokens.append(flag)
        elif val.lower() in ("false", "no", "off"):
            continue
        else:
            tokens += [flag, val]
    return tokens


def _expand_config(argv: list[str]) -> list[str]:
    # file values go right after the subcommand so later flags override them
    out = list(argv)
    for i, tok in enumerate(argv):
        path = None
        if tok == "--config" and i + 1 < len(argv):
            path, drop = argv[i + 1], 2
        elif tok.startswith("--config="):
            path, drop = tok.split("=", 1)[1], 1
        if path is not None:
            del out[i:i + drop]
            cmd_end = 2 if out and out[0] == "gallery" else 1
            return out[:cmd_end] + read_config(path) + out[cmd_end:]
    return out


def _add_gallery_params(p):
    p.add_argument("--n", type=int, help="complex dimension")
    p.add_argument("--a", type=float, help="cap radius")
    p.add_argument("--d", type=float, help="radius of Omega")
    p.add_argument("--alpha", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--t", type=float)


def _add_run_flags(p):
    p.add_argument("--gallery", required=True, help="gallery entry name")
    _add_gallery_params(p)
    p.add_argument("--res", type=int, default=None, help="cells per axis (default 256 for n=1, 48 otherwise)")
    p.add_argument("--eta", default="auto", help=f"contact tolerance: a number or one of {ETA_POLICIES}")
    p.add_argument("--fd-step", type=float)
    p.add_argument("--seed", type=int, help="Monte Carlo seed (falls back to $ABPLAB_SEED)")
    p.add_argument("--mc-samples", type=int, default=100_000)
    p.add_argument("--mc-rel-stderr", type=float, default=0.02, help="Monte Carlo stopping target")
    p.add_argument("--carrier", choices=("2d", "d+eps"), default="2d")
    p.add_argument("--carrier-eps", type=float, default=0.1)
    p.add_argument("--boundary-mode", choices=("project", "collar"), default="project")
    p.add_argument("--tol", type=float, default=0.02)
    p.add_argument("--no-measure", action="store_true", help="skip the gradient-image audit")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", action="append", help="json, csv, svg (repeatable or comma separated)")
    p.add_argument("--config", help="flat key=value file; command-line flags win")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="abplab", description="Grid verification of the ABP estimate for psh functions.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", help="run the pipeline on one gallery entry")
    _add_run_flags(v)

    s = sub.add_parser("sweep", help="verify over a parameter range and tabulate")
    _add_run_flags(s)
    s.add_argument("--param", required=True, help="gallery parameter to vary")
    s.add_argument("--values", required=True, help="comma separated values")
    s.add_argument("--lp", action="append", type=float, default=[], help="also tabulate ||f||_Lp(Omega)")
    s.add_argument("--norms-only", action="store_true", help="skip the grid pipeline, norms only")
    s.add_argument("--workers", type=int, default=1)

    e = sub.add_parser("envelope", help="convex envelope of an AGF1 field (dim 2)")
    e.add_argument("input")
    e.add_argument("--out")

    m = sub.add_parser("measure", help="gradient-image measure of a PL convex function or AGF1 field")
    m.add_argument("input", help="AGF1 file or PL JSON written by 'envelope'")
    m.add_argument("--at", help="comma separated point; measure the cell of the nearest vertex only")
    m.add_argument("--seed", type=int, help="recorded for reproducibility (the 2-D measure is exact)")
    m.add_argument("--out")

    g = sub.add_parser("gallery", help="list or describe gallery entries")
    gs = g.add_subparsers(dest="gallery_command", required=True, parser_class=_Parser)
    gs.add_parser("list")
    gd = gs.add_parser("describe")
    gd.add_argument("name")
    _add_gallery_params(gd)
    return ap


# ------------------------------------------------------------ helpers


def _gallery_kwargs(args) -> dict:
    return {k: getattr(args, k) for k in GALLERY_PARAMS if getattr(args, k, None) is not None}


def _entry(name: str, params: dict):
    if name not in GALLERY:
        raise GalleryError(f"unknown gallery entry {name!r}; choose from {sorted(GALLERY)}")
    allowed = GALLERY[name][1]
    extra = sorted(set(params) - set(allowed))
    if extra:
        raise GalleryError(f"{name} does not take {extra}; parameters are {sorted(allowed)}")
    return get_entry(name, **params)


def _seed(args) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("ABPLAB_SEED")
    if env is None or env.strip() == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"ABPLAB_SEED must be an integer, got {env!r}") from None


def _config(args, n: int, seed: int | None) -> VerifyConfig:
    res = args.res if args.res is not None else (256 if n == 1 else 48)
    eta_policy, eta = "auto", None
    if args.eta in ETA_POLICIES:
        eta_policy = args.eta
    else:
        try:
            eta = float(args.eta)
        except ValueError:
            raise UsageError(f"--eta must be a number or one of {ETA_POLICIES}") from None
    measure = not args.no_measure
    if measure and n > 1 and seed is None:
        raise UsageError("the Monte Carlo measure audit (n > 1) needs --seed or ABPLAB_SEED")
    if args.mc_samples <= 0:
        raise UsageError("--mc-samples must be positive")
    cfg = VerifyConfig(resolution=res, eta_policy=eta_policy, eta=eta, seed=seed, mc_samples=args.mc_samples,
                       mc_rel_stderr=args.mc_rel_stderr,
                       carrier=args.carrier, carrier_eps=args.carrier_eps, boundary_mode=args.boundary_mode,
                       tol=args.tol, measure=measure, fd_step=args.fd_step)
    cfg.validate()
    return cfg


def _formats(args) -> list[str]:
    if not args.format:
        return ["json", "csv"]
    out = []
    for item in args.format:
        for f in item.split(","):
            f = f.strip()
            if f not in ("json", "csv", "svg"):
                raise UsageError(f"unknown format {f!r}")
            out.append(f)
    return out


def _stem(name: str, params: dict) -> str:
    parts = [name] + [f"{k}{params[k]:g}" if isinstance(params[k], float) else f"{k}{params[k]}"
                      for k in sorted(params)]
    return "_".join(parts)


def _csv_text(rows: list[dict], fields) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(r.get(k)) for k in fields})
    return buf.getvalue()


def _cell(x):
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    return "" if x is None else x


def render_svg(rep: ABPReport) -> str:
    """u, its envelope and the contact set for n = 1, as deterministic SVG text."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    art = getattr(rep, "artifacts", None)
    if art is None or rep.n != 1:
        raise UsageError("SVG output is only available for n = 1")
    u = art["u"]
    matplotlib.rcParams["svg.hashsalt"] = "abplab"
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.6))
    g = u.grid
    ext = [g.origin[0], g.origin[0] + g.h[0] * (g.shape[0] - 1),
           g.origin[1], g.origin[1] + g.h[1] * (g.shape[1] - 1)]
    panels = [("u", np.where(u.mask, u.values, np.nan))]
    gamma = art["gamma"]
    contact = art["contact"]
    off = art.get("omega_offset")
    if gamma is not None:
        gv = np.asarray(gamma.values, dtype=float)
        cells = contact.cells
        if off is not None:
            sl = tuple(slice(o, o + m) for o, m in zip(off, g.shape))
            gv, cells = gv[sl], cells[sl]
        panels.append(("envelope", np.where(u.mask, gv, np.nan)))
    else:
        cells = np.zeros(g.shape, dtype=bool)
        panels.append(("envelope", np.zeros(g.shape)))
    for ax, (title, img) in zip(axes, panels):
        im = ax.imshow(img.T, origin="lower", extent=ext, cmap="viridis")
        ax.set_title(title)
        fig.colorbar(im, ax=ax, shrink=0.8)
    ax = axes[2]
    ax.imshow(np.where(u.mask, panels[0][1], np.nan).T, origin="lower", extent=ext, cmap="Greys")
    pts = g.points()[cells]
    if len(pts):
        ax.scatter(pts[:, 0], pts[:, 1], s=2, c="tab:red", marker="s", linewidths=0)
    ax.set_title(f"contact set ({int(cells.sum())} cells)")
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def radial_slice_csv(rep: ABPReport) -> str:
    """u, envelope and contact flag along the first coordinate axis through the centre."""
    art = getattr(rep, "artifacts", None)
    u = art["u"]
    g = u.grid
    mid = tuple(s // 2 for s in g.shape)
    xs = g.axes()[0]
    gamma = art["gamma"]
    gv = np.full(g.shape, np.nan) if gamma is None else np.asarray(gamma.values)
    cells = np.zeros(g.shape, dtype=bool) if art["contact"] is None else art["contact"].cells
    off = art.get("omega_offset")
    if off is not None:
        sl = tuple(slice(o, o + m) for o, m in zip(off, g.shape))
        gv, cells = gv[sl], cells[sl]
    rows = []
    for i, x in enumerate(xs):
        idx = (i,) + mid[1:]
        if u.mask[idx]:
            rows.append({"x1": float(x), "u": float(u.values[idx]), "gamma": float(gv[idx]),
                         "contact": int(cells[idx])})
    return _csv_text(rows, ("x1", "u", "gamma", "contact"))


def _write(out_dir: Path, name: str, text: str) -> str:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text)
    return str(path)


# ------------------------------------------------------------ commands


def cmd_verify(args) -> int:
    params = _gallery_kwargs(args)
    entry = _entry(args.gallery, params)
    cfg = _config(args, entry.n, _seed(args))
    formats = _formats(args)
    if "svg" in formats and entry.n != 1:
        raise UsageError("SVG output is only for n = 1; higher n writes a radial-slice CSV instead")
    rep = verify_entry(entry, cfg)
    text = rep.to_json()
    if args.out:
        out = Path(args.out)
        stem = _stem(entry.name, entry.params)
        if "json" in formats:
            _write(out, stem + ".json", text + "\n")
        if "csv" in formats:
            _write(out, stem + ".csv", _csv_text([rep.csv_row()], ABPReport.CSV_FIELDS))
            if entry.n > 1:
                _write(out, stem + "_slice.csv", radial_slice_csv(rep))
        if "svg" in formats:
            _write(out, stem + ".svg", render_svg(rep))
    sys.stdout.write(text + "\n")
    return EXIT_OK if rep.holds else EXIT_VIOLATED


def _parse_values(text: str) -> list[float]:
    vals = [t.strip() for t in text.split(",") if t.strip()]
    if not vals:
        raise UsageError("--values is empty")
    try:
        return [float(v) for v in vals]
    except ValueError:
        raise UsageError(f"--values must be numbers, got {text!r}") from None


def _oracle(entry, carrier: str, carrier_eps: float) -> dict:
    """Closed-form ratio: every term from the radial profile, nothing from the grid."""
    rf = entry.radial
    d = entry.d
    rs = np.linspace(0.0, d, 20001)
    lhs = max(0.0, -float(np.min(rf.phi(rs))))
    bnd = max(0.0, -float(rf.phi(np.array([d]))[0]))
    if carrier == "2d":
        C = abp_constant(entry.n)
        radius = entry.analytic_contact_radius
    else:
        C = abp_constant_eps(entry.n, d, carrier_eps)
        radius = entry.envelope(d + carrier_eps).contact_radius
    l2 = entry.contact_l2(radius) if radius and radius > 0 else 0.0
    rhs = bnd + C * 2 * d * (l2 ** (1.0 / entry.n) if math.isfinite(l2) else math.inf)
    return {"oracle_contact_l2": l2, "oracle_ratio": lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)}


def cmd_sweep(args) -> int:
    values = _parse_values(args.values)
    if args.param not in GALLERY_PARAMS:
        raise UsageError(f"--param must be one of {GALLERY_PARAMS}")
    base = _gallery_kwargs(args)
    seed = _seed(args)
    entries = []
    for v in values:
        kw = dict(base)
        kw[args.param] = int(v) if args.param == "n" else v
        entries.append(_entry(args.gallery, kw))
    # per-point seeds are derived from the base seed, so points are independent of scheduling
    point_seeds = ([int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(len(values))]
                   if seed is not None else [None] * len(values))

    def run(k):
        e = entries[k]
        row = {"param": args.param, "value": values[k]}
        row.update(_oracle(e, args.carrier, args.carrier_eps))
        row["contact_l2_closed_form"] = row["oracle_contact_l2"]
        for p in args.lp:
            row[f"lp_{p:g}"] = e.lp_norm(p)
        if not args.norms_only:
            rep = verify_entry(e, _config(args, e.n, point_seeds[k]))
            row.update(rep.csv_row())
            row["holds"] = rep.holds
        return row

    if args.workers > 1:
        with ThreadPoolExecutor(args.workers) as pool:
            rows = list(pool.map(run, range(len(values))))
    else:
        rows = [run(k) for k in range(len(values))]
    fields = ["param", "value", "oracle_contact_l2", "oracle_ratio"] + [f"lp_{p:g}" for p in args.lp]
    if not args.norms_only:
        fields += [f for f in ABPReport.CSV_FIELDS if f not in fields]
    text = _csv_text(rows, fields)
    if args.out:
        _write(Path(args.out), f"sweep_{args.gallery}_{args.param}.csv", text)
    sys.stdout.write(text)
    if args.norms_only:
        return EXIT_OK
    return EXIT_OK if all(r["holds"] for r in rows) else EXIT_VIOLATED


def _load_pl(path: str) -> PLConvexFunction:
    data = Path(path).read_bytes()
    if data.lstrip().startswith(b"{"):
        try:
            return PLConvexFunction.from_json(data.decode("utf-8"))
        except (KeyError, TypeError, json.JSONDecodeError, UnicodeDecodeError) as e:
            raise UsageError(f"malformed PL JSON in {path}: {e}") from None
    field = agf.loads(data)
    if field.grid.dim != 2:
        raise UsageError(f"{path}: standalone envelope/measure work on 2-D fields (got dim {field.grid.dim})")
    return lower_hull(field.masked_points(), field.masked_values())


def cmd_envelope(args) -> int:
    pl = _load_pl(args.input)
    text = pl.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    sys.stdout.write(text + "\n")
    return EXIT_OK


def cmd_measure(args) -> int:
    pl = _load_pl(args.input)
    if args.at:
        try:
            x = np.array([float(t) for t in args.at.split(",")])
        except ValueError:
            raise UsageError(f"--at must be comma separated numbers, got {args.at!r}") from None
        if x.shape != (pl.dim,):
            raise UsageError(f"--at needs {pl.dim} coordinates")
        V = pl.vertices
        A = V[[int(np.argmin(np.linalg.norm(pl.points[V] - x, axis=1)))]]
    else:
        A = pl.vertices
    rep = gradient_image_volume(pl, A)
    rep.seed = _seed(args)
    text = rep.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    sys.stdout.write(text + "\n")
    return EXIT_OK


def cmd_gallery(args) -> int:
    if args.gallery_command == "list":
        for name in sorted(GALLERY):
            defaults = ", ".join(f"{k}={v}" for k, v in GALLERY[name][1].items())
            sys.stdout.write(f"{name}\t{defaults}\n")
        return EXIT_OK
    entry = _entry(args.name, _gallery_kwargs(args))
    sys.stdout.write(json.dumps(_jsonable(entry.describe()), sort_keys=True, indent=1) + "\n")
    return EXIT_OK


COMMANDS = {"verify": cmd_verify, "sweep": cmd_sweep, "envelope": cmd_envelope,
            "measure": cmd_measure, "gallery": cmd_gallery}


def _fail(code: int, exc: BaseException) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("offset", "residual", "estimate", "stderr"):
        val = getattr(exc, attr, None)
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            err[attr] = val if math.isfinite(val) else str(val)
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(_expand_config(argv))
        return COMMANDS[args.command](args)
    except UsageError as e:
        return _fail(EXIT_USAGE, e)
    except NUMERIC_ERRORS as e:
        return _fail(EXIT_NUMERIC, e)
    except USAGE_ERRORS as e:
        return _fail(EXIT_USAGE, e)


if __name__ == "__main__":
    sys.exit(main())
