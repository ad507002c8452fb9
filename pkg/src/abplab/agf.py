"""Reader and writer for AGF1 grid-field files.

Layout: one UTF-8 header line

    AGF1 dim=<2n> counts=<c1,...> origin=<o1,...> h=<h1,...> [encoding=bin|csv]

followed by the node values in row-major order, either as little-endian
float64 (``bin``, the default) or as comma separated text (``csv``, one
grid row of the last axis per line). NaN marks cells outside the mask.
"""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .grid import Grid, ScalarField


class AGFError(ValueError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


def _floats(text: str, key: str, offset: int) -> list[float]:
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        raise AGFError(f"bad value list for {key!r}", offset) from None


def dumps(field: ScalarField, encoding: str = "bin") -> bytes:
    g = field.grid
    fmt = lambda xs: ",".join(repr(float(x)) for x in xs)
    header = (f"AGF1 dim={g.dim} counts={','.join(str(c) for c in g.shape)} "
              f"origin={fmt(g.origin)} h={fmt(g.h)}")
    vals = np.where(field.mask, field.values, np.nan)
    if encoding == "bin":
        return (header + "\n").encode() + vals.astype("<f8").tobytes(order="C")
    if encoding == "csv":
        buf = io.StringIO()
        np.savetxt(buf, vals.reshape(-1, g.shape[-1]), delimiter=",", fmt="%.17g")
        return (header + " encoding=csv\n").encode() + buf.getvalue().encode()
    raise ValueError(f"unknown encoding {encoding!r}")


def loads(data: bytes) -> ScalarField:
    nl = data.find(b"\n")
    if nl < 0:
        raise AGFError("missing header line", 0)
    try:
        header = data[:nl].decode("utf-8")
    except UnicodeDecodeError as e:
        raise AGFError("header is not UTF-8", e.start) from None
    tokens = header.split()
    if not tokens or tokens[0] != "AGF1":
        raise AGFError("missing AGF1 magic", 0)
    kv = {}
    pos = len(tokens[0]) + 1
    for tok in tokens[1:]:
        off = header.find(tok, pos)
        if "=" not in tok:
            raise AGFError(f"malformed header token {tok!r}", off)
        k, v = tok.split("=", 1)
        kv[k] = (v, off)
        pos = off + len(tok)
    for key in ("dim", "counts", "origin", "h"):
        if key not in kv:
            raise AGFError(f"header lacks {key!r}", nl)
    try:
        dim = int(kv["dim"][0])
        counts = tuple(int(c) for c in kv["counts"][0].split(","))
    except ValueError:
        raise AGFError("bad integer in header", kv["dim"][1]) from None
    origin = _floats(kv["origin"][0], "origin", kv["origin"][1])
    h = _floats(kv["h"][0], "h", kv["h"][1])
    if len(h) == 1:
        h = h * dim
    if len(counts) != dim or len(origin) != dim or len(h) != dim:
        raise AGFError("header lists disagree with dim", kv["dim"][1])
    if min(h) <= 0 or min(counts) < 1:
        raise AGFError("non-positive spacing or count", kv["h"][1])
    body = data[nl + 1:]
    n = int(np.prod(counts))
    enc = kv.get("encoding", ("bin", 0))[0]
    if enc == "bin":
        if len(body) != 8 * n:
            raise AGFError(f"expected {8 * n} payload bytes, found {len(body)}", nl + 1 + min(len(body), 8 * n))
        vals = np.frombuffer(body, dtype="<f8").astype(float)
    elif enc == "csv":
        rows = body.decode("utf-8").splitlines()
        out = []
        off = nl + 1
        for line in rows:
            if line.strip():
                try:
                    out.extend(float(t) for t in line.split(","))
                except ValueError:
                    raise AGFError("bad CSV number", off) from None
            off += len(line.encode()) + 1
        if len(out) != n:
            raise AGFError(f"expected {n} values, found {len(out)}", len(data))
        vals = np.asarray(out)
    else:
        raise AGFError(f"unknown encoding {enc!r}", kv["encoding"][1])
    vals = vals.reshape(counts)
    mask = np.isfinite(vals)
    grid = Grid(tuple(origin), tuple(h), counts)
    return ScalarField(grid, vals, mask)


def write(path, field: ScalarField, encoding: str = "bin") -> None:
    Path(path).write_bytes(dumps(field, encoding))


def read(path) -> ScalarField:
    return loads(Path(path).read_bytes())
