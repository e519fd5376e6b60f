"""JSON documents (schema ``vk/1``) and CSV spectra.

Output is byte-stable: keys sorted, two-space indent, floats in shortest
round-trip form, non-finite floats as the strings ``"inf"``, ``"-inf"`` and
``"nan"``.  Complex matrices are ``{"shape": [r, c], "re": [...], "im": [...]}``
with row-major flat entries.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
from typing import Optional

import numpy as np

from . import SCHEMA
from .base import OpenCover, SampleSpace, TwistCocycle, build_cover
from .errors import InputError
from .family import FredholmFamily
from .vectorial import Piece, VectorialBundle

# ---------------------------------------------------------------------------
# Plain values


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(obj, (complex, np.complexfloating)):
        return [_plain(obj.real), _plain(obj.imag)]
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(doc: dict) -> str:
    return json.dumps(_plain(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def loads(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise InputError(f"malformed JSON: {err.msg}", witness={"line": err.lineno, "column": err.colno}) from None
    if not isinstance(doc, dict):
        raise InputError("top-level JSON value must be an object")
    if doc.get("schema") != SCHEMA:
        raise InputError(f"expected schema {SCHEMA!r}", witness={"schema": doc.get("schema")})
    return doc


def read(path: str, kind: Optional[str] = None) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = loads(fh.read())
    except OSError as err:
        raise InputError(f"cannot read {path}: {err.strerror}", witness={"path": path}) from None
    if kind is not None and doc.get("kind") != kind:
        raise InputError(f"{path}: expected a {kind!r} document", witness={"kind": doc.get("kind")})
    return doc


def envelope(kind: str, body: dict) -> dict:
    return {"schema": SCHEMA, "kind": kind, **body}


def _field(doc, key, where):
    try:
        return doc[key]
    except (KeyError, TypeError):
        raise InputError(f"{where}: missing field {key!r}", witness={"field": key}) from None


# ---------------------------------------------------------------------------
# Matrices


def matrix_to_json(M) -> dict:
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    return {"shape": list(M.shape), "re": M.real.ravel().tolist(), "im": M.imag.ravel().tolist()}


def matrix_from_json(doc) -> np.ndarray:
    shape = _field(doc, "shape", "matrix")
    re, im = np.asarray(_field(doc, "re", "matrix"), dtype=float), np.asarray(_field(doc, "im", "matrix"), dtype=float)
    if len(shape) != 2 or re.size != shape[0] * shape[1] or im.size != re.size:
        raise InputError("matrix entries do not match its shape", witness={"shape": shape})
    M = np.empty(re.size, dtype=complex)
    M.real, M.imag = re, im  # keeps signed zeros, unlike re + 1j * im
    return M.reshape(shape)


# ---------------------------------------------------------------------------
# Spaces, covers, twists


def space_to_json(sp: SampleSpace) -> dict:
    return {"name": sp.name, "coords": sp.coords.tolist(), "edges": [list(e) for e in sp.edges]}


def space_from_json(doc) -> SampleSpace:
    coords = np.asarray(_field(doc, "coords", "space"), dtype=float)
    if coords.ndim == 1 and coords.size == 0:
        coords = coords.reshape(0, 0)
    return SampleSpace(coords, tuple(tuple(e) for e in _field(doc, "edges", "space")), doc.get("name", "space"))


def cover_to_json(cover: OpenCover) -> dict:
    return {"charts": {a: list(p) for a, p in cover.charts.items()}, "domain": list(cover.domain)}


def cover_from_json(doc, space: SampleSpace) -> OpenCover:
    charts = _field(doc, "charts", "cover")
    return build_cover(space, {str(a): [int(p) for p in pts] for a, pts in charts.items()}, doc.get("domain") or None)


def twist_to_json(tw: Optional[TwistCocycle]):
    if tw is None:
        return None
    lifts = [
        {"from": b, "to": a, "sample": x, "matrix": matrix_to_json(g)}
        for (a, b), per in tw.lifts.items()
        for x, g in per.items()
    ]
    return {"n": tw.n, "tol": tw.tol, "cover": cover_to_json(tw.cover), "lifts": lifts}


def twist_from_json(doc, space: SampleSpace) -> Optional[TwistCocycle]:
    if doc is None:
        return None
    cover = cover_from_json(_field(doc, "cover", "twist"), space)
    lifts = {}
    for e in _field(doc, "lifts", "twist"):
        lifts.setdefault((e["to"], e["from"]), {})[int(e["sample"])] = matrix_from_json(e["matrix"])
    return TwistCocycle(cover, int(_field(doc, "n", "twist")), lifts, float(doc.get("tol", 1e-9)))


# ---------------------------------------------------------------------------
# Families and bundles


def family_to_json(f: FredholmFamily) -> dict:
    local = None
    if f.local is not None:
        local = {a: [matrix_to_json(M) for M in v] for a, v in f.local.items()}
    return envelope(
        "family",
        {
            "space": space_to_json(f.space),
            "A": [matrix_to_json(M) for M in f.A],
            "k": f.k,
            "delta": f.delta,
            "twist": twist_to_json(f.twist),
            "local": local,
        },
    )


def family_from_json(doc) -> FredholmFamily:
    try:
        sp = space_from_json(_field(doc, "space", "family"))
        A = np.array([matrix_from_json(M) for M in _field(doc, "A", "family")])
        local = doc.get("local")
        if local is not None:
            local = {a: np.array([matrix_from_json(M) for M in v]) for a, v in local.items()}
        return FredholmFamily(
            sp, A, twist=twist_from_json(doc.get("twist"), sp), local=local, k=doc.get("k"), delta=float(doc.get("delta", 0.2))
        )
    except (TypeError, ValueError, KeyError) as err:
        raise InputError(f"family document is malformed: {err}") from None


def bundle_to_json(E: VectorialBundle) -> dict:
    pieces = {
        a: {"d0": p.d0, "d1": p.d1, "level": p.level, "B": {str(x): matrix_to_json(p.B[x]) for x in sorted(p.B)}}
        for a, p in E.pieces.items()
    }
    transitions = [
        {"to": a, "from": b, "sample": x, "phi0": matrix_to_json(phi[0]), "phi1": matrix_to_json(phi[1])}
        for (a, b), per in E.transitions.items()
        for x, phi in sorted(per.items())
    ]
    return envelope(
        "bundle",
        {
            "space": space_to_json(E.space),
            "cover": cover_to_json(E.cover),
            "pieces": pieces,
            "transitions": transitions,
            "twist": twist_to_json(E.twist),
        },
    )


def _block(doc, rows, cols):
    M = matrix_from_json(doc)
    if M.shape != (rows, cols):
        raise InputError(f"block has shape {M.shape}, expected {(rows, cols)}", witness={"shape": list(M.shape)})
    return M


def bundle_from_json(doc) -> VectorialBundle:
    try:
        sp = space_from_json(_field(doc, "space", "bundle"))
        cover = cover_from_json(_field(doc, "cover", "bundle"), sp)
        pieces = {}
        for a, p in _field(doc, "pieces", "bundle").items():
            d0, d1 = int(p["d0"]), int(p["d1"])
            B = {int(x): _block(M, d1, d0) for x, M in p["B"].items()}
            pieces[a] = Piece(d0, d1, float(p["level"]), B)
        trans = {}
        for t in _field(doc, "transitions", "bundle"):
            a, b = t["to"], t["from"]
            phi = (
                _block(t["phi0"], pieces[a].d0, pieces[b].d0),
                _block(t["phi1"], pieces[a].d1, pieces[b].d1),
            )
            trans.setdefault((a, b), {})[int(t["sample"])] = phi
        return VectorialBundle(cover, pieces, trans, twist_from_json(doc.get("twist"), sp))
    except (TypeError, ValueError, KeyError) as err:
        raise InputError(f"bundle document is malformed: {err}") from None


# ---------------------------------------------------------------------------
# CSV spectra


def spectra_csv(rows: dict) -> str:
    """``rows`` maps a sample index to its sorted eigenvalues; short rows are right-padded with blanks."""
    width = max((len(v) for v in rows.values()), default=0)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample"] + [f"lambda_{j + 1}" for j in range(width)])
    for x in sorted(rows):
        vals = [repr(float(v)) for v in rows[x]]
        w.writerow([x] + vals + [""] * (width - len(vals)))
    return buf.getvalue()


def bundle_spectra(E: VectorialBundle) -> dict:
    """Per chart: sample -> sorted eigenvalues of ``h^2``."""
    out = {}
    for a, p in E.pieces.items():
        rows = {}
        for x in sorted(p.B):
            B = p.B[x]
            rows[x] = np.sort(np.r_[np.linalg.eigvalsh(B.conj().T @ B), np.linalg.eigvalsh(B @ B.conj().T)])
        out[a] = rows
    return out
