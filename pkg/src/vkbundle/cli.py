"""``vk``: presets, pipeline commands and validation suites.

Exit codes: 0 when every check passes, 1 on a failed check, 2 on bad
input.  Errors are printed as ``{"schema", "code", "message", "witness"}``.
"""

from __future__ import annotations

import functools
import os
import re
import sys
from typing import Optional

import click
import numpy as np

from . import SCHEMA, io
from .approx import alpha, alpha_beta_compatibility
from .base import polar_disk
from .errors import (
    BadParameters,
    InputError,
    NumericalFailure,
    PartitionMismatch,
    ShapeMismatch,
    TwistMismatch,
    UncoveredEdge,
    UncoveredPoint,
    UnknownPreset,
    VKError,
)
from .family import spectra, validate_family
from .kclass import chern_number
from .presets import preset as make_preset
from .rectify import identification_check, rectify
from .vectorial import bott as bott_product
from .vectorial import check_cocycle, support

INPUT_ERRORS = (
    InputError,
    UnknownPreset,
    ShapeMismatch,
    BadParameters,
    UncoveredPoint,
    UncoveredEdge,
    TwistMismatch,
    PartitionMismatch,
)
SUITE_PRESETS = (
    "thom-disk",
    "bott-sphere",
    "winding-0",
    "winding-1",
    "winding-2",
    "winding-3",
    "pauli-twist",
    "spectral-flow-circle",
    "invertible-trivial",
)
ROOTS_OF_UNITY = np.array([1, 1j, -1, -1j])


class CheckFailed(Exception):
    """A report was produced but some check in it failed."""


# ---------------------------------------------------------------------------
# Plumbing


def _emit(doc: dict, out: Optional[str]) -> None:
    text = io.dumps(doc)
    if out is None:
        click.echo(text, nl=False)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _guard(fn):
    @functools.wraps(fn)
    def run(*args, **kwargs):
        try:
            fn(*args, **kwargs)
        except CheckFailed:
            sys.exit(1)
        except VKError as err:
            click.echo(io.dumps({"schema": SCHEMA, **err.to_dict()}), nl=False)
            sys.exit(2 if isinstance(err, INPUT_ERRORS) else 1)
        except np.linalg.LinAlgError as err:
            click.echo(io.dumps({"schema": SCHEMA, **NumericalFailure(str(err)).to_dict()}), nl=False)
            sys.exit(1)

    return run


def _finish(doc: dict, out: Optional[str]) -> None:
    _emit(doc, out)
    if not doc.get("passed", True):
        raise CheckFailed


def _load_family(path: str, cover_path: Optional[str] = None):
    doc = io.read(path)
    cover_doc = None
    if doc.get("kind") == "scenario":
        cover_doc, doc = doc.get("cover"), doc.get("family")
        if doc is None:
            raise InputError(f"{path}: scenario carries no family", witness={"path": path})
    elif doc.get("kind") != "family":
        raise InputError(f"{path}: expected a family or scenario document", witness={"kind": doc.get("kind")})
    f = io.family_from_json(doc)
    if cover_path is not None:
        cover_doc = io.read(cover_path, "cover")
    cover = io.cover_from_json(cover_doc, f.space) if cover_doc is not None else None
    return f, cover


def _load_bundle(path: str):
    doc = io.read(path)
    if doc.get("kind") == "scenario":
        doc = doc.get("bundle")
        if doc is None:
            raise InputError(f"{path}: scenario carries no bundle; run `vk alpha` on it first", witness={"path": path})
    elif doc.get("kind") != "bundle":
        raise InputError(f"{path}: expected a bundle or scenario document", witness={"kind": doc.get("kind")})
    return io.bundle_from_json(doc)


def _write_spectra(tables: dict, out: Optional[str]) -> None:
    """One CSV per chart inside the directory ``out``."""
    if out is None:
        raise InputError("--format csv needs --out DIRECTORY")
    os.makedirs(out, exist_ok=True)
    for a, rows in tables.items():
        name = re.sub(r"[^A-Za-z0-9._-]", "_", a)
        with open(os.path.join(out, f"{name}.csv"), "w", encoding="utf-8") as fh:
            fh.write(io.spectra_csv(rows))


def _check(name, value, passed, **extra) -> dict:
    return {"name": name, "value": value, "passed": bool(passed), **extra}


def _cocycle_dict(rep) -> dict:
    d = rep.to_dict()
    d["z"] = [{"charts": list(k[:3]), "sample": k[3], "z": v} for k, v in sorted(rep.z_values.items())]
    return d


# ---------------------------------------------------------------------------
# Suite


def _rectify_checks(E, tol) -> list:
    R = rectify(E)
    ident = identification_check(R, tol=tol)
    ranks = R.ranks_by_component()
    return R, [
        _check("identification", ident.residual, ident.residual < tol, limit=tol),
        _check("rank_constant", [[list(r) for r in c] for c in ranks], all(len(c) == 1 for c in ranks)),
    ]


def suite_checks(name: str, tol: float = 1e-9) -> dict:
    """Run every applicable check on one preset."""
    sc = make_preset(name)
    checks = []
    exp = sc.expected
    if sc.family is not None:
        fr = validate_family(sc.family)
        checks.append(_check("validate_family", fr.to_dict(), fr.passed))
        E = alpha(sc.family, sc.cover)
    else:
        E = sc.bundle
    rep = check_cocycle(E, tol=tol)
    cyc = rep.twisted if rep.twisted_bundle else rep.triple
    checks.append(_check("cocycle", max(rep.intertwining, rep.inverse, cyc), rep.passed, limit=rep.tol))
    if "untwisted_pass" in exp:
        checks.append(_check("untwisted_triple", rep.triple, (rep.triple <= rep.tol) == exp["untwisted_pass"]))
        dist = max((np.min(np.abs(ROOTS_OF_UNITY - z)) for z in rep.z_values.values()), default=0.0)
        checks.append(_check("z_in_roots", dist, dist < tol, limit=tol))
    supp = support(E)
    if "support" in exp:
        checks.append(_check("support", supp, supp == exp["support"], expected=exp["support"]))
    if "boundary_support" in exp:
        touching = sorted(set(supp) & set(sc.params["boundary"]))
        checks.append(_check("boundary_support", touching, touching == exp["boundary_support"], expected=[]))
    R, more = _rectify_checks(E, tol)
    checks.extend(more)
    idx = R.index()
    checks.append(_check("index", idx, all(i == exp["index"] for i in idx), expected=exp["index"]))
    if exp.get("chern") is not None:
        ch = chern_number(E)
        checks.append(_check("chern", ch.to_dict(), ch.chern == exp["chern"] and ch.residual < 0.05, expected=exp["chern"]))
    if sc.family is not None:
        cr = alpha_beta_compatibility(sc.family, sc.cover)
        checks.append(_check("alpha_beta", cr.to_dict(), cr.residual < tol, limit=tol))
    return {"preset": sc.name, "passed": all(c["passed"] for c in checks), "checks": checks}


# ---------------------------------------------------------------------------
# Commands

tol_option = click.option("--tol", type=float, default=1e-9, show_default=True, help="Residual tolerance.")
out_option = click.option("--out", type=str, default=None, help="Output file (directory for CSV).")
format_option = click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)


@click.group()
@click.version_option(package_name="vkbundle")
def main():
    """Vectorial bundles: finite-dimensional models of twisted K-theory classes."""


@main.command("preset")
@click.argument("name")
@click.option("--k", type=int, default=None, help="Winding number for winding-k.")
@out_option
@_guard
def preset_cmd(name, k, out):
    """Serialize a named scenario with its expected invariants."""
    sc = make_preset(name, k=k)
    doc = io.envelope(
        "scenario",
        {
            "name": sc.name,
            "space": io.space_to_json(sc.space),
            "cover": io.envelope("cover", io.cover_to_json(sc.cover)),
            "family": io.family_to_json(sc.family) if sc.family is not None else None,
            "bundle": io.bundle_to_json(sc.bundle) if sc.bundle is not None else None,
            "expected": sc.expected,
            "params": sc.params,
        },
    )
    _emit(doc, out)


@main.command("validate-family")
@click.option("--family", "family_path", required=True, help="Family or scenario JSON.")
@tol_option
@out_option
@format_option
@_guard
def validate_family_cmd(family_path, tol, out, fmt):
    """Check the compactness surrogate, continuity and twist compatibility."""
    f, _ = _load_family(family_path)
    rep = validate_family(f, tol=tol)
    if fmt == "csv":
        rows = spectra(f)
        _write_spectra({"family": dict(enumerate(rows))}, out)
        if not rep.passed:
            raise CheckFailed
        return
    _finish(io.envelope("report", {"command": "validate-family", **rep.to_dict()}), out)


@main.command("alpha")
@click.option("--family", "family_path", required=True, help="Family or scenario JSON.")
@click.option("--cover", "cover_path", default=None, help="Cover JSON; defaults to the scenario's or a single chart.")
@out_option
@format_option
@_guard
def alpha_cmd(family_path, cover_path, out, fmt):
    """Truncate a family below per-chart gaps into a vectorial bundle."""
    f, cover = _load_family(family_path, cover_path)
    E = alpha(f, cover)
    if fmt == "csv":
        _write_spectra(io.bundle_spectra(E), out)
        return
    _emit(io.bundle_to_json(E), out)


@main.command("bott")
@click.option("--bundle", "bundle_path", required=True, help="Bundle or scenario JSON.")
@click.option("--radii", default="0.5,1.0", show_default=True, help="Comma-separated disk ring radii.")
@click.option("--ring-size", type=int, default=8, show_default=True)
@out_option
@format_option
@_guard
def bott_cmd(bundle_path, radii, ring_size, out, fmt):
    """Multiply a bundle by the Thom class over a sampled disk."""
    E = _load_bundle(bundle_path)
    try:
        rs = [float(r) for r in radii.split(",")]
    except ValueError:
        raise BadParameters(f"cannot parse radii {radii!r}") from None
    B = bott_product(E, polar_disk(rs, ring_size))
    if fmt == "csv":
        _write_spectra(io.bundle_spectra(B), out)
        return
    _emit(io.bundle_to_json(B), out)


@main.command("rectify")
@click.option("--bundle", "bundle_path", required=True, help="Bundle or scenario JSON.")
@tol_option
@out_option
@_guard
def rectify_cmd(bundle_path, tol, out):
    """Turn a bundle into an honest pair of vector bundles and verify the identification."""
    E = _load_bundle(bundle_path)
    R, checks = _rectify_checks(E, tol)
    doc = {
        "command": "rectify",
        "lambda": R.lam,
        "mu0": R.mu0,
        "surjectivity": R.surjectivity,
        "index": {str(i): v for i, v in enumerate(R.index())},
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    }
    _finish(io.envelope("report", doc), out)


@main.command("invariants")
@click.option("--bundle", "bundle_path", required=True, help="Bundle or scenario JSON.")
@out_option
@_guard
def invariants_cmd(bundle_path, out):
    """Index per component, support, and the Chern number when the charts are radially nested."""
    E = _load_bundle(bundle_path)
    R = rectify(E)
    doc = {
        "command": "invariants",
        "index": {str(i): v for i, v in enumerate(R.index())},
        "support": support(E),
        "chern": None,
        "chern_error": None,
    }
    try:
        doc["chern"] = chern_number(E).to_dict()
    except INPUT_ERRORS as err:
        doc["chern_error"] = err.to_dict()
    _emit(io.envelope("report", doc), out)


@main.command("check-cocycle")
@click.option("--bundle", "bundle_path", required=True, help="Bundle or scenario JSON.")
@tol_option
@out_option
@_guard
def check_cocycle_cmd(bundle_path, tol, out):
    """Residuals of the intertwining, inverse and (twisted) triple identities below the gaps."""
    E = _load_bundle(bundle_path)
    rep = check_cocycle(E, tol=tol)
    _finish(io.envelope("report", {"command": "check-cocycle", **_cocycle_dict(rep)}), out)


@main.command("suite")
@click.option("--preset", "names", multiple=True, help="Preset to check; repeatable. Defaults to all.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed of the random preset.")
@tol_option
@out_option
@_guard
def suite_cmd(names, seed, tol, out):
    """Run the validation checks on presets and report every residual."""
    names = list(names) or [*SUITE_PRESETS, f"random-{seed}"]
    results = [suite_checks(n, tol) for n in names]
    doc = {"command": "suite", "tol": tol, "results": results, "passed": all(r["passed"] for r in results)}
    _finish(io.envelope("report", doc), out)
