import re
from pathlib import Path

import numpy as np
import pytest

from vkbundle import io
from vkbundle.base import build_cover, point_space
from vkbundle.errors import InputError
from vkbundle.family import FredholmFamily
from vkbundle.vectorial import Piece, VectorialBundle, check_cocycle

DOC = Path(__file__).resolve().parents[1] / "docs" / "formats.md"


def doc_examples():
    text = DOC.read_text(encoding="utf-8")
    return dict(re.findall(r"<!-- example: (\w+) -->\n```\w+\n(.*?)```\n", text, flags=re.S))


def phase_bundle():
    cover = build_cover(point_space(), {"a": [0], "b": [0]})
    pieces = {c: Piece(1, 1, 1.0, {0: np.array([[0.25]], dtype=complex)}) for c in "ab"}
    phi = (np.array([[1j]]), np.array([[1j]]))
    inv = (np.array([[-1j]]), np.array([[-1j]]))
    return VectorialBundle(cover, pieces, {("a", "b"): {0: phi}, ("b", "a"): {0: inv}})


def build(name):
    sp = point_space()
    E = phase_bundle()
    if name == "matrix":
        return io.dumps(io.matrix_to_json(np.array([[1.0, 2j]])))
    if name == "cover":
        return io.dumps(io.envelope("cover", io.cover_to_json(E.cover)))
    if name == "family":
        return io.dumps(io.family_to_json(FredholmFamily(sp, np.array([[[0.5]]]), k=1)))
    if name == "bundle":
        return io.dumps(io.bundle_to_json(E))
    if name == "report":
        return io.dumps(io.envelope("report", {"command": "check-cocycle", **check_cocycle(E).to_dict(), "z": []}))
    if name == "error":
        err = InputError("malformed JSON: Expecting value", witness={"line": 1, "column": 1})
        return io.dumps({"schema": "vk/1", **err.to_dict()})
    if name == "csv":
        return io.spectra_csv(io.bundle_spectra(E)["a"])
    raise KeyError(name)


@pytest.mark.parametrize("name", ["matrix", "cover", "family", "bundle", "report", "error", "csv"])
def test_format_examples_are_byte_exact(name):
    assert doc_examples()[name] == build(name)


def test_documented_bundle_reads_back():
    E = io.bundle_from_json(io.loads(doc_examples()["bundle"]))
    assert check_cocycle(E).passed
    assert io.dumps(io.bundle_to_json(E)) == doc_examples()["bundle"]
