import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vkbundle.approx import alpha, alpha_beta_compatibility, alpha_data
from vkbundle.base import TwistCocycle, build_cover, point_space
from vkbundle.errors import GapViolation
from vkbundle.family import FredholmFamily, conjugate, direct_sum_family, find_chart_gap, truncate
from vkbundle.presets import SX, SY, SZ, pauli_twist, preset, random_family, spectral_flow_circle
from vkbundle.vectorial import bdiag, check_cocycle, check_iso, direct_sum, pullback, support


def test_alpha_constant_invertible():
    sc = preset("invertible-trivial")
    E = alpha(sc.family, sc.cover)
    assert set(E.ranks().values()) == {(0, 0)}
    assert support(E) == []
    assert check_cocycle(E).passed


def test_alpha_thom_two_charts():
    sc = preset("thom-disk")
    res = alpha_data(sc.family, sc.cover)
    E = res.bundle
    assert E.ranks() == {"S": (1, 1), "N": (0, 0)}
    z = sc.space.coords[:, 0] + 1j * sc.space.coords[:, 1]
    for x in sc.cover.members("S"):
        np.testing.assert_allclose(E.pieces["S"].B[x], [[z[x]]], atol=1e-14)
    # outer gap sits below the smallest |z|^2 on the annulus
    assert res.gaps["N"][0] == pytest.approx(0.5 * 0.625**2)
    assert check_cocycle(E).passed
    assert support(E) == [0]


def test_alpha_pauli_twist():
    E = alpha(pauli_twist().family)
    rep = check_cocycle(E)
    # oracle: sx sy = i sz, so the untwisted defect is |i - 1|
    assert rep.triple == pytest.approx(np.sqrt(2))
    assert rep.twisted < 1e-12 and rep.passed
    (z,) = set(np.round(list(rep.z_values.values()), 12))
    assert z == pytest.approx(1j)


def test_alpha_regauge_lifts():
    # multiplying a lift by a phase keeps the twisted check passing and rotates z
    sc = pauli_twist()
    f = sc.family
    zeta = np.exp(0.3j)
    lifts = {("0", "1"): {0: zeta * SX}, ("1", "2"): {0: SY}, ("0", "2"): {0: SZ}}
    g = FredholmFamily(f.space, f.A, twist=TwistCocycle(sc.cover, 2, lifts), local=f.local)
    rep = check_cocycle(alpha(g))
    assert rep.passed
    (z,) = set(np.round(list(rep.z_values.values()), 12))
    assert z == pytest.approx(zeta * 1j)


def test_alpha_refines_chart_without_gap():
    sc = spectral_flow_circle()
    # the widest pooled gap falls between samples, so ranks disagree across the chart
    mu, _ = find_chart_gap(sc.family, sc.space.points)
    with pytest.raises(GapViolation):
        truncate(sc.family, sc.space.points, mu)
    res = alpha_data(sc.family, sc.cover)
    assert set(res.bundle.cover.ids) == {"0.0", "0.1"}
    assert sorted(res.bundle.cover.domain) == list(sc.space.points)
    assert check_cocycle(res.bundle).passed
    assert support(res.bundle) == []


def _frame_psi(src, dst, point_map=None):
    psi = {}
    for c, sb in dst.subbundles.items():
        s = src.subbundles[c]
        per = {}
        for x in sb.points:
            y = x if point_map is None else point_map[x]
            per[x] = (sb.frames0[x].conj().T @ s.frames0[y], sb.frames1[x].conj().T @ s.frames1[y])
        psi[c] = per
    return psi


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_alpha_natural_under_rotation(seed, shift):
    sc = random_family(seed)
    f = sc.family
    n = f.space.n_points
    m = [(x + shift) % n for x in range(n)]
    g = FredholmFamily(f.space, f.A[m])
    left = pullback(alpha(f, sc.cover), f.space, m)
    right = alpha_data(g, sc.cover)
    rep = check_iso(left, right.bundle, _frame_psi(alpha_data(f, sc.cover), right, m))
    assert rep.passed and rep.residual < 1e-9 and rep.unitarity < 1e-9


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_alpha_additive(seed):
    f1 = random_family(seed).family
    f2 = random_family(seed + 1, N=3).family
    cover = build_cover(f1.space, {"0": list(f1.space.points)})
    r1, r2 = alpha_data(f1, cover), alpha_data(f2, cover)
    mu = min(r1.gaps["0"][0], r2.gaps["0"][0])
    rs = alpha_data(direct_sum_family(f1, f2), cover, levels={"0": mu})
    S = direct_sum(r1.bundle, r2.bundle)
    psi = {"0": {}}
    a, b, s = r1.subbundles["0"], r2.subbundles["0"], rs.subbundles["0"]
    for x in s.points:
        psi["0"][x] = (
            s.frames0[x].conj().T @ bdiag(a.frames0[x], b.frames0[x]),
            s.frames1[x].conj().T @ bdiag(a.frames1[x], b.frames1[x]),
        )
    rep = check_iso(S, rs.bundle, psi)
    assert rep.passed and rep.unitarity < 1e-9


def test_alpha_independent_of_level():
    rng = np.random.default_rng(5)
    sp = point_space()
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
    A = (q @ np.diag(np.sqrt([0.05, 0.5, 1.0])))[None]
    f = FredholmFamily(sp, A, k=2)
    cover = build_cover(sp, {"0": [0]})
    lo = alpha_data(f, cover, levels={"0": 0.275})
    hi = alpha_data(f, cover, levels={"0": 0.75})
    assert lo.bundle.ranks()["0"] == (1, 1) and hi.bundle.ranks()["0"] == (2, 2)
    a, b = lo.subbundles["0"], hi.subbundles["0"]
    incl = {"0": (b.frames0[0].conj().T @ a.frames0[0], b.frames1[0].conj().T @ a.frames1[0])}
    rep = check_iso(lo.bundle, hi.bundle, incl)
    assert rep.passed and rep.unitarity < 1e-12


def test_compatibility_point_rank_one():
    f = FredholmFamily(point_space(), np.zeros((1, 1, 1)), k=1)
    rep = alpha_beta_compatibility(f)
    assert rep.rank_ok and rep.residual < 1e-9


def test_compatibility_random_circle():
    sc = random_family(2024)
    assert sc.family.N == 4 and sc.space.n_points == 6
    assert alpha_beta_compatibility(sc.family, sc.cover).residual < 1e-8


def test_compatibility_invertible_is_zero():
    sc = preset("invertible-trivial")
    rep = alpha_beta_compatibility(sc.family, sc.cover)
    assert rep.residual == 0.0 and rep.rank_ok


def test_compatibility_twisted():
    rep = alpha_beta_compatibility(pauli_twist().family)
    assert rep.rank_ok and rep.residual < 1e-8


def test_compatibility_detects_wrong_identification():
    sc = random_family(9)
    f = sc.family
    g = conjugate(f, np.diag([1, 1, 1, -1]).astype(complex))
    res = alpha_data(f, sc.cover)
    other = alpha_data(g, sc.cover)
    # frames of a different family do not intertwine
    rep = check_iso(res.bundle, other.bundle, _frame_psi(res, other))
    assert rep.intertwining > 1e-6 or rep.unitarity > 1e-6
