import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_block, random_unitary
from vkbundle.base import build_cover, circle, point_space, polar_disk, ring_indices, sphere_from_disk
from vkbundle.errors import NotIso, ShapeMismatch, SupportTouchesBoundary
from vkbundle.spectral import OddHermitian, eig_square
from vkbundle.vectorial import (
    Piece,
    VectorialBundle,
    bott,
    bundle_from_blocks,
    check_cocycle,
    check_equiv,
    check_iso,
    direct_sum,
    extend_by_trivial,
    graded_tensor,
    mayer_vietoris,
    null_homotopy,
    reverse_grading,
    support,
    t0_identification,
    trivial_bundle,
    zero_bundle,
)

DISK_RADII = [0.1, 0.2, 0.3, 0.4, 0.6, 0.8, 1.0]


def thom_bundle(n_ring=16, level=2.0):
    disk = polar_disk(DISK_RADII, n_ring)
    cover = build_cover(disk, {"0": list(disk.points)})
    z = disk.coords[:, 0] + 1j * disk.coords[:, 1]
    return bundle_from_blocks(cover, {x: [[z[x]]] for x in disk.points}, level=level)


def two_chart_circle(n=8):
    c = circle(n)
    return build_cover(c, {"a": list(range(0, n // 2 + 1)), "b": list(range(n // 2, n)) + [0]})


def random_bundle(rng, d0, d1, n=8, level=0.5):
    """Two-chart bundle over a circle with chart b a unitary regauge of chart a."""
    cover = two_chart_circle(n)
    B = {x: random_block(rng, d1, d0) for x in cover.space.points}
    U0 = {x: random_unitary(rng, d0) for x in cover.space.points}
    U1 = {x: random_unitary(rng, d1) for x in cover.space.points}
    pieces = {
        "a": Piece(d0, d1, level, {x: B[x] for x in cover.members("a")}),
        "b": Piece(d0, d1, level, {x: U1[x] @ B[x] @ U0[x].conj().T for x in cover.members("b")}),
    }
    trans = {("a", "b"): {}, ("b", "a"): {}}
    for x in cover.overlap("a", "b"):
        trans[("a", "b")][x] = (U0[x].conj().T, U1[x].conj().T)
        trans[("b", "a")][x] = (U0[x], U1[x])
    return VectorialBundle(cover, pieces, trans)


def test_check_equiv_examples():
    h = OddHermitian(np.diag([0.1, 2.0]))
    phi = (np.eye(2), np.eye(2))
    assert check_equiv(phi, phi, h, 1.0) == 0
    above = np.diag([0.0, 1.0])  # lives on the eigenvalue-4 directions
    assert check_equiv(phi, (np.eye(2) + above, np.eye(2) + 3 * above), h, 1.0) == pytest.approx(0, abs=1e-15)
    below = np.diag([1.0, 0.0])
    assert check_equiv(phi, (np.eye(2) + 0.1 * below, np.eye(2)), h, 1.0) == pytest.approx(0.1)
    with pytest.raises(ShapeMismatch):
        check_equiv(phi, (np.eye(3), np.eye(2)), h, 1.0)


def test_check_cocycle_trivial():
    rep = check_cocycle(trivial_bundle(two_chart_circle(), 1, 1))
    assert rep.passed and rep.intertwining == rep.inverse == rep.triple == 0


def test_check_cocycle_detects_bad_transition(rng):
    E = random_bundle(rng, 2, 1)
    bad = dict(E.transitions)
    x = next(iter(bad[("a", "b")]))
    p0, p1 = bad[("a", "b")][x]
    bad[("a", "b")] = dict(bad[("a", "b")])
    bad[("a", "b")][x] = (1.1 * p0, 1.1 * p1)
    rep = check_cocycle(VectorialBundle(E.cover, E.pieces, bad))
    assert not rep.passed
    assert rep.witnesses["inverse"]["sample"] == x


def test_support_examples():
    c = circle(5)
    cover = build_cover(c, {"a": list(c.points)})
    assert support(trivial_bundle(cover, 1, 1)) == list(c.points)
    E = thom_bundle()
    assert support(E) == [0]
    assert support(trivial_bundle(cover, 2, 2, B=np.sqrt(0.3) * np.eye(2)), 1e-6) == []


def test_direct_sum_examples(rng):
    E = random_bundle(rng, 2, 1)
    S = direct_sum(E, zero_bundle(E.cover))
    for a in E.cover.ids:
        for x in E.cover.members(a):
            np.testing.assert_array_equal(S.pieces[a].B[x], E.pieces[a].B[x])
    cover = two_chart_circle()
    S = direct_sum(trivial_bundle(cover, 1, 0), trivial_bundle(cover, 0, 1))
    assert set(S.ranks().values()) == {(1, 1)}
    rep = check_cocycle(direct_sum(E, random_bundle(rng, 1, 2)))
    assert rep.passed


def test_direct_sum_refines_covers():
    c = circle(8)
    E = trivial_bundle(two_chart_circle(), 1, 0)
    F = trivial_bundle(build_cover(c, {"z": list(c.points)}), 0, 1)
    S = direct_sum(E, F)
    assert sorted(S.cover.ids) == ["a|z", "b|z"]
    assert check_cocycle(S).passed


def test_reverse_grading_examples():
    c = circle(4)
    E = trivial_bundle(build_cover(c, {"a": list(c.points)}), 1, 0)
    assert set(reverse_grading(E).ranks().values()) == {(0, 1)}
    T = thom_bundle()
    R = reverse_grading(T)
    RR = reverse_grading(R)
    for x in T.cover.domain:
        np.testing.assert_array_equal(RR.pieces["0"].B[x], T.pieces["0"].B[x])
        np.testing.assert_allclose(eig_square(R.pieces["0"].h(x)).values, eig_square(T.pieces["0"].h(x)).values)


def test_null_homotopy_rank_one():
    cover = build_cover(point_space(), {"0": [0]})
    E = trivial_bundle(cover, 1, 0)
    H = null_homotopy(E)
    for i, t in enumerate(H.times):
        S = H.slice(i)
        # oracle: (eps (x) eta_t)^2 = t^2 on the 2-dimensional tensor product
        np.testing.assert_allclose(eig_square(S.pieces["0"].h(0)).values, [t**2, t**2], atol=1e-15)
    E0, E1 = H.endpoints()
    assert support(E0) == [0] and support(E1, 0.5) == []


def test_null_homotopy_invertible_and_endpoints(rng):
    cover = two_chart_circle()
    B = np.diag([0.8, 1.3])
    E = trivial_bundle(cover, 2, 2, B=B)
    H = null_homotopy(E)
    for i in range(len(H.times)):
        assert support(H.slice(i), 0.5) == []
    E = random_bundle(rng, 2, 1)
    H = null_homotopy(E)
    assert check_cocycle(H.bundle).passed
    E0, E1 = H.endpoints()
    target = direct_sum(E, reverse_grading(E))
    rep = check_iso(E0, target, t0_identification(E))
    assert rep.passed and rep.residual < 1e-9
    assert support(E1, 0.5) == []


def test_null_homotopy_grading_bookkeeping():
    # even part of the t=0 slice is E0 (+) E1, i.e. the even part of E (+) E^v
    cover = build_cover(point_space(), {"0": [0]})
    E = trivial_bundle(cover, 2, 1)
    S = null_homotopy(E).slice(0)
    assert S.ranks()["0"] == (3, 3)
    assert direct_sum(E, reverse_grading(E)).ranks()["0"] == (3, 3)


def test_graded_tensor_square():
    # oracle for the odd-map square of h (x) 1 + eps (x) k: h^2 (x) 1 + 1 (x) k^2
    rng = np.random.default_rng(3)
    h = OddHermitian(random_block(rng, 2, 3))
    k = OddHermitian(random_block(rng, 1, 2))
    t = graded_tensor(h, k)
    vals = np.sort(np.linalg.eigvalsh(np.kron(h.square(), np.eye(3)) + np.kron(np.eye(5), k.square())))
    np.testing.assert_allclose(eig_square(t).values, vals, atol=1e-10)


def test_bott_of_point_is_thom():
    cover = build_cover(point_space(), {"0": [0]})
    disk = polar_disk(DISK_RADII, 16)
    beta = bott(trivial_bundle(cover, 1, 0), disk)
    z = disk.coords[:, 0] + 1j * disk.coords[:, 1]
    for d in disk.points:
        np.testing.assert_allclose(beta.pieces["0"].B[d], [[z[d]]])
    assert support(beta) == [0]
    boundary = set(ring_indices(16, len(DISK_RADII) - 1))
    assert not boundary & set(support(beta))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bott_eigenvalue_shift(seed):
    rng = np.random.default_rng(seed)
    d0, d1 = rng.integers(0, 4, size=2)
    c = circle(3)
    cover = build_cover(c, {"a": list(c.points)})
    E = bundle_from_blocks(cover, {x: random_block(rng, d1, d0) for x in c.points})
    disk = polar_disk([0.5, 1.0], 6)
    beta = bott(E, disk)
    nd = disk.n_points
    zs = disk.coords[:, 0] + 1j * disk.coords[:, 1]
    for q in beta.cover.domain:
        x, d = divmod(q, nd)
        base = eig_square(E.pieces["a"].h(x)).values
        expect = np.sort(np.concatenate([base, base]) + abs(zs[d]) ** 2)
        np.testing.assert_allclose(eig_square(beta.pieces["a"].h(q)).values, expect, atol=1e-10)


def test_bott_support_is_product_with_center():
    c = circle(4)
    cover = build_cover(c, {"a": list(c.points)})
    B = {0: np.zeros((1, 1)), 1: np.eye(1), 2: np.eye(1), 3: np.zeros((1, 1))}
    E = bundle_from_blocks(cover, B)
    disk = polar_disk([0.5, 1.0], 6)
    beta = bott(E, disk)
    nd = disk.n_points
    assert support(beta) == [x * nd for x in support(E)]


def test_bott_commutes_with_direct_sum(rng):
    E, F = random_bundle(rng, 1, 1), random_bundle(rng, 1, 0)
    disk = polar_disk([0.5, 1.0], 4)
    lhs = bott(direct_sum(E, F), disk)
    rhs = direct_sum(bott(E, disk), bott(F, disk))
    # reorder graded tensor coordinates: (E+F) (x) C2 -> E (x) C2 (+) F (x) C2
    psi = {}
    for a in E.cover.ids:
        e, f = E.pieces[a], F.pieces[a]
        # both graded parts are ordered (E0, F0, E1, F1) on the left, (E0, E1, F0, F1) on the right
        order_even = list(range(e.d0)) + [e.d0 + f.d0 + i for i in range(e.d1)]
        order_even += [e.d0 + i for i in range(f.d0)] + [e.d0 + f.d0 + e.d1 + i for i in range(f.d1)]
        order_odd = list(range(e.d0)) + [e.d0 + f.d0 + i for i in range(e.d1)]
        order_odd += [e.d0 + i for i in range(f.d0)] + [e.d0 + f.d0 + e.d1 + i for i in range(f.d1)]
        n = len(order_even)
        psi[a] = (np.eye(n)[order_even], np.eye(n)[order_odd])
    rep = check_iso(lhs, rhs, psi)
    assert rep.passed and rep.residual < 1e-12


def two_disk_sphere(n_ring=16):
    sp = sphere_from_disk([0.5, 1.0], [2.0], n_ring)
    south = [0] + ring_indices(n_ring, 0) + ring_indices(n_ring, 1)
    north = ring_indices(n_ring, 1) + ring_indices(n_ring, 2) + [sp.n_points - 1]
    return sp, south, north


def test_mayer_vietoris_identity():
    sp, south, north = two_disk_sphere()
    E = trivial_bundle(build_cover(sp, {"S": south}, south), 1, 1)
    F = trivial_bundle(build_cover(sp, {"N": north}, north), 1, 1)
    eq = sorted(set(south) & set(north))
    psi = {("S", "N"): {x: (np.eye(1), np.eye(1)) for x in eq}}
    G = mayer_vietoris(E, F, psi)
    assert check_cocycle(G).passed
    assert set(G.ranks().values()) == {(1, 1)}
    assert sorted(G.cover.domain) == list(sp.points)


def test_mayer_vietoris_rank_drop():
    sp, south, north = two_disk_sphere()
    E = trivial_bundle(build_cover(sp, {"S": south}, south), 2, 0)
    F = trivial_bundle(build_cover(sp, {"N": north}, north), 2, 0)
    eq = sorted(set(south) & set(north))
    psi = {("S", "N"): {x: (np.diag([1.0, 0.0]), np.zeros((0, 0))) for x in eq}}
    with pytest.raises(NotIso):
        mayer_vietoris(E, F, psi)


def test_extend_by_trivial_examples():
    sp, south, north = two_disk_sphere()
    U = sorted(set(sp.points) - set(south))
    E = trivial_bundle(build_cover(sp, {"S": south}, south), 1, 1, B=np.eye(1))
    Et = extend_by_trivial(E, U)
    assert support(Et) == [] and check_cocycle(Et).passed
    T = trivial_bundle(build_cover(sp, {"S": south}, south), 1, 1)
    with pytest.raises(SupportTouchesBoundary):
        extend_by_trivial(T, U)
