"""Acceptance checks, one test per criterion; each prints a PASS/FAIL line."""

import time

import numpy as np
import pytest
from scipy.linalg import orth

from conftest import random_block, random_unitary
from vkbundle.approx import alpha, alpha_beta_compatibility, alpha_data
from vkbundle.base import TwistCocycle, build_cover, nerve_check, point_space
from vkbundle.errors import GapViolation
from vkbundle.family import truncate
from vkbundle.kclass import chern_number, index
from vkbundle.presets import pauli_twist, preset, spectral_flow_circle, winding
from vkbundle.rectify import identification_check, iso_witness, rectify
from vkbundle.spectral import (
    OddHermitian,
    default_contour,
    eig_square,
    minmax_eigenvalue,
    projector_lipschitz,
    rayleigh_inf,
    spectral_projector,
)
from vkbundle.vectorial import (
    check_cocycle,
    check_iso,
    direct_sum,
    extend_by_trivial,
    graded_tensor,
    null_homotopy,
    reverse_grading,
    support,
    t0_identification,
    thom_block,
    trivial_bundle,
)

FAMILY_PRESETS = ("thom-disk", "pauli-twist", "spectral-flow-circle", "invertible-trivial", "random-11")
ALL_PRESETS = FAMILY_PRESETS + ("bott-sphere", "winding-0", "winding-1", "winding-2", "winding-3")


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line for the criterion, then fail the test if needed."""

    def report(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail

    return report


def _bundle(name):
    sc = preset(name)
    return alpha(sc.family, sc.cover) if sc.family is not None else sc.bundle


def test_criterion_01_thom_class(verdict):
    start = time.perf_counter()
    sc = preset("thom-disk")
    E = alpha(sc.family, sc.cover)
    supp = support(E)
    edge = sorted(set(supp) & set(sc.params["boundary"]))
    rep = chern_number(extend_by_trivial(E, sc.params["outside"]))
    elapsed = time.perf_counter() - start
    ok = (
        len(sc.cover.domain) >= 200
        and supp == [0]
        and edge == []
        and abs(rep.chern) == 1
        and rep.residual < 0.05
        and elapsed < 5.0
    )
    verdict(1, ok, f"samples={len(sc.cover.domain)} support={supp} boundary={edge} chern={rep.chern} "
                   f"residual={rep.residual:.2e} time={elapsed:.2f}s")


def test_criterion_02_eigenvalue_shift(verdict):
    rng = np.random.default_rng(2)
    radii = rng.uniform(0, 1, 20)
    angles = rng.uniform(0, 2 * np.pi, 20)
    zs = radii * np.exp(1j * angles)
    worst = 0.0
    for _ in range(50):
        N = int(rng.integers(1, 5))
        h = OddHermitian(random_block(rng, N, N))
        base = np.repeat(eig_square(h).values, 2)
        for z in zs:
            lhs = eig_square(graded_tensor(h, thom_block(z))).values
            worst = max(worst, float(np.max(np.abs(lhs - np.sort(base + abs(z) ** 2)))))
    verdict(2, worst < 1e-10, f"50 families x 20 disk points, max deviation {worst:.2e}")


def test_criterion_03_alpha_beta(verdict):
    res = {}
    for name in ("invertible-trivial", "thom-disk", "random-2024"):
        sc = preset(name)
        res[name] = alpha_beta_compatibility(sc.family, sc.cover).residual
    ok = all(r < 1e-8 for r in res.values())
    verdict(3, ok, ", ".join(f"{k}={v:.2e}" for k, v in res.items()))


def _gapped_instance(rng):
    """Squared singular values below the level in [0, 0.2], above it in [0.3, 2]; level 0.25."""
    d0, d1 = (int(v) for v in rng.integers(1, 5, 2))
    n = min(d0, d1)
    nb = int(rng.integers(0, n + 1))
    s2 = np.r_[rng.uniform(0, 0.2, nb), rng.uniform(0.3, 2.0, n - nb)]
    B = np.zeros((d1, d0), dtype=complex)
    B[:n, :n] = np.diag(np.sqrt(s2))
    return OddHermitian(random_unitary(rng, d1) @ B @ random_unitary(rng, d0).conj().T)


def test_criterion_04_projector_equivalence(verdict):
    rng = np.random.default_rng(4)
    mu = 0.25
    worst = 0.0
    for _ in range(100):
        h = _gapped_instance(rng)
        P = spectral_projector(h, mu, eps=0.05).matrix
        Q = spectral_projector(h, mu, method="contour", contour=default_contour(h, mu, 64)).matrix
        worst = max(worst, float(np.linalg.norm(P - Q, 2)))
    ratio = 0.0
    for _ in range(20):
        h0 = _gapped_instance(rng)
        h1 = OddHermitian(h0.B + 0.02 * random_block(rng, *h0.B.shape))
        C = default_contour(h0, mu)
        path = [OddHermitian((1 - t) * h0.B + t * h1.B) for t in np.linspace(0, 1, 6)]
        eps = min(C.distance(eig_square(h).values) for h in path)
        M = projector_lipschitz(C, eps)
        P0 = spectral_projector(h0, mu).matrix
        for h in path[1:]:
            lhs = np.linalg.norm(spectral_projector(h, mu).matrix - P0, 2)
            ratio = max(ratio, lhs / (M * np.linalg.norm(h.square() - h0.square(), 2)))
    ok = worst < 1e-8 and ratio <= 1.0
    verdict(4, ok, f"contour vs eigensum {worst:.2e} on 100 instances; "
                   f"max |dP| / (M |dh^2|) {ratio:.3f} on 20 paths")


def test_criterion_05_rank_constancy(verdict):
    bad = []
    for name in FAMILY_PRESETS + ("bott-sphere",):
        sc = preset("thom-disk" if name == "bott-sphere" else name)
        res = alpha_data(sc.family, sc.cover)
        for cid, sb in res.subbundles.items():
            ranks = {(sb.frames0[x].shape[1], sb.frames1[x].shape[1]) for x in sb.points}
            if ranks != {sb.rank}:
                bad.append((name, cid))
    sc = spectral_flow_circle()
    x0 = 5
    level = float(eig_square(sc.family.hat(x0)).values[0])
    with pytest.raises(GapViolation) as err:
        truncate(sc.family, sc.space.points, level)
    named = err.value.witness["sample"] == x0 and f"sample {x0}" in str(err.value)
    verdict(5, not bad and named, f"rank breaks={bad}; violation witness sample={err.value.witness['sample']}")


def test_criterion_06_minmax(verdict):
    rng = np.random.default_rng(6)
    worst, breaches = 0.0, 0
    for _ in range(100):
        d0, d1 = (int(v) for v in rng.integers(1, 4, 2))
        h = OddHermitian(random_block(rng, d1, d0))
        direct = np.sort(np.linalg.eigvalsh(h.square()))
        lams = [minmax_eigenvalue(h, k) for k in range(1, h.dim + 1)]
        worst = max(worst, float(np.max(np.abs(np.array(lams) - direct))))
        for _ in range(200):
            k = int(rng.integers(1, h.dim + 1))
            E = orth(random_block(rng, h.dim, k - 1)) if k > 1 else np.zeros((h.dim, 0))
            if rayleigh_inf(h, E) > lams[k - 1] + 1e-10:
                breaches += 1
    verdict(6, worst < 1e-10 and breaches == 0, f"max deviation {worst:.2e}; sup-inf breaches {breaches}/20000")


def _phase_cocycle(rng):
    """Four charts over a point with lifts ``c_ab U_a U_b^H``; z is a coboundary of phases."""
    sp = point_space()
    ids = ["0", "1", "2", "3"]
    cover = build_cover(sp, {a: [0] for a in ids})
    U = {a: random_unitary(rng, 2) for a in ids}
    lifts = {}
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            lifts[(a, b)] = {0: np.exp(2j * np.pi * rng.uniform()) * U[a] @ U[b].conj().T}
    return TwistCocycle(cover, 2, lifts)


def test_criterion_07_cocycles(verdict):
    worst = 0.0
    for name in FAMILY_PRESETS + ("random-3", "random-4"):
        sc = preset(name)
        rep = check_cocycle(alpha(sc.family, sc.cover))
        cyc = rep.twisted if rep.twisted_bundle else rep.triple
        worst = max(worst, rep.intertwining, rep.inverse, cyc)
    rep = check_cocycle(alpha(pauli_twist().family))
    roots = np.array([1, 1j, -1, -1j])
    zdist = max(np.min(np.abs(roots - z)) for z in rep.z_values.values())
    dz = nerve_check(_phase_cocycle(np.random.default_rng(7))).delta_z
    ok = worst < 1e-8 and rep.triple >= 1 and rep.twisted < 1e-8 and zdist < 1e-12 and dz < 1e-9
    verdict(7, ok, f"alpha residual {worst:.2e}; pauli untwisted {rep.triple:.3f} twisted {rep.twisted:.2e} "
                   f"z-distance {zdist:.1e}; |dz - 1| {dz:.1e}")


def _equivalence(rng, d=3, lam=0.5):
    s = np.sqrt(rng.uniform(0.0, 2 * lam, d))
    h0 = OddHermitian(random_unitary(rng, d) @ np.diag(s) @ random_unitary(rng, d).conj().T)
    U0, U1 = random_unitary(rng, d), random_unitary(rng, d)
    h1 = OddHermitian(U1 @ h0.B @ U0.conj().T)
    g = []
    for M2, U in ((h0.B.conj().T @ h0.B, U0), (h0.B @ h0.B.conj().T, U1)):
        w, v = np.linalg.eigh(M2)
        g.append(U @ (v * np.where(w < lam, 1.0, 0.3)) @ v.conj().T)
    return h0, h1, tuple(g)


def test_criterion_08_rectification(verdict):
    worst_ident, uneven = 0.0, []
    for name in ALL_PRESETS:
        R = rectify(_bundle(name))
        worst_ident = max(worst_ident, identification_check(R).residual)
        if any(len(c) != 1 for c in R.ranks_by_component()):
            uneven.append(name)
    eye = (np.eye(2), np.eye(2))
    examples = [
        iso_witness(OddHermitian(np.diag([1.0, 2.0])), OddHermitian(np.diag([1.0, 2.0])), eye, 0.5),
        iso_witness(OddHermitian(np.zeros((2, 2))), OddHermitian(np.zeros((2, 2))), eye, 0.5),
        iso_witness(*_equivalence(np.random.default_rng(80)), 0.5),
    ]
    rng = np.random.default_rng(8)
    randoms = [iso_witness(*_equivalence(rng), 0.5) for _ in range(20)]
    worst_h = max(w.residual for w in examples + randoms)
    ok = worst_ident < 1e-8 and not uneven and worst_h < 1e-8
    verdict(8, ok, f"identification {worst_ident:.2e} on {len(ALL_PRESETS)} presets; uneven ranks {uneven}; "
                   f"max |h~^2 - 1| {worst_h:.2e}")


def test_criterion_09_group_law(verdict):
    sp = point_space()
    cover = build_cover(sp, {"0": [0]})
    failures = []
    for (a0, a1), (b0, b1) in [((2, 1), (0, 3)), ((1, 1), (2, 0)), ((0, 2), (1, 0))]:
        E, F = trivial_bundle(cover, a0, a1), trivial_bundle(cover, b0, b1)
        if index(direct_sum(E, F)) != [index(E)[0] + index(F)[0]] or index(reverse_grading(E)) != [a1 - a0]:
            failures.append(((a0, a1), (b0, b1)))
    worst, ends = 0.0, []
    for name in ("thom-disk", "random-5"):
        E = _bundle(name)
        S0, S1 = null_homotopy(E, 5).endpoints()
        worst = max(worst, check_iso(S0, direct_sum(E, reverse_grading(E)), t0_identification(E)).residual)
        ends.append(len(support(S1)))
    ok = not failures and worst < 1e-9 and ends == [0, 0]
    verdict(9, ok, f"index failures {failures}; t=0 residual {worst:.2e}; t=1 support sizes {ends}")


def test_criterion_10_clutching(verdict):
    got = {k: chern_number(winding(k).bundle).chern for k in range(4)}
    rings = {chern_number(winding(k).bundle).rings[0]["samples"] for k in range(4)}
    sums = {(a, b): chern_number(direct_sum(winding(a).bundle, winding(b).bundle)).chern for a, b in [(1, 2), (0, 3), (2, 1)]}
    ok = got == {k: k for k in range(4)} and rings == {64} and all(v == a + b for (a, b), v in sums.items())
    verdict(10, ok, f"chern {got}; additivity {sums}")

