"""Named scenarios: a sample space, a cover, a family or bundle, and expected invariants."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .base import TwistCocycle, build_cover, circle, point_space, ring_indices, sphere_from_disk
from .errors import UnknownPreset
from .family import FredholmFamily
from .vectorial import VectorialBundle, mayer_vietoris, trivial_bundle

PRESETS = ("thom-disk", "bott-sphere", "winding-k", "pauli-twist", "spectral-flow-circle", "invertible-trivial")

THOM_RINGS = 8
THOM_RING_SIZE = 25
THOM_SPLIT = 0.625

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass
class Scenario:
    name: str
    space: object
    cover: object
    family: Optional[FredholmFamily] = None
    bundle: Optional[VectorialBundle] = None
    expected: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)


def _thom_space():
    radii = np.arange(1, THOM_RINGS + 1) / THOM_RINGS
    return sphere_from_disk(radii, [2.0], THOM_RING_SIZE, name="thom-sphere")


def thom_disk(split: float = THOM_SPLIT) -> Scenario:
    """``A(z) = z`` on the closed unit disk, the southern hemisphere of a sampled sphere."""
    sp = _thom_space()
    z = sp.coords[:, 0] + 1j * sp.coords[:, 1]
    r = np.abs(z)
    disk = [p for p in sp.points if r[p] <= 1 + 1e-9 and sp.coords[p, 2] == 0]
    cover = build_cover(
        sp,
        {"S": [p for p in disk if r[p] <= split + 1e-9], "N": [p for p in disk if r[p] >= split - 1e-9]},
        disk,
    )
    fam = FredholmFamily(sp, z.reshape(-1, 1, 1), k=1, delta=0.5)
    boundary = ring_indices(THOM_RING_SIZE, THOM_RINGS - 1)
    return Scenario(
        "thom-disk",
        sp,
        cover,
        family=fam,
        expected={"index": 0, "chern": None, "cocycle_pass": True, "support": [0], "boundary_support": []},
        params={"boundary": boundary, "outside": sorted(set(sp.points) - set(disk))},
    )


def bott_sphere(split: float = THOM_SPLIT) -> Scenario:
    """The Thom bundle extended by the rank-zero object over the northern cap."""
    from .approx import alpha
    from .vectorial import extend_by_trivial

    th = thom_disk(split)
    E = extend_by_trivial(alpha(th.family, th.cover), th.params["outside"])
    return Scenario(
        "bott-sphere",
        th.space,
        E.cover,
        bundle=E,
        expected={"index": 0, "chern": 1, "cocycle_pass": True},
    )


def equator_sphere(n_ring: int = 64):
    """Sphere with southern and northern disk charts meeting on the unit circle."""
    sp = sphere_from_disk([0.5, 1.0], [2.0], n_ring, name="sphere")
    south = [0] + ring_indices(n_ring, 0) + ring_indices(n_ring, 1)
    north = ring_indices(n_ring, 1) + ring_indices(n_ring, 2) + [sp.n_points - 1]
    return sp, south, north


def winding(k: int, n_ring: int = 64) -> Scenario:
    """Line bundle on the sphere clutched by ``exp(i k theta)`` along the equator."""
    sp, south, north = equator_sphere(n_ring)
    E = trivial_bundle(build_cover(sp, {"S": south}, south), 1, 0)
    F = trivial_bundle(build_cover(sp, {"N": north}, north), 1, 0)
    eq = ring_indices(n_ring, 1)
    theta = np.arctan2(sp.coords[eq, 1], sp.coords[eq, 0])
    psi = {
        ("S", "N"): {x: (np.array([[np.exp(1j * k * t)]]), np.zeros((0, 0), dtype=complex)) for x, t in zip(eq, theta)}
    }
    G = mayer_vietoris(E, F, psi)
    return Scenario(
        f"winding-{k}",
        sp,
        G.cover,
        bundle=G,
        expected={"index": 1, "chern": k, "cocycle_pass": True},
        params={"k": k},
    )


def pauli_twist() -> Scenario:
    """Three charts over a point with lifts ``sx, sy, sz``; the triple product is ``i``."""
    sp = point_space()
    cover = build_cover(sp, {"0": [0], "1": [0], "2": [0]})
    twist = TwistCocycle(cover, 2, {("0", "1"): {0: SX}, ("1", "2"): {0: SY}, ("0", "2"): {0: SZ}})
    A2 = np.diag([0.2, 1.0]).astype(complex)
    local = {"2": A2[None], "1": (SY @ A2 @ SY.conj().T)[None], "0": (SZ @ A2 @ SZ.conj().T)[None]}
    fam = FredholmFamily(sp, local["0"], twist=twist, local=local)
    return Scenario(
        "pauli-twist",
        sp,
        cover,
        family=fam,
        expected={"index": 0, "chern": None, "cocycle_pass": True, "untwisted_pass": False, "z": [0.0, 1.0]},
    )


def spectral_flow_circle(n: int = 32) -> Scenario:
    """One singular value sweeps ``[0.1, 1]`` around the circle, so no single gap serves all samples."""
    sp = circle(n)
    theta = 2 * np.pi * np.arange(n) / n
    s = np.sqrt(0.505 + 0.495 * np.cos(theta))
    A = np.array([np.diag([v, 1.0]) for v in s], dtype=complex)
    fam = FredholmFamily(sp, A)
    cover = build_cover(sp, {"0": list(sp.points)})
    return Scenario("spectral-flow-circle", sp, cover, family=fam, expected={"index": 0, "chern": None, "cocycle_pass": True})


def invertible_trivial(n: int = 8) -> Scenario:
    sp = circle(n)
    fam = FredholmFamily(sp, np.tile(np.eye(2, dtype=complex), (n, 1, 1)))
    cover = build_cover(sp, {"0": list(sp.points)})
    return Scenario(
        "invertible-trivial", sp, cover, family=fam, expected={"index": 0, "chern": None, "cocycle_pass": True, "support": []}
    )


def random_family(seed: int, n: int = 6, N: int = 4, noise: float = 0.05) -> Scenario:
    """Smallest singular value near ``sqrt(0.05)``, the rest inside the surrogate band."""
    rng = np.random.default_rng(seed)
    sp = circle(n)
    base = np.diag(np.sqrt(np.r_[0.05, np.linspace(0.9, 1.1, N - 1)]))

    def unitary():
        q, r = np.linalg.qr(rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N)))
        return q * (np.diag(r) / np.abs(np.diag(r)))

    U, V = unitary(), unitary()
    noise_m = noise * (rng.normal(size=(n, N, N)) + 1j * rng.normal(size=(n, N, N))) / np.sqrt(2 * N)
    A = np.array([V @ (base + e) @ U.conj().T for e in noise_m])
    fam = FredholmFamily(sp, A)
    cover = build_cover(sp, {"0": list(sp.points)})
    return Scenario(f"random-{seed}", sp, cover, family=fam, expected={"index": 0, "chern": None, "cocycle_pass": True})


def family_path(n_t: int = 5, n: int = 8) -> list:
    """Families ``V_t(x) diag(0, 1)`` on a circle with ``V_t`` a rotation by ``t pi/4 sin(theta)``.

    Every step has a one-dimensional kernel, so the support is the whole circle.
    """
    sp = circle(n)
    theta = 2 * np.pi * np.arange(n) / n
    out = []
    for t in np.linspace(0.0, 1.0, n_t):
        a = 0.25 * np.pi * t * np.sin(theta)
        V = np.array([[[np.cos(u), -np.sin(u)], [np.sin(u), np.cos(u)]] for u in a], dtype=complex)
        out.append(FredholmFamily(sp, V @ np.diag([0.0, 1.0])))
    return out


def preset(name: str, k: Optional[int] = None) -> Scenario:
    if name == "thom-disk":
        return thom_disk()
    if name == "bott-sphere":
        return bott_sphere()
    if name == "winding-k" or name.startswith("winding-"):
        tail = name[len("winding-") :]
        if k is None:
            try:
                k = 1 if tail == "k" else int(tail)
            except ValueError:
                raise UnknownPreset(f"unknown preset {name!r}", witness={"known": list(PRESETS)}) from None
        return winding(k)
    if name == "pauli-twist":
        return pauli_twist()
    if name == "spectral-flow-circle":
        return spectral_flow_circle()
    if name == "invertible-trivial":
        return invertible_trivial()
    if name.startswith("random"):
        return random_family(int(name.split("-", 1)[1]) if "-" in name else 0)
    raise UnknownPreset(f"unknown preset {name!r}", witness={"known": list(PRESETS)})
