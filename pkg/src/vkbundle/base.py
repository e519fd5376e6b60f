"""Discretized base spaces, open covers and twist cocycles.

A base space is a finite set of samples with an adjacency 1-skeleton.  An
"open set" is a chart membership set, and continuity is checked edge by
edge.  Chart ids are strings; sample points are integer indices.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import InputError, NotScalar, UncoveredEdge, UncoveredPoint

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class SampleSpace:
    """Finite sample set with symmetric adjacency.

    ``coords`` is an ``(n, dim)`` array of unitless coordinate labels (may
    have ``dim == 0``).  ``edges`` holds each undirected edge once as
    ``(i, j)`` with ``i < j``.
    """

    coords: np.ndarray
    edges: tuple
    name: str = "space"

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords.reshape(-1, 1)
        object.__setattr__(self, "coords", coords)
        n = coords.shape[0]
        norm = set()
        for e in self.edges:
            i, j = int(e[0]), int(e[1])
            if i == j:
                raise InputError(f"self-loop at point {i}", witness=[i, j])
            if not (0 <= i < n and 0 <= j < n):
                raise InputError(f"edge ({i}, {j}) references a missing point", witness=[i, j])
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", tuple(sorted(norm)))

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]

    @property
    def points(self) -> range:
        return range(self.n_points)

    def neighbors(self) -> list:
        nb = [[] for _ in self.points]
        for i, j in self.edges:
            nb[i].append(j)
            nb[j].append(i)
        return nb

    def components(self, subset=None) -> list:
        """Connected components (sorted point lists) of the induced subgraph."""
        keep = set(self.points if subset is None else subset)
        nb = self.neighbors()
        seen, comps = set(), []
        for p in sorted(keep):
            if p in seen:
                continue
            comp, queue = [], deque([p])
            seen.add(p)
            while queue:
                q = queue.popleft()
                comp.append(q)
                for r in nb[q]:
                    if r in keep and r not in seen:
                        seen.add(r)
                        queue.append(r)
            comps.append(sorted(comp))
        return comps

    def distance_to(self, targets) -> np.ndarray:
        """Graph distance from every point to the nearest point of ``targets``.

        Unreachable points get ``inf``.
        """
        dist = np.full(self.n_points, np.inf)
        nb = self.neighbors()
        queue = deque()
        for t in targets:
            dist[t] = 0
            queue.append(t)
        while queue:
            q = queue.popleft()
            for r in nb[q]:
                if dist[r] == np.inf:
                    dist[r] = dist[q] + 1
                    queue.append(r)
        return dist


@dataclass(frozen=True)
class OpenCover:
    """Charts over a sample space (or over a ``domain`` subset of it)."""

    space: SampleSpace
    charts: Mapping[str, tuple]
    domain: tuple = ()
    overlaps: Mapping[tuple, tuple] = field(default_factory=dict, repr=False)

    @property
    def ids(self) -> list:
        return list(self.charts)

    def members(self, alpha) -> tuple:
        return self.charts[alpha]

    def charts_at(self, x) -> list:
        return [a for a, pts in self.charts.items() if x in self._sets[a]]

    @property
    def _sets(self):
        cache = self.__dict__.get("_set_cache")
        if cache is None:
            cache = {a: frozenset(p) for a, p in self.charts.items()}
            object.__setattr__(self, "_set_cache", cache)
        return cache

    def contains(self, alpha, x) -> bool:
        return x in self._sets[alpha]

    def overlap(self, *ids) -> tuple:
        if len(ids) == 1:
            return self.charts[ids[0]]
        if len(ids) == 2 and ids in self.overlaps:
            return self.overlaps[ids]
        common = set.intersection(*(set(self._sets[a]) for a in ids))
        return tuple(sorted(common))

    def pairs(self) -> list:
        """Ordered pairs of distinct charts with nonempty overlap."""
        return [k for k in self.overlaps if k[0] != k[1]]


def build_cover(space: SampleSpace, charts: Mapping, domain: Optional[Sequence[int]] = None) -> OpenCover:
    """Validate raw chart membership and materialize pairwise overlaps.

    ``domain`` restricts the cover to a subset of the space (used for
    bundles living on an open subset); by default it is the whole space.

    Raises
    ------
    UncoveredPoint
        a domain sample lies in no chart.
    UncoveredEdge
        an edge inside the domain lies in no single chart.
    """
    dom = tuple(range(space.n_points)) if domain is None else tuple(sorted(set(int(p) for p in domain)))
    dom_set = set(dom)
    norm = {}
    for alpha, pts in charts.items():
        pts = tuple(sorted(set(int(p) for p in pts)))
        for p in pts:
            if p not in dom_set:
                raise InputError(f"chart {alpha!r} references point {p} outside the domain", witness=p)
        norm[str(alpha)] = pts
    covered = set().union(*[set(p) for p in norm.values()]) if norm else set()
    for p in dom:
        if p not in covered:
            raise UncoveredPoint(f"point {p} lies in no chart", witness=p)
    sets = {a: set(p) for a, p in norm.items()}
    for i, j in space.edges:
        if i in dom_set and j in dom_set:
            if not any(i in s and j in s for s in sets.values()):
                raise UncoveredEdge(f"edge {i}-{j} lies in no chart", witness=[i, j])
    overlaps = {}
    for a, b in itertools.product(norm, repeat=2):
        common = tuple(sorted(sets[a] & sets[b]))
        if common:
            overlaps[(a, b)] = common
    return OpenCover(space=space, charts=norm, domain=dom, overlaps=overlaps)


# ---------------------------------------------------------------------------
# Twist cocycles


@dataclass(frozen=True)
class TwistCocycle:
    """Unitary lifts ``g_ab(x)`` of projective transition functions.

    ``lifts[(a, b)][x]`` is an ``n x n`` unitary.  Only one direction of
    each pair needs to be stored; the other is taken as the inverse.
    ``g_aa`` is the identity.
    """

    cover: OpenCover
    n: int
    lifts: Mapping[tuple, Mapping[int, np.ndarray]]
    tol: float = DEFAULT_TOL

    def lift(self, a, b, x) -> np.ndarray:
        if a == b:
            return np.eye(self.n, dtype=complex)
        if (a, b) in self.lifts:
            return np.asarray(self.lifts[(a, b)][x], dtype=complex)
        if (b, a) in self.lifts:
            return np.linalg.inv(np.asarray(self.lifts[(b, a)][x], dtype=complex))
        raise InputError(f"no lift stored for charts {a!r}, {b!r}", witness=[a, b])


def trivial_twist(cover: OpenCover, n: int) -> TwistCocycle:
    lifts = {}
    for a, b in cover.pairs():
        if a < b:
            lifts[(a, b)] = {x: np.eye(n, dtype=complex) for x in cover.overlap(a, b)}
    return TwistCocycle(cover, n, lifts)


def _triple_product(tw, a, b, c, x):
    return tw.lift(a, b, x) @ tw.lift(b, c, x) @ np.linalg.inv(tw.lift(a, c, x))


def cocycle_scalar(tw: TwistCocycle, a, b, c, x, tol: Optional[float] = None) -> complex:
    """The scalar ``z_abc(x)`` with ``g_ab g_bc = z_abc g_ac``.

    Raises NotScalar (carrying the off-scalar residual) when the triple
    product is not a multiple of the identity.
    """
    tol = tw.tol if tol is None else tol
    if x not in tw.cover.overlap(a, b, c):
        raise InputError(f"point {x} not in the triple overlap {a},{b},{c}", witness=x)
    m = _triple_product(tw, a, b, c, x)
    z = np.trace(m) / tw.n
    resid = float(np.linalg.norm(m - z * np.eye(tw.n), 2))
    if resid > tol:
        raise NotScalar(f"triple product at {x} deviates from a scalar by {resid:.3g}", resid, witness=[a, b, c, x])
    return complex(z)


def phase_gap(z1: complex, z2: complex) -> tuple:
    """(modulus difference, wrapped argument difference) between two scalars."""
    dmod = abs(abs(z1) - abs(z2))
    darg = abs(np.angle(z1 * np.conj(z2))) if abs(z1) > 0 and abs(z2) > 0 else 0.0
    return dmod, float(darg)


@dataclass
class NerveReport:
    unitarity: float = 0.0
    antisymmetry: float = 0.0
    scalar: float = 0.0
    delta_z: float = 0.0
    z_values: dict = field(default_factory=dict)
    tol: float = DEFAULT_TOL

    @property
    def passed(self) -> bool:
        return (
            self.unitarity <= self.tol
            and self.antisymmetry <= self.tol
            and self.scalar <= self.tol
            and self.delta_z <= 10 * self.tol
        )

    def to_dict(self):
        return {
            "unitarity": self.unitarity,
            "antisymmetry": self.antisymmetry,
            "scalar": self.scalar,
            "delta_z": self.delta_z,
            "passed": self.passed,
        }


def nerve_check(tw: TwistCocycle, tol: Optional[float] = None) -> NerveReport:
    """Maximum residuals of the four twist-cocycle identities."""
    tol = tw.tol if tol is None else tol
    rep = NerveReport(tol=tol)
    eye = np.eye(tw.n)
    for (a, b), per_point in tw.lifts.items():
        for x, g in per_point.items():
            g = np.asarray(g, dtype=complex)
            rep.unitarity = max(rep.unitarity, float(np.linalg.norm(g.conj().T @ g - eye, 2)))
            if (b, a) in tw.lifts:
                back = np.asarray(tw.lifts[(b, a)][x], dtype=complex)
                rep.antisymmetry = max(rep.antisymmetry, float(np.linalg.norm(back @ g - eye, 2)))
    ids = sorted(tw.cover.ids)
    z = {}
    for a, b, c in itertools.combinations(ids, 3):
        for x in tw.cover.overlap(a, b, c):
            m = _triple_product(tw, a, b, c, x)
            zz = np.trace(m) / tw.n
            rep.scalar = max(rep.scalar, float(np.linalg.norm(m - zz * eye, 2)))
            z[(a, b, c, x)] = complex(zz)
    for a, b, c, d in itertools.combinations(ids, 4):
        for x in tw.cover.overlap(a, b, c, d):
            dz = z[(b, c, d, x)] * z[(a, b, d, x)] / (z[(a, b, c, x)] * z[(a, c, d, x)])
            rep.delta_z = max(rep.delta_z, abs(dz - 1.0))
    rep.z_values = z
    return rep


# ---------------------------------------------------------------------------
# Standard discretizations


def point_space(name="point") -> SampleSpace:
    return SampleSpace(np.zeros((1, 0)), (), name)


def circle(n: int, name="circle") -> SampleSpace:
    theta = 2 * np.pi * np.arange(n) / n
    coords = np.column_stack([np.cos(theta), np.sin(theta)])
    edges = [(i, (i + 1) % n) for i in range(n)] if n > 1 else []
    return SampleSpace(coords, tuple(edges), name)


def interval(n: int, name="interval") -> SampleSpace:
    t = np.linspace(0.0, 1.0, n)
    return SampleSpace(t.reshape(-1, 1), tuple((i, i + 1) for i in range(n - 1)), name)


def polar_disk(radii: Sequence[float], n_ring: int, name="disk") -> SampleSpace:
    """Center sample plus concentric rings; coordinates are (Re z, Im z).

    Ring ``k`` sample ``j`` sits at angle ``2 pi j / n_ring``.  Edges join
    ring neighbours, equal-angle samples on adjacent rings, and the center
    to the first ring.
    """
    coords = [(0.0, 0.0)]
    edges = []
    theta = 2 * np.pi * np.arange(n_ring) / n_ring
    for k, r in enumerate(radii):
        base = 1 + k * n_ring
        coords.extend(zip(r * np.cos(theta), r * np.sin(theta)))
        for j in range(n_ring):
            edges.append((base + j, base + (j + 1) % n_ring))
            edges.append((0 if k == 0 else base - n_ring + j, base + j))
    return SampleSpace(np.array(coords), tuple(edges), name)


def ring_indices(n_ring: int, k: int) -> list:
    """Point indices of ring ``k`` of a :func:`polar_disk` (0-based)."""
    base = 1 + k * n_ring
    return list(range(base, base + n_ring))


def sphere_from_disk(radii: Sequence[float], outer_radii: Sequence[float], n_ring: int, name="sphere"):
    """Two-sphere as the plane plus a point at infinity.

    The first ``len(radii)`` rings form the southern disk (the last of them
    is the equator, radius 1); ``outer_radii`` (> 1) rings continue towards
    the north pole, which is the final sample.  Coordinates are
    ``(Re z, Im z, is_pole)``.
    """
    all_r = list(radii) + list(outer_radii)
    disk = polar_disk(all_r, n_ring)
    n = disk.n_points
    last = ring_indices(n_ring, len(all_r) - 1)
    coords = np.column_stack([disk.coords, np.zeros(n)])
    coords = np.vstack([coords, [0.0, 0.0, 1.0]])
    edges = list(disk.edges) + [(p, n) for p in last]
    return SampleSpace(coords, tuple(edges), name)


def product_space(X: SampleSpace, Y: SampleSpace, name=None) -> tuple:
    """Product sample space; point ``(x, y)`` has index ``x * |Y| + y``.

    Returns ``(space, index)`` where ``index(x, y)`` gives the product index.
    """
    ny = Y.n_points
    coords = np.array([np.concatenate([X.coords[x], Y.coords[y]]) for x in X.points for y in Y.points])
    coords = coords.reshape(X.n_points * ny, X.coords.shape[1] + Y.coords.shape[1])
    edges = []
    for i, j in X.edges:
        edges.extend((i * ny + y, j * ny + y) for y in Y.points)
    for i, j in Y.edges:
        edges.extend((x * ny + i, x * ny + j) for x in X.points)
    sp = SampleSpace(coords, tuple(edges), name or f"{X.name}x{Y.name}")
    return sp, (lambda x, y: x * ny + y)
