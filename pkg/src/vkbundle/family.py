"""Finite truncations of Fredholm families and their low-lying spectral bundles.

A family assigns to every sample ``x`` an ``N x N`` matrix ``A(x)``; the
associated odd map is ``[[0, A^H], [A, 0]]`` on ``C^N (+) C^N``.  Over a
chart with a common spectral gap ``mu`` the eigenspaces of the square below
``mu`` form a graded vector bundle, which :func:`truncate` extracts together
with the compressed odd block.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from ._parallel import pmap
from .base import DEFAULT_TOL, OpenCover, SampleSpace, TwistCocycle
from .errors import BadParameters, GapViolation, InputError, NoCommonGap, ProjectionSingular
from .spectral import OddHermitian, eig_square

EPS_MIN = 0.01
SINGULAR_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class FredholmFamily:
    """``A`` has shape ``(n_points, N, N)``.

    For a twisted family, ``local`` maps a chart id to its own
    ``(n_points, N, N)`` array (only chart members are read) and ``twist``
    carries the lifts relating them.  ``k`` and ``delta`` parametrize the
    compactness surrogate: at most ``k`` singular values squared of ``A(x)``
    may leave the band ``[1 - delta, 1 + delta]``.
    """

    space: SampleSpace
    A: np.ndarray
    twist: Optional[TwistCocycle] = None
    local: Optional[Mapping[str, np.ndarray]] = None
    k: Optional[int] = None
    delta: float = 0.2

    def __post_init__(self):
        A = np.asarray(self.A, dtype=complex)
        if A.ndim != 3 or A.shape[1] != A.shape[2] or A.shape[0] != self.space.n_points:
            raise InputError(f"family array has shape {A.shape}, expected ({self.space.n_points}, N, N)")
        object.__setattr__(self, "A", A)
        if self.k is None:
            object.__setattr__(self, "k", max(1, round(0.25 * 2 * A.shape[1])))
        if self.local is not None:
            object.__setattr__(self, "local", {a: np.asarray(v, dtype=complex) for a, v in self.local.items()})
        if self.twist is not None and self.twist.n != A.shape[1]:
            raise InputError(f"twist lifts act on C^{self.twist.n}, family on C^{A.shape[1]}")

    @property
    def N(self) -> int:
        return self.A.shape[1]

    @property
    def surrogate_active(self) -> bool:
        """The surrogate constrains anything only when ``k < N``."""
        return self.k < self.N

    def at(self, x: int, alpha: Optional[str] = None) -> np.ndarray:
        if self.local is not None and alpha is not None and alpha in self.local:
            return self.local[alpha][x]
        return self.A[x]

    def hat(self, x: int, alpha: Optional[str] = None) -> OddHermitian:
        return OddHermitian(self.at(x, alpha))


def conjugate(f: FredholmFamily, U: np.ndarray, V: Optional[np.ndarray] = None) -> FredholmFamily:
    """Family ``V A U^H`` (``V`` defaults to ``U``)."""
    V = U if V is None else V
    A = np.einsum("ij,njk,lk->nil", V, f.A, U.conj())
    return FredholmFamily(f.space, A, k=f.k, delta=f.delta)


def direct_sum_family(f: FredholmFamily, g: FredholmFamily) -> FredholmFamily:
    n = f.space.n_points
    A = np.zeros((n, f.N + g.N, f.N + g.N), dtype=complex)
    A[:, : f.N, : f.N] = f.A
    A[:, f.N :, f.N :] = g.A
    return FredholmFamily(f.space, A, k=f.k + g.k, delta=min(f.delta, g.delta))


# ---------------------------------------------------------------------------
# Validation


@dataclass
class FamilyReport:
    surrogate_violations: int = 0
    surrogate_excess: int = 0
    surrogate_witness: Optional[int] = None
    edge_variation: float = 0.0
    twist_residual: float = 0.0
    tol: float = DEFAULT_TOL

    @property
    def passed(self) -> bool:
        return self.surrogate_violations == 0 and self.twist_residual <= max(self.tol, 1e-8)

    def to_dict(self):
        return {
            "surrogate_violations": self.surrogate_violations,
            "surrogate_excess": self.surrogate_excess,
            "surrogate_witness": self.surrogate_witness,
            "edge_variation": self.edge_variation,
            "twist_residual": self.twist_residual,
            "passed": self.passed,
        }


def _outside_band(A: np.ndarray, delta: float) -> int:
    s2 = np.linalg.svd(A, compute_uv=False) ** 2
    return int(np.sum(np.abs(s2 - 1.0) > delta))


def validate_family(f: FredholmFamily, tol: float = DEFAULT_TOL) -> FamilyReport:
    rep = FamilyReport(tol=tol)
    counts = pmap(lambda x: _outside_band(f.A[x], f.delta), f.space.points)
    for x, c in enumerate(counts):
        if c > f.k:
            rep.surrogate_violations += 1
            if c - f.k > rep.surrogate_excess:
                rep.surrogate_excess, rep.surrogate_witness = c - f.k, x
    for i, j in f.space.edges:
        rep.edge_variation = max(rep.edge_variation, float(np.linalg.norm(f.A[i] - f.A[j], 2)))
    if f.twist is not None:
        if f.local is None:
            raise InputError("twisted family needs per-chart matrices")
        tw = f.twist
        for a, b in tw.cover.pairs():
            for x in tw.cover.overlap(a, b):
                g = tw.lift(a, b, x)
                r = np.linalg.norm(f.at(x, a) @ g - g @ f.at(x, b), 2)
                rep.twist_residual = max(rep.twist_residual, float(r))
    return rep


def spectra(f: FredholmFamily, points: Optional[Sequence[int]] = None, alpha=None) -> np.ndarray:
    """Sorted eigenvalues of the squared odd map, one row per sample."""
    pts = list(f.space.points if points is None else points)
    rows = pmap(lambda x: eig_square(f.hat(x, alpha)).values, pts)
    return np.array(rows).reshape(len(pts), 2 * f.N)


# ---------------------------------------------------------------------------
# Gaps


def find_chart_gap(
    f: FredholmFamily,
    chart: Sequence[int],
    window: tuple = (0.0, 1.0),
    eps_min: float = EPS_MIN,
    alpha: Optional[str] = None,
) -> tuple:
    """``(mu, eps)``: midpoint and half-width of the widest spectral gap in ``window``.

    Eigenvalues of every sample of the chart are pooled; the window
    endpoints count as walls.
    """
    lo, hi = window
    if not 0 <= lo < hi:
        raise BadParameters(f"bad gap window {window}")
    if hi > 1.0 and f.surrogate_active:
        raise BadParameters("gap window must stay below 1 while the compactness surrogate is active")
    chart = list(chart)
    if not chart:
        raise InputError("empty chart")
    vals = spectra(f, chart, alpha).ravel()
    walls = np.unique(np.concatenate([[lo, hi], vals[(vals > lo) & (vals < hi)]]))
    widths = np.diff(walls)
    j = int(np.argmax(widths))
    if widths[j] < 2 * eps_min:
        raise NoCommonGap(
            f"widest common gap {widths[j]:.3g} is narrower than {2 * eps_min:g}",
            witness={"points": chart[:1] + chart[-1:], "width": float(widths[j])},
        )
    return float(0.5 * (walls[j] + walls[j + 1])), float(0.5 * widths[j])


# ---------------------------------------------------------------------------
# Spectral sub-bundles


@dataclass(frozen=True, eq=False)
class SpectralSubBundle:
    """Below-``mu`` eigenbundle of a family over one chart.

    ``frames0[x]`` (``N x r0``) and ``frames1[x]`` (``N x r1``) are
    orthonormal and aligned with the anchor sample; ``B[x] = F1^H A F0`` is
    the compressed odd block.
    """

    chart: str
    points: tuple
    mu: float
    eps: float
    rank: tuple
    frames0: Mapping[int, np.ndarray]
    frames1: Mapping[int, np.ndarray]
    B: Mapping[int, np.ndarray]
    anchor: int
    inv_norm: float = 1.0

    def h(self, x: int) -> OddHermitian:
        return OddHermitian(self.B[x], d0=self.rank[0], d1=self.rank[1])


def _raw_frames(A: np.ndarray, mu: float, tol: float):
    w0, v0 = np.linalg.eigh(A.conj().T @ A)
    w1, v1 = np.linalg.eigh(A @ A.conj().T)
    w = np.concatenate([w0, w1])
    j = int(np.argmin(np.abs(w - mu)))
    if abs(w[j] - mu) <= tol:
        return None, float(w[j])
    return (v0[:, w0 < mu], v1[:, w1 < mu]), float(w[j])


def _align(F: np.ndarray, F_anchor: np.ndarray):
    """Rotate ``F`` within its span so its overlap with the anchor is positive."""
    if F.shape[1] == 0:
        return F, 1.0
    T = F_anchor.conj().T @ F
    U, s, Vh = np.linalg.svd(T)
    return F @ Vh.conj().T @ U.conj().T, float(s.min())


def truncate(
    f: FredholmFamily,
    chart: Sequence[int],
    mu: float,
    eps: Optional[float] = None,
    alpha: Optional[str] = None,
    chart_id: str = "0",
    anchor: Optional[int] = None,
    tol: float = 1e-12,
) -> SpectralSubBundle:
    """Extract the below-``mu`` spectral bundle over ``chart``.

    Raises GapViolation naming the first sample with an eigenvalue within
    ``tol`` of ``mu`` or whose graded rank differs from the anchor's, and
    ProjectionSingular when a frame cannot be identified with the anchor's.
    """
    pts = tuple(sorted(int(p) for p in chart))
    anchor = pts[0] if anchor is None else int(anchor)
    mats = {x: f.at(x, alpha) for x in pts}
    raw = dict(zip(pts, pmap(lambda x: _raw_frames(mats[x], mu, tol), pts)))
    for x in pts:
        if raw[x][0] is None:
            raise GapViolation(
                f"sample {x}: eigenvalue {raw[x][1]:.6g} on the level {mu:g}",
                witness={"sample": x, "lambda": raw[x][1], "mu": mu},
            )
    A0, A1 = raw[anchor][0]
    rank = (A0.shape[1], A1.shape[1])
    frames0, frames1, blocks = {}, {}, {}
    worst = np.inf
    for x in pts:
        F0, F1 = raw[x][0]
        if (F0.shape[1], F1.shape[1]) != rank:
            raise GapViolation(
                f"sample {x}: graded rank {(F0.shape[1], F1.shape[1])} differs from {rank} at the anchor",
                witness={"sample": x, "lambda": raw[x][1], "mu": mu},
            )
        F0, s0 = _align(F0, A0)
        F1, s1 = _align(F1, A1)
        smin = min(s0, s1)
        if smin < SINGULAR_FLOOR:
            raise ProjectionSingular(f"sample {x}: frame projects singularly onto the anchor frame", witness=x)
        worst = min(worst, smin)
        frames0[x], frames1[x] = F0, F1
        blocks[x] = F1.conj().T @ mats[x] @ F0
    if eps is None:
        eps = min(abs(raw[x][1] - mu) for x in pts)
    return SpectralSubBundle(chart_id, pts, float(mu), float(eps), rank, frames0, frames1, blocks, anchor, 1.0 / worst)


@dataclass
class Trivialization:
    anchor: int
    maps: dict = field(default_factory=dict)
    cond: float = 1.0
    inv_norm: float = 1.0


def trivialize(sb: SpectralSubBundle, anchor: Optional[int] = None) -> Trivialization:
    """Graded maps ``T(x) = P_anchor o incl_x`` identifying each fibre with the anchor fibre."""
    anchor = sb.anchor if anchor is None else anchor
    out = Trivialization(anchor)
    for x in sb.points:
        T0 = sb.frames0[anchor].conj().T @ sb.frames0[x]
        T1 = sb.frames1[anchor].conj().T @ sb.frames1[x]
        for T in (T0, T1):
            if T.shape[0] == 0:
                continue
            s = np.linalg.svd(T, compute_uv=False)
            if s.min() < SINGULAR_FLOOR:
                raise ProjectionSingular(f"sample {x}: projection to the anchor fibre drops rank", witness=x)
            out.cond = max(out.cond, float(s.max() / s.min()))
            out.inv_norm = max(out.inv_norm, float(1.0 / s.min()))
        out.maps[x] = (T0, T1)
    return out


# ---------------------------------------------------------------------------
# Chart refinement


def split_chart(space: SampleSpace, chart: Sequence[int]) -> list:
    """Two overlapping halves of a chart, split along breadth-first order.

    Each half is thickened by its one-ring neighbours inside the chart so
    that every internal edge stays inside one half.
    """
    pts = sorted(chart)
    if len(pts) < 2:
        return [pts]
    keep = set(pts)
    nb = space.neighbors()
    order, seen = [], set()
    for start in pts:
        if start in seen:
            continue
        queue = [start]
        seen.add(start)
        while queue:
            q = queue.pop(0)
            order.append(q)
            for r in nb[q]:
                if r in keep and r not in seen:
                    seen.add(r)
                    queue.append(r)
    half = len(order) // 2
    parts = []
    for part in (order[:half], order[half:]):
        grown = set(part)
        for p in part:
            grown.update(r for r in nb[p] if r in keep)
        parts.append(sorted(grown))
    return parts


def refine_cover(cover: OpenCover, alpha: str, parts: list) -> dict:
    """Raw chart dict with ``alpha`` replaced by ``alpha.0``, ``alpha.1``, ..."""
    raw = {a: list(p) for a, p in cover.charts.items() if a != alpha}
    for i, p in enumerate(parts):
        raw[f"{alpha}.{i}"] = list(p)
    return raw
