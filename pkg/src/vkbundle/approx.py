"""From a Fredholm family to a vectorial bundle, and the Bott compatibility check."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .base import OpenCover, TwistCocycle, build_cover, polar_disk, product_space
from .errors import GapViolation, InputError, NoCommonGap, ProjectionSingular
from .family import FredholmFamily, find_chart_gap, split_chart, truncate, validate_family
from .spectral import OddHermitian
from .vectorial import Piece, bdiag, VectorialBundle, bott, check_iso, graded_tensor, thom_block

MAX_SPLIT_DEPTH = 4


@dataclass
class AlphaResult:
    bundle: VectorialBundle
    subbundles: dict
    gaps: dict
    roots: dict = field(default_factory=dict)


def default_cover(f: FredholmFamily) -> OpenCover:
    if f.twist is not None:
        return f.twist.cover
    return build_cover(f.space, {"0": list(f.space.points)})


def _chart_bundle(f, pts, root, cid, level, window, eps_min):
    if level is None:
        mu, eps = find_chart_gap(f, pts, window, eps_min, alpha=root)
    else:
        mu, eps = level, None
    return truncate(f, pts, mu, eps=eps, alpha=root, chart_id=cid)


def alpha_data(
    f: FredholmFamily,
    cover: Optional[OpenCover] = None,
    levels: Optional[Mapping[str, float]] = None,
    window: tuple = (0.0, 1.0),
    eps_min: float = 0.01,
    check: bool = True,
) -> AlphaResult:
    """Build the bundle together with its per-chart spectral sub-bundles.

    Charts admitting no common gap (or no single anchor) are split in two
    along their adjacency graph, at most ``MAX_SPLIT_DEPTH`` times.  With
    explicit ``levels`` no refinement happens.
    """
    if check:
        rep = validate_family(f)
        if not rep.passed:
            raise InputError("family fails validation", witness=rep.to_dict())
    cover = cover or default_cover(f)
    if f.twist is not None and set(cover.ids) != set(f.twist.cover.ids):
        raise InputError("a twisted family must be used with its twist cover")
    queue = [(a, list(cover.members(a)), a, 0) for a in cover.ids]
    subs, roots = {}, {}
    while queue:
        cid, pts, root, depth = queue.pop(0)
        lvl = None if levels is None else levels[cid]
        try:
            subs[cid] = _chart_bundle(f, pts, root, cid, lvl, window, eps_min)
            roots[cid] = root
        except (NoCommonGap, ProjectionSingular, GapViolation):
            if levels is not None or depth >= MAX_SPLIT_DEPTH or len(pts) < 2:
                raise
            for i, part in enumerate(split_chart(f.space, pts)):
                queue.append((f"{cid}.{i}", part, root, depth + 1))
    if set(subs) == set(cover.ids):
        final = cover
    else:
        final = build_cover(f.space, {c: sb.points for c, sb in subs.items()}, cover.domain)
    pieces = {c: Piece(sb.rank[0], sb.rank[1], sb.mu, sb.B) for c, sb in subs.items()}

    def lift(c, d, x):
        if f.twist is None or roots[c] == roots[d]:
            return None
        return f.twist.lift(roots[c], roots[d], x)

    trans = {}
    for c, d in final.pairs():
        per = {}
        for x in final.overlap(c, d):
            g = lift(c, d, x)
            sc, sd = subs[c], subs[d]
            if g is None:
                per[x] = (sc.frames0[x].conj().T @ sd.frames0[x], sc.frames1[x].conj().T @ sd.frames1[x])
            else:
                per[x] = (sc.frames0[x].conj().T @ g @ sd.frames0[x], sc.frames1[x].conj().T @ g @ sd.frames1[x])
        trans[(c, d)] = per
    twist = None
    if f.twist is not None:
        lifts = {}
        for c, d in final.pairs():
            if c < d:
                lifts[(c, d)] = {
                    x: (np.eye(f.N, dtype=complex) if roots[c] == roots[d] else f.twist.lift(roots[c], roots[d], x))
                    for x in final.overlap(c, d)
                }
        twist = TwistCocycle(final, f.N, lifts, f.twist.tol)
    gaps = {c: (sb.mu, sb.eps) for c, sb in subs.items()}
    return AlphaResult(VectorialBundle(final, pieces, trans, twist), subs, gaps, roots)


def alpha(f: FredholmFamily, cover: Optional[OpenCover] = None, **kw) -> VectorialBundle:
    """The vectorial bundle of below-gap eigenspaces of ``f``."""
    return alpha_data(f, cover, **kw).bundle


# ---------------------------------------------------------------------------
# Bott compatibility


def bott_disk(eps: float, n_ring: int = 4):
    """Disk with rings uniform in ``|z|^2`` at spacing below ``eps``, boundary ring ``|z| = 1``."""
    m = int(np.ceil(1.0 / (0.9 * eps)))
    return polar_disk(np.sqrt(np.arange(1, m + 1) / m), n_ring)


def shell_charts(disk, eps: float) -> tuple:
    """Charts ``V(s; eps) = {s - eps < |z|^2 < s + eps}`` with ``s = j eps``."""
    r2 = disk.coords[:, 0] ** 2 + disk.coords[:, 1] ** 2
    charts, shifts = {}, {}
    j = 0
    while (j - 1) * eps < r2.max():
        s = j * eps
        pts = [int(d) for d in np.nonzero((r2 > s - eps) & (r2 < s + eps))[0]]
        if pts:
            charts[str(j)], shifts[str(j)] = pts, s
        j += 1
    return charts, shifts


def beta_family(f: FredholmFamily, disk) -> FredholmFamily:
    """``A (x) 1 + eps (x) T_z`` over ``X x D`` as a family on ``C^{2N}``."""
    sp, idx = product_space(f.space, disk)
    zs = disk.coords[:, 0] + 1j * disk.coords[:, 1]
    nd = disk.n_points

    def blocks(mats):
        return np.array([graded_tensor(OddHermitian(mats[q // nd]), thom_block(zs[q % nd])).B for q in sp.points])

    local = None
    if f.local is not None:
        local = {a: blocks(v) for a, v in f.local.items()}
    return FredholmFamily(sp, blocks(f.A), local=local, k=2 * f.k, delta=f.delta)


@dataclass
class CompatReport:
    intertwining: float
    compatibility: float
    unitarity: float
    rank_ok: bool
    n_charts: int
    n_samples: int
    eps: float

    @property
    def residual(self) -> float:
        return max(self.intertwining, self.compatibility, self.unitarity) if self.rank_ok else np.inf

    def to_dict(self):
        return {
            "residual": self.residual,
            "intertwining": self.intertwining,
            "compatibility": self.compatibility,
            "unitarity": self.unitarity,
            "rank_ok": self.rank_ok,
            "charts": self.n_charts,
            "samples": self.n_samples,
            "eps": self.eps,
        }


def alpha_beta_compatibility(
    f: FredholmFamily, cover: Optional[OpenCover] = None, disk=None, n_ring: int = 4, check: bool = True
) -> CompatReport:
    """Compare the Bott image of ``alpha(f)`` with ``alpha`` of the Bott-shifted family.

    Both live on the charts ``U_a x V(s; eps')`` with levels ``mu_a + s``,
    where ``eps'`` is half the smallest chart gap.  The identification of the
    low eigenspaces of the shifted family with ``E_a (x) (C (+) C)`` comes
    from the frames of ``alpha(f)``.
    """
    res = alpha_data(f, cover, check=check)
    E = res.bundle
    eps = 0.5 * min(e for _, e in res.gaps.values())
    disk = disk if disk is not None else bott_disk(eps, n_ring)
    charts, shifts = shell_charts(disk, eps)
    left = bott(E, disk, charts, shifts)
    fb = beta_family(f, disk)
    nd = disk.n_points
    if E.twist is not None:
        lifts = {}
        for c, d in left.cover.pairs():
            if c < d:
                ac, ad = c.split("|")[0], d.split("|")[0]
                lifts[(c, d)] = {
                    q: bdiag(g, g) for q, g in ((q, E.twist.lift(ac, ad, q // nd)) for q in left.cover.overlap(c, d))
                }
        twist = TwistCocycle(left.cover, 2 * f.N, lifts)
        local = {c: fb.local[res.roots[c.split("|")[0]]] for c in left.cover.ids}
        fb = FredholmFamily(fb.space, fb.A, twist=twist, local=local, k=fb.k, delta=fb.delta)
    levels = {c: p.level for c, p in left.pieces.items()}
    right = alpha_data(fb, left.cover, levels=levels, check=False)
    psi = {}
    for c in left.cover.ids:
        a = c.split("|")[0]
        sb, sb2 = res.subbundles[a], right.subbundles[c]
        per = {}
        for q in left.cover.members(c):
            x = q // nd
            frame = bdiag(sb.frames0[x], sb.frames1[x])
            per[q] = (sb2.frames0[q].conj().T @ frame, sb2.frames1[q].conj().T @ frame)
        psi[c] = per
    rep = check_iso(left, right.bundle, psi)
    return CompatReport(
        rep.intertwining,
        rep.compatibility,
        rep.unitarity,
        rep.rank_ok and rep.min_singular > 1e-8,
        len(left.cover.ids),
        len(left.cover.domain),
        eps,
    )
