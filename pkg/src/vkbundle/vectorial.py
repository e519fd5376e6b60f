"""Vectorial bundles: local graded bundles glued only below a spectral gap.

A bundle consists of an open cover, a trivial graded piece ``V_a`` with an
odd Hermitian map ``h_a(x)`` per chart, and graded transitions
``phi_ab(x) : V_b -> V_a`` on overlaps.  Transitions only need to be
isomorphisms on the eigenspaces of ``h^2`` below the chart levels, and the
cocycle identities only need to hold there.

Graded tensor products order the even part of ``E (x) F`` as
``E0 (x) F0 (+) E1 (x) F1`` and the odd part as ``E0 (x) F1 (+) E1 (x) F0``.
The sign operator acts as ``+1`` on even vectors.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from .base import OpenCover, SampleSpace, TwistCocycle, build_cover, cocycle_scalar, interval, product_space
from .errors import InputError, NotIso, ShapeMismatch, SupportTouchesBoundary, TwistMismatch
from .spectral import OddHermitian, below_frame

CHECK_TOL = 1e-8
ISO_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class Piece:
    """Trivial graded bundle ``C^d0 (+) C^d1`` over a chart with odd blocks ``B[x]``."""

    d0: int
    d1: int
    level: float
    B: Mapping[int, np.ndarray]

    def h(self, x: int) -> OddHermitian:
        return OddHermitian(self.B[x], d0=self.d0, d1=self.d1)


@dataclass(frozen=True, eq=False)
class VectorialBundle:
    cover: OpenCover
    pieces: Mapping[str, Piece]
    transitions: Mapping[tuple, Mapping[int, tuple]]
    twist: Optional[TwistCocycle] = None

    @property
    def space(self) -> SampleSpace:
        return self.cover.space

    def transition(self, a: str, b: str, x: int) -> tuple:
        if a == b:
            p = self.pieces[a]
            return np.eye(p.d0, dtype=complex), np.eye(p.d1, dtype=complex)
        try:
            return self.transitions[(a, b)][x]
        except KeyError:
            raise InputError(f"no transition {a!r} <- {b!r} at sample {x}", witness=[a, b, x]) from None

    def ranks(self) -> dict:
        return {a: (p.d0, p.d1) for a, p in self.pieces.items()}


def bdiag(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Two-block diagonal matrix; empty blocks keep their shape."""
    out = np.zeros((p.shape[0] + q.shape[0], p.shape[1] + q.shape[1]), dtype=complex)
    out[: p.shape[0], : p.shape[1]] = p
    out[p.shape[0] :, p.shape[1] :] = q
    return out


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(a.shape[0] * b.shape[0], a.shape[1] * b.shape[1])


def full(phi: tuple) -> np.ndarray:
    """Block-diagonal matrix of a graded map ``(phi0, phi1)``."""
    return bdiag(np.asarray(phi[0]), np.asarray(phi[1]))


def below_frames(h: OddHermitian, mu: float) -> tuple:
    """Graded orthonormal frames ``(Q0, Q1)`` of the eigenspaces of ``h^2`` below ``mu``."""
    B = h.B
    Q0 = below_frame(B.conj().T @ B, mu) if h.d0 else np.zeros((0, 0), dtype=complex)
    Q1 = below_frame(B @ B.conj().T, mu) if h.d1 else np.zeros((0, 0), dtype=complex)
    return Q0, Q1


def _below_full(h: OddHermitian, mu: float) -> np.ndarray:
    return full(below_frames(h, mu))


# ---------------------------------------------------------------------------
# Constructors


def _store_pair(trans, a, b, x, fwd, back):
    trans.setdefault((a, b), {})[x] = fwd
    trans.setdefault((b, a), {})[x] = back


def trivial_bundle(cover: OpenCover, d0: int, d1: int, B=None, level: float = 1.0, twist=None) -> VectorialBundle:
    """Constant pieces ``B`` on every chart, identity transitions."""
    B = np.zeros((d1, d0), dtype=complex) if B is None else np.asarray(B, dtype=complex).reshape(d1, d0)
    pieces = {a: Piece(d0, d1, level, {x: B for x in cover.members(a)}) for a in cover.ids}
    eye = (np.eye(d0, dtype=complex), np.eye(d1, dtype=complex))
    trans = {}
    for a, b in cover.pairs():
        if a < b:
            for x in cover.overlap(a, b):
                _store_pair(trans, a, b, x, eye, eye)
    return VectorialBundle(cover, pieces, trans, twist)


def bundle_from_blocks(cover: OpenCover, blocks, level: float = 1.0) -> VectorialBundle:
    """Same per-sample block ``blocks[x]`` on every chart, identity transitions."""
    blocks = {x: np.asarray(blocks[x], dtype=complex) for x in cover.domain}
    d1, d0 = next(iter(blocks.values())).shape
    pieces = {a: Piece(d0, d1, level, {x: blocks[x] for x in cover.members(a)}) for a in cover.ids}
    eye = (np.eye(d0, dtype=complex), np.eye(d1, dtype=complex))
    trans = {}
    for a, b in cover.pairs():
        if a < b:
            for x in cover.overlap(a, b):
                _store_pair(trans, a, b, x, eye, eye)
    return VectorialBundle(cover, pieces, trans)


# ---------------------------------------------------------------------------
# Graded tensor products


@functools.lru_cache(maxsize=None)
def graded_perm(e0: int, e1: int, f0: int, f1: int) -> tuple:
    """Indices of the even and odd parts of ``E (x) F`` inside ``kron`` order."""
    nf = f0 + f1
    even = [i * nf + j for i in range(e0) for j in range(f0)]
    even += [i * nf + j for i in range(e0, e0 + e1) for j in range(f0, nf)]
    odd = [i * nf + j for i in range(e0) for j in range(f0, nf)]
    odd += [i * nf + j for i in range(e0, e0 + e1) for j in range(f0)]
    return np.array(even, dtype=int), np.array(odd, dtype=int)


@functools.lru_cache(maxsize=None)
def _odd_even_ix(e0: int, e1: int, f0: int, f1: int) -> tuple:
    even, odd = graded_perm(e0, e1, f0, f1)
    return np.ix_(odd, even)


def graded_tensor(h: OddHermitian, k: OddHermitian) -> OddHermitian:
    """``h (x) 1 + eps (x) k`` as an odd map on the graded tensor product."""
    sign = np.concatenate([np.ones(h.d0), -np.ones(h.d1)])
    H = kron(h.full(), np.eye(k.dim)) + kron(np.diag(sign), k.full())
    ix = _odd_even_ix(h.d0, h.d1, k.d0, k.d1)
    return OddHermitian(H[ix], d0=h.d0 * k.d0 + h.d1 * k.d1, d1=h.d0 * k.d1 + h.d1 * k.d0)


def tensor_hom(phi: tuple, psi: tuple) -> tuple:
    """Degree-zero map ``phi (x) psi`` between graded tensor products."""
    p, q = full(phi), full(psi)
    M = kron(p, q)
    (a0, b0), (a1, b1) = phi[0].shape, phi[1].shape
    (c0, e0), (c1, e1) = psi[0].shape, psi[1].shape
    te, to = graded_perm(a0, a1, c0, c1)
    se, so = graded_perm(b0, b1, e0, e1)
    return M[te][:, se], M[to][:, so]


def thom_block(z: complex) -> OddHermitian:
    """``T_z = [[0, conj z], [z, 0]]`` on ``C (+) C``."""
    return OddHermitian(np.array([[z]], dtype=complex))


# ---------------------------------------------------------------------------
# Equivalence and cocycle checks


def check_equiv(phi, phi2, h_src: OddHermitian, mu: float) -> float:
    """``||(phi - phi2) P||`` where ``P`` projects onto the eigenspaces of ``h_src^2`` below ``mu``."""
    p = full(phi) if isinstance(phi, tuple) else np.asarray(phi, dtype=complex)
    q = full(phi2) if isinstance(phi2, tuple) else np.asarray(phi2, dtype=complex)
    if p.shape != q.shape or p.shape[1] != h_src.dim:
        raise ShapeMismatch(f"maps of shape {p.shape} and {q.shape} on a space of dimension {h_src.dim}")
    Q = _below_full(h_src, mu)
    if Q.shape[1] == 0:
        return 0.0
    return float(np.linalg.norm((p - q) @ Q, 2))


@dataclass
class CocycleReport:
    intertwining: float = 0.0
    inverse: float = 0.0
    triple: float = 0.0
    twisted: float = 0.0
    witnesses: dict = field(default_factory=dict)
    z_values: dict = field(default_factory=dict)
    twisted_bundle: bool = False
    tol: float = CHECK_TOL

    def _bump(self, name, value, witness):
        if value > getattr(self, name):
            setattr(self, name, float(value))
            self.witnesses[name] = witness

    @property
    def passed(self) -> bool:
        cyc = self.twisted if self.twisted_bundle else self.triple
        return max(self.intertwining, self.inverse, cyc) <= self.tol

    def to_dict(self):
        return {
            "intertwining": self.intertwining,
            "inverse": self.inverse,
            "triple": self.triple,
            "twisted": self.twisted,
            "twisted_bundle": self.twisted_bundle,
            "passed": self.passed,
            "witnesses": self.witnesses,
        }


def check_cocycle(E: VectorialBundle, tol: float = CHECK_TOL) -> CocycleReport:
    """Maximum residuals of intertwining, inverse and triple identities below the gaps."""
    rep = CocycleReport(tol=tol, twisted_bundle=E.twist is not None)
    cover = E.cover
    for (a, b), per in E.transitions.items():
        ha_piece, hb_piece = E.pieces[a], E.pieces[b]
        mu = min(ha_piece.level, hb_piece.level)
        for x, phi in per.items():
            p = full(phi)
            ha, hb = ha_piece.h(x), hb_piece.h(x)
            rep._bump("intertwining", np.linalg.norm(p @ hb.full() - ha.full() @ p, 2) if p.size else 0.0,
                      {"charts": [a, b], "sample": x})
            back = full(E.transition(b, a, x))
            Q = _below_full(hb, mu)
            if Q.shape[1]:
                rep._bump("inverse", np.linalg.norm(back @ p @ Q - Q, 2), {"charts": [b, a, b], "sample": x})
    for a, b, c in itertools.combinations(sorted(cover.ids), 3):
        pts = cover.overlap(a, b, c)
        if not pts:
            continue
        mu = min(E.pieces[a].level, E.pieces[b].level, E.pieces[c].level)
        for x in pts:
            Q = _below_full(E.pieces[c].h(x), mu)
            if Q.shape[1] == 0:
                continue
            lhs = full(E.transition(a, b, x)) @ full(E.transition(b, c, x)) @ Q
            rhs = full(E.transition(a, c, x)) @ Q
            wit = {"charts": [a, b, c], "sample": x}
            rep._bump("triple", np.linalg.norm(lhs - rhs, 2), wit)
            if E.twist is not None:
                z = cocycle_scalar(E.twist, a, b, c, x)
                rep.z_values[(a, b, c, x)] = z
                rep._bump("twisted", np.linalg.norm(lhs - z * rhs, 2), wit)
    if E.twist is None:
        rep.twisted = rep.triple
    return rep


def support(E: VectorialBundle, tol: float = 1e-6) -> list:
    """Samples where some chart map has an eigenvalue of ``h^2`` below ``tol``."""
    out = []
    for x in E.cover.domain:
        for a in E.cover.charts_at(x):
            h = E.pieces[a].h(x)
            if h.dim == 0:
                continue
            if h.d0 != h.d1 or np.linalg.svd(h.B, compute_uv=False).min() ** 2 < tol:
                out.append(x)
                break
    return out


# ---------------------------------------------------------------------------
# Algebraic operations


def _same_cover(c1: OpenCover, c2: OpenCover) -> bool:
    same_space = c1.space is c2.space or (
        c1.space.n_points == c2.space.n_points and c1.space.edges == c2.space.edges
    )
    return same_space and dict(c1.charts) == dict(c2.charts) and c1.domain == c2.domain


def _twists_agree(E, F, tol=1e-9) -> bool:
    if E.twist is None and F.twist is None:
        return True
    if E.twist is None or F.twist is None or not _same_cover(E.cover, F.cover):
        return False
    for a, b, c in itertools.combinations(sorted(E.cover.ids), 3):
        for x in E.cover.overlap(a, b, c):
            if abs(cocycle_scalar(E.twist, a, b, c, x) - cocycle_scalar(F.twist, a, b, c, x)) > tol:
                return False
    return True


def direct_sum(E: VectorialBundle, F: VectorialBundle) -> VectorialBundle:
    """Blockwise sum over the common refinement of the two covers.

    Identical covers are kept as they are; otherwise chart ``a|b`` is the
    intersection of ``E``'s chart ``a`` and ``F``'s chart ``b``.
    """
    if not _twists_agree(E, F):
        raise TwistMismatch("direct sum of bundles with different twists")
    if E.space is not F.space and E.space.n_points != F.space.n_points:
        raise ShapeMismatch("bundles live on different sample spaces")
    if _same_cover(E.cover, F.cover):
        cover = E.cover
        origin = {a: (a, a) for a in cover.ids}
    else:
        raw, origin = {}, {}
        for a in E.cover.ids:
            for b in F.cover.ids:
                common = sorted(set(E.cover.members(a)) & set(F.cover.members(b)))
                if common:
                    raw[f"{a}|{b}"] = common
                    origin[f"{a}|{b}"] = (a, b)
        dom = sorted(set(E.cover.domain) & set(F.cover.domain))
        cover = build_cover(E.space, raw, dom)
    pieces = {}
    for c, (a, b) in origin.items():
        pa, pb = E.pieces[a], F.pieces[b]
        pieces[c] = Piece(
            pa.d0 + pb.d0,
            pa.d1 + pb.d1,
            min(pa.level, pb.level),
            {x: bdiag(pa.B[x], pb.B[x]) for x in cover.members(c)},
        )
    trans = {}
    for c, d in cover.pairs():
        (a, b), (a2, b2) = origin[c], origin[d]
        per = {}
        for x in cover.overlap(c, d):
            e0, e1 = E.transition(a, a2, x)
            f0, f1 = F.transition(b, b2, x)
            per[x] = (_bd(e0, f0), _bd(e1, f1))
        trans[(c, d)] = per
    return VectorialBundle(cover, pieces, trans, E.twist)


def _bd(p, q):
    return bdiag(p, q)


def reverse_grading(E: VectorialBundle) -> VectorialBundle:
    pieces = {
        a: Piece(p.d1, p.d0, p.level, {x: np.asarray(B).conj().T for x, B in p.B.items()}) for a, p in E.pieces.items()
    }
    trans = {k: {x: (phi[1], phi[0]) for x, phi in per.items()} for k, per in E.transitions.items()}
    return VectorialBundle(E.cover, pieces, trans, E.twist)


def zero_bundle(cover: OpenCover, level: float = 1.0) -> VectorialBundle:
    return trivial_bundle(cover, 0, 0, level=level)


def pullback(E: VectorialBundle, space: SampleSpace, point_map: Sequence[int]) -> VectorialBundle:
    """Pull back along a simplicial sample map ``y -> point_map[y]``."""
    point_map = [int(p) for p in point_map]
    dom_old = set(E.cover.domain)
    domain = [y for y, p in enumerate(point_map) if p in dom_old]
    raw = {}
    for a in E.cover.ids:
        pts = [y for y in domain if E.cover.contains(a, point_map[y])]
        if pts:
            raw[a] = pts
    cover = build_cover(space, raw, domain)
    pieces = {
        a: Piece(E.pieces[a].d0, E.pieces[a].d1, E.pieces[a].level, {y: E.pieces[a].B[point_map[y]] for y in raw[a]})
        for a in raw
    }
    trans = {(a, b): {y: E.transition(a, b, point_map[y]) for y in cover.overlap(a, b)} for a, b in cover.pairs()}
    twist = None
    if E.twist is not None:
        lifts = {}
        for a, b in cover.pairs():
            if a < b:
                lifts[(a, b)] = {y: E.twist.lift(a, b, point_map[y]) for y in cover.overlap(a, b)}
        twist = TwistCocycle(cover, E.twist.n, lifts, E.twist.tol)
    return VectorialBundle(cover, pieces, trans, twist)


# ---------------------------------------------------------------------------
# Products with a second factor


def _product(E: VectorialBundle, Y: SampleSpace, ymaps, charts=None, shifts=None, name=None):
    """``E (x) (C (+) C, k_y)`` over ``X x Y``.

    ``ymaps[y]`` is the odd map on the second factor at ``y``.  ``charts``
    optionally splits ``Y`` into named sub-charts with level ``shifts``.
    """
    X = E.space
    sp, idx = product_space(X, Y, name)
    ny = Y.n_points
    if charts is None:
        charts = {None: list(Y.points)}
        shifts = {None: 0.0}
    raw, origin = {}, {}
    for a in E.cover.ids:
        for j, ys in charts.items():
            cid = a if j is None else f"{a}|{j}"
            pts = [idx(x, y) for x in E.cover.members(a) for y in ys]
            if pts:
                raw[cid], origin[cid] = pts, (a, j)
    domain = [idx(x, y) for x in E.cover.domain for y in Y.points]
    cover = build_cover(sp, raw, domain)
    pieces = {}
    for cid, (a, j) in origin.items():
        p = E.pieces[a]
        blocks = {q: graded_tensor(p.h(q // ny), ymaps[q % ny]).B for q in raw[cid]}
        pieces[cid] = Piece(p.d0 + p.d1, p.d0 + p.d1, p.level + shifts[j], blocks)
    trans = {}
    one = (np.eye(1, dtype=complex), np.eye(1, dtype=complex))
    for c, d in cover.pairs():
        (a, _), (b, _) = origin[c], origin[d]
        trans[(c, d)] = {q: tensor_hom(E.transition(a, b, q // ny), one) for q in cover.overlap(c, d)}
    twist = None
    if E.twist is not None:
        lifts = {}
        for c, d in cover.pairs():
            if c < d:
                a, b = origin[c][0], origin[d][0]
                lifts[(c, d)] = {q: E.twist.lift(a, b, q // ny) for q in cover.overlap(c, d)}
        twist = TwistCocycle(cover, E.twist.n, lifts, E.twist.tol)
    return VectorialBundle(cover, pieces, trans, twist), idx


@dataclass(frozen=True, eq=False)
class HomotopyBundle:
    """Bundle over ``X x {t_0, ..., t_m}``; sample ``(x, i)`` has index ``x * (m + 1) + i``."""

    bundle: VectorialBundle
    base: SampleSpace
    times: np.ndarray

    def slice(self, i: int) -> VectorialBundle:
        nt = len(self.times)
        return pullback(self.bundle, self.base, [x * nt + i for x in self.base.points])

    def endpoints(self) -> tuple:
        return self.slice(0), self.slice(len(self.times) - 1)


def null_homotopy(E: VectorialBundle, n_t: int = 11) -> HomotopyBundle:
    """Homotopy from ``E (+) E^v`` (t = 0) to a bundle with empty support (t = 1).

    The map at time ``t`` is ``h (x) 1 + eps (x) eta_t`` with
    ``eta_t = [[0, t], [t, 0]]`` on ``C (+) C``.
    """
    T = interval(n_t, "time")
    times = T.coords[:, 0]
    etas = [OddHermitian(np.array([[t]], dtype=complex)) for t in times]
    bundle, _ = _product(E, T, etas, name=f"{E.space.name}xI")
    return HomotopyBundle(bundle, E.space, times)


def t0_identification(E: VectorialBundle) -> dict:
    """Per-chart graded permutation from the ``t = 0`` slice to ``E (+) E^v``."""
    psi = {}
    for a, p in E.pieces.items():
        n = p.d0 + p.d1
        P1 = np.zeros((n, n), dtype=complex)
        P1[: p.d1, p.d0 :] = np.eye(p.d1)
        P1[p.d1 :, : p.d0] = np.eye(p.d0)
        psi[a] = (np.eye(n, dtype=complex), P1)
    return psi


def bott(E: VectorialBundle, disk: SampleSpace, charts=None, shifts=None) -> VectorialBundle:
    """``E (x) (C (+) C, T_z)`` over ``X x D``; disk coordinates are ``(Re z, Im z)``.

    Product sample ``(x, d)`` has index ``x * |D| + d``.  With ``charts``
    (named disk point sets) and ``shifts`` the product charts are
    ``a|j`` with level ``level_a + shifts[j]``.
    """
    zs = disk.coords[:, 0] + 1j * disk.coords[:, 1]
    ymaps = [thom_block(z) for z in zs]
    bundle, _ = _product(E, disk, ymaps, charts, shifts, name=f"{E.space.name}xD")
    return bundle


# ---------------------------------------------------------------------------
# Isomorphisms and gluing


@dataclass
class IsoReport:
    intertwining: float = 0.0
    compatibility: float = 0.0
    unitarity: float = 0.0
    min_singular: float = np.inf
    rank_ok: bool = True
    witness: Optional[dict] = None
    tol: float = CHECK_TOL

    @property
    def residual(self) -> float:
        return max(self.intertwining, self.compatibility)

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol and self.rank_ok and self.min_singular > ISO_FLOOR

    def to_dict(self):
        return {
            "intertwining": self.intertwining,
            "compatibility": self.compatibility,
            "unitarity": self.unitarity,
            "min_singular": None if np.isinf(self.min_singular) else self.min_singular,
            "rank_ok": self.rank_ok,
            "residual": self.residual,
            "passed": self.passed,
            "witness": self.witness,
        }


def _psi_at(psi, a, x):
    entry = psi[a]
    return entry if isinstance(entry, tuple) else entry[x]


def _stack(mats, shape) -> np.ndarray:
    return np.array(mats, dtype=complex).reshape((len(mats),) + tuple(shape))


def _below_stack(M2: np.ndarray, mu: float) -> list:
    """Below-``mu`` eigenframes of a stack of Hermitian matrices."""
    if M2.shape[1] == 0:
        return [np.zeros((0, 0), dtype=complex)] * M2.shape[0]
    w, v = np.linalg.eigh(0.5 * (M2 + M2.conj().transpose(0, 2, 1)))
    return [v[i][:, w[i] < mu] for i in range(M2.shape[0])]


def _spec_norm(D: np.ndarray) -> np.ndarray:
    if D.size == 0:
        return np.zeros(D.shape[0])
    return np.linalg.norm(D, ord=2, axis=(1, 2))


def check_iso(E: VectorialBundle, F: VectorialBundle, psi: Mapping, tol: float = CHECK_TOL) -> IsoReport:
    """Verify a chartwise homomorphism ``psi[a][x] : E_a -> F_a`` is an isomorphism.

    ``psi[a]`` is either a constant graded pair or a per-sample dict.
    """
    rep = IsoReport(tol=tol)
    if set(E.cover.ids) != set(F.cover.ids):
        raise ShapeMismatch("isomorphism check needs the same chart ids on both sides")
    for a in E.cover.ids:
        pe, pf = E.pieces[a], F.pieces[a]
        mu = min(pe.level, pf.level)
        xs = list(E.cover.members(a))
        Be = _stack([pe.B[x] for x in xs], (pe.d1, pe.d0))
        Bf = _stack([pf.B[x] for x in xs], (pf.d1, pf.d0))
        P0 = _stack([_psi_at(psi, a, x)[0] for x in xs], (pf.d0, pe.d0))
        P1 = _stack([_psi_at(psi, a, x)[1] for x in xs], (pf.d1, pe.d1))
        H = lambda M: M.conj().transpose(0, 2, 1)  # noqa: E731
        r = np.maximum(_spec_norm(P0 @ H(Be) - H(Bf) @ P1), _spec_norm(P1 @ Be - Bf @ P0))
        j = int(np.argmax(r))
        if r[j] > rep.intertwining:
            rep.intertwining, rep.witness = float(r[j]), {"check": "intertwining", "chart": a, "sample": xs[j]}
        frames = [
            (_below_stack(H(Be) @ Be, mu), _below_stack(H(Bf) @ Bf, mu), P0),
            (_below_stack(Be @ H(Be), mu), _below_stack(Bf @ H(Bf), mu), P1),
        ]
        for Qe_all, Qf_all, P in frames:
            for k, x in enumerate(xs):
                Qe, Qf = Qe_all[k], Qf_all[k]
                if Qe.shape[1] != Qf.shape[1]:
                    rep.rank_ok = False
                    rep.witness = {"check": "rank", "chart": a, "sample": x}
                    continue
                if Qe.shape[1] == 0:
                    continue
                s = np.linalg.svd(Qf.conj().T @ P[k] @ Qe, compute_uv=False)
                rep.min_singular = min(rep.min_singular, float(s.min()))
                rep.unitarity = max(rep.unitarity, float(np.max(np.abs(s - 1))))
    for a, b in E.cover.pairs():
        mu = min(E.pieces[a].level, E.pieces[b].level, F.pieces[a].level, F.pieces[b].level)
        for x in E.cover.overlap(a, b):
            Q = _below_full(E.pieces[b].h(x), mu)
            if Q.shape[1] == 0:
                continue
            lhs = full(_psi_at(psi, a, x)) @ full(E.transition(a, b, x))
            rhs = full(F.transition(a, b, x)) @ full(_psi_at(psi, b, x))
            r = float(np.linalg.norm((lhs - rhs) @ Q, 2))
            if r > rep.compatibility:
                rep.compatibility, rep.witness = r, {"check": "compatibility", "charts": [a, b], "sample": x}
    return rep


def _below_inverse(p: tuple, he: OddHermitian, hf: OddHermitian, mu: float, where) -> tuple:
    out = []
    for i, (Qe, Qf) in enumerate(zip(below_frames(he, mu), below_frames(hf, mu))):
        if Qe.shape[1] != Qf.shape[1]:
            raise NotIso(f"graded rank mismatch below the gap at {where}", witness=where)
        dim_e = he.d0 if i == 0 else he.d1
        dim_f = hf.d0 if i == 0 else hf.d1
        if Qe.shape[1] == 0:
            out.append(np.zeros((dim_e, dim_f), dtype=complex))
            continue
        M = Qf.conj().T @ p[i] @ Qe
        if np.linalg.svd(M, compute_uv=False).min() < ISO_FLOOR:
            raise NotIso(f"map drops rank below the gap at {where}", witness=where)
        out.append(Qe @ np.linalg.solve(M, Qf.conj().T))
    return tuple(out)


def mayer_vietoris(E: VectorialBundle, F: VectorialBundle, psi: Mapping, tol: float = CHECK_TOL) -> VectorialBundle:
    """Glue ``E`` (on ``U``) and ``F`` (on ``V``) along ``psi`` over ``U n V``.

    ``psi[(a, b)][x]`` maps ``E``'s chart ``a`` fibre to ``F``'s chart ``b``
    fibre for every sample of ``U_a n V_b``.  The glued bundle has charts
    ``U:a`` and ``V:b``; the reverse transitions are the below-gap inverses.
    """
    if E.twist is not None or F.twist is not None:
        raise InputError("gluing is implemented for untwisted bundles")
    space = E.space
    raw = {f"U:{a}": E.cover.members(a) for a in E.cover.ids}
    raw.update({f"V:{b}": F.cover.members(b) for b in F.cover.ids})
    domain = sorted(set(E.cover.domain) | set(F.cover.domain))
    cover = build_cover(space, raw, domain)
    pieces = {f"U:{a}": p for a, p in E.pieces.items()}
    pieces.update({f"V:{b}": p for b, p in F.pieces.items()})
    trans = {}
    for (a, a2), per in E.transitions.items():
        trans[(f"U:{a}", f"U:{a2}")] = dict(per)
    for (b, b2), per in F.transitions.items():
        trans[(f"V:{b}", f"V:{b2}")] = dict(per)
    for a in E.cover.ids:
        for b in F.cover.ids:
            pts = sorted(set(E.cover.members(a)) & set(F.cover.members(b)))
            if not pts:
                continue
            if (a, b) not in psi:
                raise InputError(f"no gluing map for charts {a!r}, {b!r}", witness=[a, b])
            mu = min(E.pieces[a].level, F.pieces[b].level)
            fwd, back = {}, {}
            for x in pts:
                p = tuple(np.asarray(m, dtype=complex) for m in psi[(a, b)][x])
                he, hf = E.pieces[a].h(x), F.pieces[b].h(x)
                P = full(p)
                r = np.linalg.norm(P @ he.full() - hf.full() @ P, 2) if P.size else 0.0
                if r > tol:
                    raise NotIso(f"gluing map fails to intertwine at sample {x} ({r:.3g})", witness=[a, b, x])
                fwd[x] = p
                back[x] = _below_inverse(p, he, hf, mu, [a, b, x])
            trans[(f"V:{b}", f"U:{a}")] = fwd
            trans[(f"U:{a}", f"V:{b}")] = back
    return VectorialBundle(cover, pieces, trans)


def collar(space: SampleSpace, U: Sequence[int]) -> list:
    """Samples outside ``U`` adjacent to ``U``."""
    Us = set(U)
    out = set()
    for i, j in space.edges:
        if i in Us and j not in Us:
            out.add(j)
        elif j in Us and i not in Us:
            out.add(i)
    return sorted(out)


def extend_by_trivial(E: VectorialBundle, U: Sequence[int], tol: float = 1e-6) -> VectorialBundle:
    """Extend ``E`` (living on ``X - U``) by the rank-zero object over ``U``.

    The collar (samples of ``X - U`` adjacent to ``U``) must avoid the
    support of ``E``.
    """
    space = E.space
    Us = sorted(set(int(u) for u in U))
    if set(Us) & set(E.cover.domain):
        raise InputError("U must be disjoint from the bundle's domain")
    if set(Us) | set(E.cover.domain) != set(space.points):
        raise InputError("bundle domain and U must cover the space")
    ring = collar(space, Us)
    supp = set(support(E, tol))
    hits = [x for x in ring if x in supp]
    if hits:
        raise SupportTouchesBoundary(f"support meets the collar at sample {hits[0]}", witness=hits[0])
    lowest = np.inf
    for x in ring:
        for a in E.cover.charts_at(x):
            h = E.pieces[a].h(x)
            if h.dim:
                lowest = min(lowest, float(np.linalg.svd(h.B, compute_uv=False).min() ** 2))
    level = 1.0 if np.isinf(lowest) else 0.5 * lowest
    triv_cover = build_cover(space, {"0": Us + ring}, Us + ring)
    O = zero_bundle(triv_cover, level)
    psi = {}
    for a in E.cover.ids:
        pts = [x for x in ring if E.cover.contains(a, x)]
        if pts:
            p = E.pieces[a]
            psi[(a, "0")] = {x: (np.zeros((0, p.d0), dtype=complex), np.zeros((0, p.d1), dtype=complex)) for x in pts}
    return mayer_vietoris(E, O, psi)
