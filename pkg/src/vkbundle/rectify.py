"""From a vectorial bundle to an honest graded vector bundle with an odd Hermitian map.

At each sample the stalk ``E_x`` is the below-``lambda`` eigenspace of an
anchor chart.  The ambient spaces are ``A0 = E0_x (+) W`` and
``A1 = E1_x (+) W`` with ``W`` the sum of the odd pieces of all charts;
``F^i`` is the kernel of a surjection ``g^i : A^i -> E1_x``.  ``A0`` carries
the weighted metric ``|v0|^2 + |w|^2 / lambda``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from ._parallel import pmap
from .errors import (
    BadParameters,
    GapViolation,
    IdentificationFailure,
    NoGlobalGap,
    NotEquivalence,
    PartitionMismatch,
    SurjectivityFailure,
)
from .spectral import OddHermitian, functional_calculus
from .vectorial import VectorialBundle, bdiag, below_frames, full

GAP_FLOOR = 1e-6
ISO_FLOOR = 1e-6
CONTAIN_TOL = 1e-8
SURJ_FLOOR = 1e-6
KERNEL_RTOL = 1e-8
WEIGHT_TOL = 1e-9


# ---------------------------------------------------------------------------
# Global gap


def _eigs(h: OddHermitian) -> np.ndarray:
    return np.linalg.svd(h.B, compute_uv=False) ** 2 if h.B.size else np.zeros(0)


def _compression(E: VectorialBundle, a: str, b: str, x: int, lam: float):
    """Below-``lam`` compression of ``phi_ab(x)``; returns (min singular, max |s - 1|, containment) or None."""
    ha, hb = E.pieces[a].h(x), E.pieces[b].h(x)
    Qa, Qb = below_frames(ha, lam), below_frames(hb, lam)
    phi = E.transition(a, b, x)
    smin, dev, leak = np.inf, 0.0, 0.0
    for i in range(2):
        if Qa[i].shape[1] != Qb[i].shape[1]:
            return None
        if Qb[i].shape[1] == 0:
            continue
        img = np.asarray(phi[i]) @ Qb[i]
        M = Qa[i].conj().T @ img
        s = np.linalg.svd(M, compute_uv=False)
        smin = min(smin, float(s.min()))
        dev = max(dev, float(np.max(np.abs(s - 1))))
        leak = max(leak, float(np.linalg.norm(img - Qa[i] @ M, 2)))
    return smin, dev, leak


@dataclass
class GlobalGap:
    lam: float
    unitarity: float
    min_singular: float
    shrinks: int

    def __float__(self):
        return self.lam


def global_gap_report(E: VectorialBundle, floor: float = GAP_FLOOR) -> GlobalGap:
    """Largest level (at most the smallest chart level) below which all transitions are isomorphisms."""
    lam = min(p.level for p in E.pieces.values())
    pooled = {}
    for a in E.cover.ids:
        for x in E.cover.members(a):
            pooled.setdefault(x, []).extend(_eigs(E.pieces[a].h(x)))
    allvals = np.unique(np.concatenate([np.asarray(v, float) for v in pooled.values()] + [np.zeros(1)]))

    def below(level):
        lower = allvals[allvals < level - 1e-12]
        return float(lower.max()) if lower.size else 0.0

    if np.min(np.abs(allvals - lam)) <= 1e-12:
        lam = 0.5 * (below(lam) + lam)
    shrinks = 0
    while True:
        if lam < floor:
            raise NoGlobalGap(f"no level above {floor:g} makes every transition an isomorphism", witness={"lambda": lam})
        bad, dev, smin = None, 0.0, np.inf
        for a, b in E.cover.pairs():
            for x in E.cover.overlap(a, b):
                r = _compression(E, a, b, x, lam)
                if r is None or r[0] < ISO_FLOOR or r[2] > CONTAIN_TOL:
                    bad = x
                    break
                smin, dev = min(smin, r[0]), max(dev, r[1])
            if bad is not None:
                break
        if bad is None:
            return GlobalGap(float(lam), dev, smin, shrinks)
        top = max([v for v in pooled[bad] if v < lam], default=below(lam))
        lam = 0.5 * (below(top) + top) if top > 0 else 0.0
        shrinks += 1


def global_gap(E: VectorialBundle, floor: float = GAP_FLOOR) -> float:
    return global_gap_report(E, floor).lam


# ---------------------------------------------------------------------------
# Partition functions


def partition_rho(lam: float, mu0: Optional[float] = None) -> tuple:
    """``(rho0, rhoinf)`` with ``rho0^2 + rhoinf^2 = 1``, ``rho0 = 1`` on ``[0, mu0]``, ``0`` on ``[lam, inf)``."""
    mu0 = 0.5 * lam if mu0 is None else mu0
    if not 0 < mu0 < lam:
        raise BadParameters(f"need 0 < mu0 < lambda, got mu0={mu0}, lambda={lam}")

    def theta(r):
        return 0.5 * np.pi * np.clip((np.asarray(r, float) - mu0) / (lam - mu0), 0.0, 1.0)

    return (lambda r: np.cos(theta(r))), (lambda r: np.sin(theta(r)))


def chart_weights(E: VectorialBundle) -> dict:
    """Normalized graph distance to the complement of each chart within the domain."""
    cover, space = E.cover, E.space
    dom = set(cover.domain)
    raw = {}
    for a in cover.ids:
        outside = sorted(dom - set(cover.members(a)))
        d = space.distance_to(outside) if outside else np.full(space.n_points, np.inf)
        w = np.zeros(space.n_points)
        mem = list(cover.members(a))
        w[mem] = d[mem]
        raw[a] = w
    finite = [w[np.isfinite(w)].max(initial=0.0) for w in raw.values()]
    cap = 1.0 + max(finite, default=0.0)
    for w in raw.values():
        w[np.isinf(w)] = cap
    total = sum(raw.values())
    return {a: np.divide(w, total, out=np.zeros_like(w), where=total > 0) for a, w in raw.items()}


def _check_weights(E: VectorialBundle, weights: Mapping) -> dict:
    cover = E.cover
    out = {}
    for a in cover.ids:
        w = weights.get(a)
        if w is None:
            raise PartitionMismatch(f"no weight for chart {a!r}", witness={"chart": a})
        if isinstance(w, Mapping):
            arr = np.zeros(E.space.n_points)
            for x, v in w.items():
                arr[int(x)] = v
            w = arr
        out[a] = np.asarray(w, dtype=float)
        if np.any(out[a] < -WEIGHT_TOL):
            raise PartitionMismatch(f"negative weight on chart {a!r}", witness={"chart": a})
        outside = [x for x in cover.domain if not cover.contains(a, x)]
        if outside and np.max(np.abs(out[a][outside])) > WEIGHT_TOL:
            raise PartitionMismatch(f"weight of chart {a!r} is not supported in the chart", witness={"chart": a})
    for x in cover.domain:
        s = sum(out[a][x] for a in cover.ids)
        if abs(s - 1) > WEIGHT_TOL:
            raise PartitionMismatch(f"weights sum to {s:.6g} at sample {x}", witness={"sample": x, "sum": s})
    return out


# ---------------------------------------------------------------------------
# Stalks


@dataclass
class Stalk:
    sample: int
    anchor: str
    Q0: np.ndarray
    Q1: np.ndarray
    B: np.ndarray
    residual: float = 0.0

    @property
    def h(self) -> OddHermitian:
        return OddHermitian(self.B, d0=self.Q0.shape[1], d1=self.Q1.shape[1])


def stalk(E: VectorialBundle, x: int, lam: float) -> Stalk:
    """Below-``lam`` eigenspace of the lowest chart at ``x``, with anchor-independence residual."""
    charts = sorted(E.cover.charts_at(x))
    a = charts[0]
    pa = E.pieces[a]
    Q0, Q1 = below_frames(pa.h(x), lam)
    B = Q1.conj().T @ pa.B[x] @ Q0
    res = 0.0
    for b in charts[1:]:
        pb = E.pieces[b]
        P0, P1 = below_frames(pb.h(x), lam)
        if (P0.shape[1], P1.shape[1]) != (Q0.shape[1], Q1.shape[1]):
            raise GapViolation(
                f"sample {x}: charts {a!r} and {b!r} disagree on the rank below {lam:g}",
                witness={"sample": x, "lambda": lam, "mu": lam},
            )
        phi = E.transition(b, a, x)
        M0 = P0.conj().T @ np.asarray(phi[0]) @ Q0
        M1 = P1.conj().T @ np.asarray(phi[1]) @ Q1
        Bb = P1.conj().T @ pb.B[x] @ P0
        if M1.size and B.size:
            res = max(res, float(np.linalg.norm(M1 @ B - Bb @ M0, 2)))
    return Stalk(x, a, Q0, Q1, B, res)


# ---------------------------------------------------------------------------
# Rectification


@dataclass
class RectifiedBundle:
    """Frames of ``F^i`` inside the ambient spaces, sample by sample.

    ``K0[x]`` is orthonormal for the weighted metric on ``A0``; ``K1[x]`` is
    orthonormal.  ``M[x]`` is the odd block of ``h`` in these frames.
    """

    source: VectorialBundle
    lam: float
    mu0: float
    weights: dict
    stalks: dict
    K0: dict
    K1: dict
    M: dict
    transitions: dict = field(default_factory=dict)
    wdim: int = 0
    surjectivity: float = np.inf

    @property
    def space(self):
        return self.source.space

    @property
    def domain(self) -> list:
        return sorted(self.M)

    def h(self, x: int) -> OddHermitian:
        K0, K1 = self.K0[x], self.K1[x]
        return OddHermitian(self.M[x], d0=K0.shape[1], d1=K1.shape[1])

    def rank(self, x: int) -> tuple:
        return self.K0[x].shape[1], self.K1[x].shape[1]

    def metric0(self, x: int) -> np.ndarray:
        e0 = self.stalks[x].Q0.shape[1]
        return np.diag(np.r_[np.ones(e0), np.full(self.wdim, 1.0 / self.lam)])

    def h10_ambient(self, x: int) -> np.ndarray:
        return bdiag(self.stalks[x].B, np.eye(self.wdim))

    def h01_ambient(self, x: int) -> np.ndarray:
        """``diag(B_E^H, lam)``: the weighted adjoint of ``h10`` on the whole ambient space."""
        return bdiag(self.stalks[x].B.conj().T, self.lam * np.eye(self.wdim))

    def components(self) -> list:
        return self.space.components(self.domain)

    def ranks_by_component(self) -> list:
        return [sorted({self.rank(x) for x in comp}) for comp in self.components()]

    def index(self) -> list:
        out = []
        for comp in self.components():
            r0, r1 = self.rank(comp[0])
            out.append(r0 - r1)
        return out


def _kernel(G: np.ndarray, rows: int, x: int, i: int) -> tuple:
    n = G.shape[1]
    if rows == 0:
        return np.eye(n, dtype=complex), np.inf
    U, s, Vh = np.linalg.svd(G)
    if s.min() <= SURJ_FLOOR:
        raise SurjectivityFailure(
            f"g{i} at sample {x} is not surjective (min singular value {s.min():.3g})",
            witness={"sample": x, "i": i, "sigma_min": float(s.min())},
        )
    rank = int(np.sum(s > KERNEL_RTOL * s.max()))
    return Vh[rank:].conj().T, float(s.min())


def _orthonormalize(K: np.ndarray, Wm: np.ndarray) -> np.ndarray:
    if K.shape[1] == 0:
        return K
    G = K.conj().T @ Wm @ K
    w, v = np.linalg.eigh(0.5 * (G + G.conj().T))
    return K @ (v / np.sqrt(w)) @ v.conj().T


def _sample(E, x, lam, rho0, rhoinf, weights, wslots):
    st = stalk(E, x, lam)
    e0, e1 = st.Q0.shape[1], st.Q1.shape[1]
    wdim = wslots[-1][1] if wslots else 0
    g = np.zeros((e1, wdim), dtype=complex)
    for a, (lo, hi) in zip(E.cover.ids, wslots):
        if not E.cover.contains(a, x) or weights[a][x] == 0 or e1 == 0:
            continue
        pa = E.pieces[a]
        phi1 = np.asarray(E.transition(st.anchor, a, x)[1])
        r2 = functional_calculus(pa.B[x] @ pa.B[x].conj().T, lambda r: rho0(r) ** 2)
        g[:, lo:hi] = weights[a][x] * (st.Q1.conj().T @ phi1 @ r2)
    BB = st.B @ st.B.conj().T
    rinf = functional_calculus(BB, rhoinf)
    g0 = np.hstack([rinf @ st.B, g])
    g1 = np.hstack([rinf, g])
    K0, s0 = _kernel(g0, e1, x, 0)
    K1, s1 = _kernel(g1, e1, x, 1)
    W0 = np.diag(np.r_[np.ones(e0), np.full(wdim, 1.0 / lam)])
    K0 = _orthonormalize(K0, W0)
    K1 = _orthonormalize(K1, np.eye(e1 + wdim))
    H10 = bdiag(st.B, np.eye(wdim))
    M = K1.conj().T @ H10 @ K0
    return st, K0, K1, M, min(s0, s1)


def _common_chart(cover, x, y):
    both = sorted(set(cover.charts_at(x)) & set(cover.charts_at(y)))
    return both[0] if both else None


def _to_chart(E, st: Stalk, a: str, K: np.ndarray, i: int) -> np.ndarray:
    Q = st.Q0 if i == 0 else st.Q1
    tau = np.asarray(E.transition(a, st.anchor, st.sample)[i]) @ Q
    e = Q.shape[1]
    return np.vstack([tau @ K[:e], K[e:]])


def rectify(
    E: VectorialBundle,
    weights: Optional[Mapping] = None,
    lam: Optional[float] = None,
    mu0: Optional[float] = None,
) -> RectifiedBundle:
    """Kernel bundles ``F^i = ker g^i`` with the induced odd map."""
    lam = global_gap(E) if lam is None else float(lam)
    mu0 = 0.5 * lam if mu0 is None else float(mu0)
    rho0, rhoinf = partition_rho(lam, mu0)
    weights = chart_weights(E) if weights is None else _check_weights(E, weights)
    wslots, pos = [], 0
    for a in E.cover.ids:
        d1 = E.pieces[a].d1
        wslots.append((pos, pos + d1))
        pos += d1
    dom = sorted(E.cover.domain)
    results = pmap(lambda x: _sample(E, x, lam, rho0, rhoinf, weights, wslots), dom)
    R = RectifiedBundle(E, lam, mu0, weights, {}, {}, {}, {}, wdim=pos)
    for x, (st, K0, K1, M, s) in zip(dom, results):
        R.stalks[x], R.K0[x], R.K1[x], R.M[x] = st, K0, K1, M
        R.surjectivity = min(R.surjectivity, s)
    domset = set(dom)
    for x, y in E.space.edges:
        if x not in domset or y not in domset:
            continue
        a = _common_chart(E.cover, x, y)
        if a is None:
            continue
        pair = []
        for i, K in ((0, R.K0), (1, R.K1)):
            Kx = _to_chart(E, R.stalks[x], a, K[x], i)
            Ky = _to_chart(E, R.stalks[y], a, K[y], i)
            if Kx.shape[1] == 0 or Ky.shape[1] == 0:
                pair.append(np.zeros((Kx.shape[1], Ky.shape[1]), dtype=complex))
            else:
                pair.append(np.linalg.lstsq(Kx, Ky, rcond=None)[0])
        R.transitions[(x, y)] = tuple(pair)
    return R


# ---------------------------------------------------------------------------
# Identification with the stalks


@dataclass
class IdentificationReport:
    residual: float
    mu: dict
    witness: Optional[int] = None

    def to_dict(self):
        return {"residual": self.residual, "witness": self.witness}


def _margin_level(vals: np.ndarray, mu0: float) -> float:
    """Level in ``[mu0 / 2, mu0]`` farthest from every eigenvalue."""
    grid = np.linspace(0.5 * mu0, mu0, 65)
    if vals.size == 0:
        return mu0
    dist = np.min(np.abs(grid[:, None] - vals[None, :]), axis=1)
    return float(grid[int(np.argmax(dist))])


def identification_check(R: RectifiedBundle, mu0: Optional[float] = None, tol: float = 1e-8) -> IdentificationReport:
    """Below-``mu0`` eigenspaces of ``F`` project isometrically onto those of the stalk.

    Raises IdentificationFailure naming the first sample where dimensions,
    eigenvalues or the projection disagree, or where ``F`` has spurious
    eigenvalues below the level.
    """
    mu0 = R.mu0 if mu0 is None else mu0
    worst, where, levels = 0.0, None, {}
    for x in R.domain:
        st, M = R.stalks[x], R.M[x]
        hE = st.h
        pairs = [
            (M.conj().T @ M, hE.B.conj().T @ hE.B, R.K0[x], st.Q0.shape[1]),
            (M @ M.conj().T, hE.B @ hE.B.conj().T, R.K1[x], st.Q1.shape[1]),
        ]
        vals = np.concatenate([np.linalg.eigvalsh(m) for F2, E2, _, _ in pairs for m in (F2, E2) if m.size] + [[]])
        mu = _margin_level(vals, mu0)
        levels[x] = mu
        for i, (F2, E2, K, e) in enumerate(pairs):
            wf, vf = np.linalg.eigh(F2) if F2.size else (np.zeros(0), np.zeros((0, 0)))
            we, ve = np.linalg.eigh(E2) if E2.size else (np.zeros(0), np.zeros((0, 0)))
            lf, le = wf[wf < mu], we[we < mu]
            if lf.size != le.size:
                raise IdentificationFailure(
                    f"sample {x}: {lf.size} eigenvalues of F below {mu:.4g} on part {i}, stalk has {le.size}",
                    witness={"sample": x, "part": i},
                )
            if lf.size == 0:
                continue
            P = (K @ vf[:, wf < mu])[:e]
            Qe = ve[:, we < mu]
            C = Qe.conj().T @ P
            s = np.linalg.svd(C, compute_uv=False)
            r = max(
                float(np.max(np.abs(lf - le))),
                float(np.linalg.norm(P - Qe @ C, 2)),
                float(np.max(np.abs(s - 1))),
            )
            if r > worst:
                worst, where = r, x
    if worst > tol:
        raise IdentificationFailure(f"identification residual {worst:.3g} at sample {where}", witness={"sample": where})
    return IdentificationReport(worst, levels, where)


# ---------------------------------------------------------------------------
# Isomorphism witness


@dataclass
class IsoWitness:
    htilde: np.ndarray
    residual: float
    degree_ok: bool
    intertwining: float

    def to_dict(self):
        return {"residual": self.residual, "degree_ok": self.degree_ok, "intertwining": self.intertwining}


def _sign_rho(h: OddHermitian, rhoinf) -> np.ndarray:
    """``sgn(h) rhoinf(h^2)``; zero wherever ``rhoinf`` vanishes, with no division."""
    if h.dim == 0:
        return np.zeros((0, 0), dtype=complex)
    H = h.full()
    w, v = np.linalg.eigh(0.5 * (H + H.conj().T))
    f = np.sign(w) * rhoinf(w**2)
    return (v * f) @ v.conj().T


def iso_witness(h0: OddHermitian, h1: OddHermitian, g: tuple, lam: float, mu0: Optional[float] = None) -> IsoWitness:
    """The odd map on ``F0 (+) F1`` whose square is the identity when ``g`` is an equivalence.

    ``g = (g0, g1)`` maps ``F0`` to ``F1`` gradewise, intertwines ``h0`` and
    ``h1`` and is invertible below ``lam``.
    """
    rho0, rhoinf = partition_rho(lam, mu0)
    G = full(g)
    H0, H1 = h0.full(), h1.full()
    inter = float(np.linalg.norm(G @ H0 - H1 @ G, 2)) if G.size else 0.0
    if inter > 1e-8:
        raise NotEquivalence(f"g does not intertwine (residual {inter:.3g})", witness={"intertwining": inter})
    Q0, Q1 = full(below_frames(h0, lam)), full(below_frames(h1, lam))
    if Q0.shape[1] != Q1.shape[1]:
        raise NotEquivalence("below-gap dimensions differ", witness={"dims": [Q0.shape[1], Q1.shape[1]]})
    Gc = Q1.conj().T @ G @ Q0
    if Gc.size and np.linalg.svd(Gc, compute_uv=False).min() < 1e-8:
        raise NotEquivalence("g is not invertible below the gap")
    Ginv = Q0 @ np.linalg.inv(Gc) @ Q1.conj().T if Gc.size else np.zeros((H0.shape[0], H1.shape[0]), dtype=complex)
    r0 = functional_calculus(h0.square(), rho0)
    r1 = functional_calculus(h1.square(), rho0)
    S0, S1 = _sign_rho(h0, rhoinf), _sign_rho(h1, rhoinf)
    Ht = np.block([[S0, Ginv @ r1], [G @ r0, -S1]])
    n = Ht.shape[0]
    res = float(np.linalg.norm(Ht @ Ht - np.eye(n), 2)) if n else 0.0
    n0 = h0.dim
    even = list(range(h0.d0)) + [n0 + h1.d0 + j for j in range(h1.d1)]
    odd = [h0.d0 + j for j in range(h0.d1)] + [n0 + j for j in range(h1.d0)]
    deg = bool(
        np.allclose(Ht[np.ix_(even, even)], 0, atol=1e-12) and np.allclose(Ht[np.ix_(odd, odd)], 0, atol=1e-12)
    )
    return IsoWitness(Ht, res, deg, inter)
