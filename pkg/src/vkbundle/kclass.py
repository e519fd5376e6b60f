"""Integer invariants: index per component, Chern number over a sampled sphere, homotopy endpoints.

Sign convention: the grading operator is ``+1`` on even vectors and the
clutching function is read from the inner chart (containing ``z = 0``) to
the outer one, so the Thom class ``[[0, conj z], [z, 0]]`` has Chern number
``+1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ._parallel import pmap
from .base import interval, product_space
from .errors import InputError, NotLineReducible, WindingAmbiguous
from .rectify import RectifiedBundle, rectify
from .vectorial import HomotopyBundle, VectorialBundle, check_cocycle, pullback, support

ROUND_TOL = 0.1
JUMP_GUARD = np.pi - 1e-9
DET_FLOOR = 1e-10


def index(E: Union[VectorialBundle, RectifiedBundle]) -> list:
    """``rank F0 - rank F1`` for each connected component of the domain."""
    R = E if isinstance(E, RectifiedBundle) else rectify(E)
    return R.index()


# ---------------------------------------------------------------------------
# Chern number


@dataclass
class ChernReport:
    chern: int
    raw: float
    residual: float
    rings: list = field(default_factory=list)

    def to_dict(self):
        return {"chern": self.chern, "raw": self.raw, "residual": self.residual, "rings": self.rings}


def _radius(space) -> np.ndarray:
    c = space.coords
    r = np.hypot(c[:, 0], c[:, 1])
    if c.shape[1] > 2:
        pole = c[:, 2] > 0.5
        r[pole] = (r[~pole].max() if np.any(~pole) else 0.0) + 1.0
    return r


def _ring(overlap, r, ndigits=9) -> list:
    """Samples of the overlap on its most populated circle, ordered by angle."""
    groups = {}
    for x in overlap:
        groups.setdefault(round(float(r[x]), ndigits), []).append(x)
    best = max(groups.items(), key=lambda kv: (len(kv[1]), -kv[0]))[1]
    if len(best) < 3:
        raise NotLineReducible("chart overlap does not contain a sampled circle", witness={"samples": best})
    return best


def _split(B: np.ndarray, d0: int, d1: int, mu: float):
    """Low and high frames of ``B^H B`` and ``B B^H`` around ``mu``."""
    out = []
    for M2, d in ((B.conj().T @ B, d0), (B @ B.conj().T, d1)):
        if d == 0:
            out.append((np.zeros((0, 0), dtype=complex), np.zeros((0, 0), dtype=complex)))
            continue
        w, v = np.linalg.eigh(0.5 * (M2 + M2.conj().T))
        out.append((v[:, w < mu], v[:, w >= mu]))
    return out


def _det(M: np.ndarray) -> complex:
    return complex(np.linalg.det(M)) if M.size else 1.0 + 0j


def _chart_factor(B, d0, d1, frames) -> complex:
    (L0, H0), (L1, H1) = frames
    if H0.shape[1] != H1.shape[1]:
        raise NotLineReducible("high eigenspaces of a chart are not paired")
    core = _det(H1.conj().T @ B @ H0) if H0.size else 1.0 + 0j
    u1 = _det(np.hstack([L1, H1])) if d1 else 1.0 + 0j
    u0 = _det(np.hstack([L0, H0])) if d0 else 1.0 + 0j
    return core * u1 / u0


def _ring_level(E, a, b, ring) -> float:
    top = min(E.pieces[a].level, E.pieces[b].level)
    vals = []
    for x in ring:
        for c in (a, b):
            B = E.pieces[c].B[x]
            if B.size:
                vals.extend(np.linalg.svd(B, compute_uv=False) ** 2)
    walls = np.unique(np.r_[0.0, top, [v for v in vals if 0 < v < top]])
    j = int(np.argmax(np.diff(walls)))
    return float(0.5 * (walls[j] + walls[j + 1]))


def clutching(E: VectorialBundle, inner: str, outer: str, ring: list, mu: Optional[float] = None) -> np.ndarray:
    """Gauge-invariant determinant of the below-gap clutching data along ``ring``."""
    mu = _ring_level(E, inner, outer, ring) if mu is None else mu
    pi, po = E.pieces[inner], E.pieces[outer]
    vals = []
    for x in ring:
        fi = _split(pi.B[x], pi.d0, pi.d1, mu)
        fo = _split(po.B[x], po.d0, po.d1, mu)
        phi = E.transition(outer, inner, x)
        low = []
        for i in range(2):
            Li, Lo = fi[i][0], fo[i][0]
            if Li.shape[1] != Lo.shape[1]:
                raise NotLineReducible(
                    f"sample {x}: low ranks {Li.shape[1]} and {Lo.shape[1]} differ on part {i}", witness={"sample": x}
                )
            low.append(_det(Lo.conj().T @ np.asarray(phi[i]) @ Li) if Li.size else 1.0 + 0j)
        c = low[0] / low[1] if abs(low[1]) > DET_FLOOR else np.nan
        c *= _chart_factor(pi.B[x], pi.d0, pi.d1, fi) / _chart_factor(po.B[x], po.d0, po.d1, fo)
        if not np.isfinite(c) or abs(c) < DET_FLOOR:
            raise NotLineReducible(f"sample {x}: clutching determinant vanishes", witness={"sample": x})
        vals.append(c)
    return np.array(vals)


def loop_winding(values: np.ndarray) -> tuple:
    """Discrete winding number of a closed loop of nonzero complex values and its rounding residual."""
    v = np.asarray(values, dtype=complex)
    steps = np.angle(np.roll(v, -1) / v)
    k = int(np.argmax(np.abs(steps)))
    if abs(steps[k]) >= JUMP_GUARD:
        raise WindingAmbiguous(f"phase jump {steps[k]:.3f} along the ring", witness={"position": k})
    raw = float(steps.sum() / (2 * np.pi))
    return raw, abs(raw - round(raw))


def chern_number(E: VectorialBundle) -> ChernReport:
    """Sum of clutching windings over the overlaps of radially nested charts.

    Charts are ordered by mean radius (the pole counts as the farthest
    sample); the overlap graph must be a path.
    """
    r = _radius(E.space)
    order = sorted(E.cover.ids, key=lambda a: float(np.mean(r[list(E.cover.members(a))])))
    pairs = sorted({tuple(sorted(p, key=order.index)) for p in E.cover.pairs()}, key=lambda p: order.index(p[0]))
    degree = {a: 0 for a in order}
    for a, b in pairs:
        degree[a] += 1
        degree[b] += 1
    if len(pairs) != len(order) - 1 or max(degree.values(), default=0) > 2:
        raise InputError("charts must form a radially nested chain", witness={"pairs": [list(p) for p in pairs]})
    total, rings = 0.0, []
    for a, b in pairs:
        ring = _ring(E.cover.overlap(a, b), r)
        theta = np.arctan2(E.space.coords[ring, 1], E.space.coords[ring, 0])
        ring = [ring[i] for i in np.argsort(theta)]
        raw, _ = loop_winding(clutching(E, a, b, ring))
        total += raw
        rings.append({"inner": a, "outer": b, "samples": len(ring), "winding": raw})
    res = abs(total - round(total))
    if res >= ROUND_TOL:
        raise WindingAmbiguous(f"winding {total:.4f} is not close to an integer", witness={"raw": total})
    return ChernReport(int(round(total)), total, res, rings)


# ---------------------------------------------------------------------------
# Homotopies


@dataclass
class HomotopyReport:
    start: VectorialBundle
    end: VectorialBundle
    slices_pass: list
    support_sizes: list
    times: list

    @property
    def passed(self) -> bool:
        return all(self.slices_pass)

    def to_dict(self):
        return {
            "passed": self.passed,
            "table": [
                {"t": t, "cocycle_pass": p, "support": s}
                for t, p, s in zip(self.times, self.slices_pass, self.support_sizes)
            ],
        }


def homotopy_endpoints(H: HomotopyBundle) -> HomotopyReport:
    """Endpoint slices, a cocycle check on every slice, and the support size along the way."""
    idx = list(range(len(H.times)))
    slices = pmap(H.slice, idx)
    passes = [check_cocycle(S).passed for S in slices]
    sizes = [len(support(S)) for S in slices]
    return HomotopyReport(slices[0], slices[-1], passes, sizes, [float(t) for t in H.times])


def constant_homotopy(E: VectorialBundle, n_t: int = 5) -> HomotopyBundle:
    """``E`` pulled back along the projection ``X x I -> X``."""
    T = interval(n_t, "time")
    sp, _ = product_space(E.space, T)
    bundle = pullback(E, sp, [q // n_t for q in sp.points])
    return HomotopyBundle(bundle, E.space, T.coords[:, 0])
