"""Dense spectral tools for degree-one Hermitian maps.

An odd Hermitian map on ``C^d0 (+) C^d1`` is stored as its odd block
``B`` (``d1 x d0``); the full map is ``[[0, B^H], [B, 0]]`` with the even
summand first.  Its square is block diagonal, ``diag(B^H B, B B^H)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import null_space

from .errors import ContourHitsSpectrum, GapViolation, IndexOutOfRange, NumericalFailure

RESIDUAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class OddHermitian:
    B: np.ndarray

    def __init__(self, B, d0: Optional[int] = None, d1: Optional[int] = None):
        B = np.asarray(B, dtype=complex)
        if B.size == 0:
            d0 = B.shape[1] if d0 is None and B.ndim == 2 else (d0 or 0)
            d1 = B.shape[0] if d1 is None and B.ndim == 2 else (d1 or 0)
            B = np.zeros((d1, d0), dtype=complex)
        elif B.ndim != 2:
            raise ValueError("odd block must be a matrix")
        object.__setattr__(self, "B", B)

    @property
    def d0(self) -> int:
        return self.B.shape[1]

    @property
    def d1(self) -> int:
        return self.B.shape[0]

    @property
    def dim(self) -> int:
        return self.d0 + self.d1

    def full(self) -> np.ndarray:
        d0, d1 = self.d0, self.d1
        h = np.zeros((d0 + d1, d0 + d1), dtype=complex)
        h[d0:, :d0] = self.B
        h[:d0, d0:] = self.B.conj().T
        return h

    def square(self) -> np.ndarray:
        d0 = self.d0
        h2 = np.zeros((self.dim, self.dim), dtype=complex)
        h2[:d0, :d0] = self.B.conj().T @ self.B
        h2[d0:, d0:] = self.B @ self.B.conj().T
        return h2

    def grading(self) -> np.ndarray:
        """The grading operator: +1 on the even summand, -1 on the odd one."""
        return np.diag(np.concatenate([np.ones(self.d0), -np.ones(self.d1)])).astype(complex)

    def reversed(self) -> "OddHermitian":
        return OddHermitian(self.B.conj().T, d0=self.d1, d1=self.d0)


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of ``h^2`` in ascending order with graded eigenvectors.

    ``vectors[:, k]`` lives entirely in the summand ``grades[k]``.
    """

    values: np.ndarray
    vectors: np.ndarray
    grades: np.ndarray


def _fix_phase(v: np.ndarray) -> np.ndarray:
    for k in range(v.shape[1]):
        col = v[:, k]
        j = int(np.argmax(np.abs(col)))
        if abs(col[j]) > 0:
            v[:, k] = col * (abs(col[j]) / col[j])
    return v


def _block_eigh(m: np.ndarray):
    if m.shape[0] == 0:
        return np.zeros(0), np.zeros((0, 0), dtype=complex)
    m = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(m)
    return w, v


def eig_square(h: OddHermitian, tol: float = RESIDUAL_TOL) -> Spectrum:
    """Eigendecomposition of ``h^2`` computed blockwise on the two summands."""
    d0, d1 = h.d0, h.d1
    B = h.B
    w0, v0 = _block_eigh(B.conj().T @ B)
    w1, v1 = _block_eigh(B @ B.conj().T)
    values = np.concatenate([w0, w1])
    vecs = np.zeros((d0 + d1, d0 + d1), dtype=complex)
    vecs[:d0, :d0] = v0
    vecs[d0:, d0:] = v1
    grades = np.concatenate([np.zeros(d0, dtype=int), np.ones(d1, dtype=int)])
    order = np.argsort(values, kind="stable")
    values, vecs, grades = values[order], _fix_phase(vecs[:, order]), grades[order]
    if values.size:
        scale = max(1.0, float(np.max(np.abs(values))))
        resid = np.linalg.norm(h.square() @ vecs - vecs * values, axis=0)
        if np.max(resid) > tol * scale or values[0] < -tol * scale:
            raise NumericalFailure(f"eigensolve residual {np.max(resid):.3g} exceeds tolerance")
    return Spectrum(values, vecs, grades)


def minmax_eigenvalue(h: OddHermitian, k: int) -> float:
    """k-th smallest eigenvalue of ``h^2`` (1-based) via the sup-inf principle.

    The supremum over ``(k-1)``-dimensional subspaces is attained on the span
    of the first ``k-1`` eigenvectors; the infimum of the Rayleigh quotient
    over its orthogonal complement is the bottom eigenvalue of the
    compression of ``h^2`` to that complement.
    """
    n = h.dim
    if not 1 <= k <= n:
        raise IndexOutOfRange(f"k={k} outside 1..{n}", witness=k)
    spec = eig_square(h)
    E = spec.vectors[:, : k - 1]
    comp = null_space(E.conj().T) if k > 1 else np.eye(n, dtype=complex)
    compressed = comp.conj().T @ h.square() @ comp
    return float(np.linalg.eigvalsh(0.5 * (compressed + compressed.conj().T))[0])


def rayleigh_inf(h: OddHermitian, E: np.ndarray) -> float:
    """Infimum of the Rayleigh quotient of ``h^2`` over the complement of span(E)."""
    n = h.dim
    comp = null_space(E.conj().T) if E.shape[1] else np.eye(n, dtype=complex)
    c = comp.conj().T @ h.square() @ comp
    return float(np.linalg.eigvalsh(0.5 * (c + c.conj().T))[0])


# ---------------------------------------------------------------------------
# Projectors and contours


@dataclass(frozen=True)
class Contour:
    """Counter-clockwise circle sampled by the trapezoid rule.

    Nodes sit at half-step angles ``2 pi (k + 1/2) / n`` so that none lies on
    the real axis and nodes come in conjugate pairs.
    """

    center: float
    radius: float
    n_nodes: int = 64

    @property
    def angles(self) -> np.ndarray:
        return 2 * np.pi * (np.arange(self.n_nodes) + 0.5) / self.n_nodes

    @property
    def nodes(self) -> np.ndarray:
        return self.center + self.radius * np.exp(1j * self.angles)

    @property
    def length(self) -> float:
        return 2 * np.pi * self.radius

    def distance(self, values) -> float:
        """Distance from the (continuous) circle to real points ``values``."""
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return np.inf
        return float(np.min(np.abs(np.abs(values - self.center) - self.radius)))

    def node_distance(self, values) -> float:
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return np.inf
        return float(np.min(np.abs(self.nodes[:, None] - values[None, :])))


def gap_bounds(values: np.ndarray, mu: float) -> tuple:
    """(largest eigenvalue below mu, smallest above), with reflections for empty sides."""
    below = values[values < mu]
    above = values[values > mu]
    lo = float(below.max()) if below.size else min(0.0, float(values.min()) if values.size else 0.0)
    hi = float(above.min()) if above.size else mu + (mu - lo)
    return lo, hi


def default_contour(h_or_values, mu: float, n_nodes: int = 64) -> Contour:
    """Circle crossing the real axis at the middle of the gap straddling ``mu``
    and half a gap below the smallest eigenvalue."""
    values = h_or_values if isinstance(h_or_values, np.ndarray) else eig_square(h_or_values).values
    lo, hi = gap_bounds(values, mu)
    half = 0.5 * (hi - lo)
    right = lo + half
    bottom = float(values.min()) if values.size and values.min() < mu else lo
    left = bottom - half
    return Contour(center=0.5 * (left + right), radius=0.5 * (right - left), n_nodes=n_nodes)


@dataclass(frozen=True)
class Projection:
    matrix: np.ndarray
    rank: int
    margin: float
    method: str


def spectral_projector(
    h: OddHermitian,
    mu: float,
    method: str = "eigensum",
    eps: float = 0.0,
    contour: Optional[Contour] = None,
) -> Projection:
    """Orthogonal projector onto the eigenspaces of ``h^2`` below ``mu``.

    ``eps`` is the required gap margin; any eigenvalue within ``eps`` of
    ``mu`` raises GapViolation.  ``method='contour'`` evaluates the resolvent
    integral by the trapezoid rule on ``contour`` (default circle from
    :func:`default_contour`).
    """
    spec = eig_square(h)
    vals = spec.values
    margin = float(np.min(np.abs(vals - mu))) if vals.size else np.inf
    if margin <= max(eps, 1e-14):
        k = int(np.argmin(np.abs(vals - mu)))
        raise GapViolation(
            f"eigenvalue {vals[k]:.6g} within {eps:g} of level {mu:g}",
            witness={"lambda": float(vals[k]), "mu": mu, "eps": eps},
        )
    rank = int(np.sum(vals < mu))
    if method == "eigensum":
        V = spec.vectors[:, :rank]
        P = V @ V.conj().T
    elif method == "contour":
        C = contour or default_contour(vals, mu)
        if C.node_distance(vals) < 1e-12:
            raise ContourHitsSpectrum("quadrature node on the spectrum")
        H = h.square()
        eye = np.eye(h.dim)
        P = np.zeros((h.dim, h.dim), dtype=complex)
        for theta, z in zip(C.angles, C.nodes):
            P += C.radius * np.exp(1j * theta) * np.linalg.solve(z * eye - H, eye)
        P /= C.n_nodes
    else:
        raise ValueError(f"unknown method {method!r}")
    return Projection(P, rank, margin, method)


@dataclass(frozen=True)
class ResolventBound:
    max_norm: float
    min_distance: float
    eps: float

    @property
    def within_bound(self) -> bool:
        return self.max_norm < 1.0 / self.eps


def resolvent_bound_check(h: OddHermitian, contour: Contour, eps: float) -> ResolventBound:
    """Largest resolvent norm of ``h^2`` over the contour's quadrature nodes."""
    vals = eig_square(h).values
    if contour.node_distance(vals) < 1e-12:
        raise ContourHitsSpectrum("quadrature node on the spectrum", witness=contour.node_distance(vals))
    H = h.square()
    eye = np.eye(h.dim)
    worst = 0.0
    for z in contour.nodes:
        worst = max(worst, float(np.linalg.norm(np.linalg.inv(z * eye - H), 2)))
    return ResolventBound(worst, contour.node_distance(vals), eps)


def projector_lipschitz(contour: Contour, eps: float) -> float:
    """Constant ``M = length / (2 pi eps^2)`` bounding projector variation."""
    return contour.length / (2 * np.pi * eps**2)


def functional_calculus(h2: np.ndarray, f) -> np.ndarray:
    """``f(h2)`` for a Hermitian positive semidefinite ``h2`` and scalar ``f``."""
    if h2.shape[0] == 0:
        return np.zeros_like(h2)
    w, v = np.linalg.eigh(0.5 * (h2 + h2.conj().T))
    return (v * f(np.clip(w, 0.0, None))) @ v.conj().T


def below_frame(m2: np.ndarray, mu: float) -> np.ndarray:
    """Orthonormal basis of the eigenspaces of Hermitian ``m2`` below ``mu``."""
    if m2.shape[0] == 0:
        return np.zeros((0, 0), dtype=complex)
    w, v = np.linalg.eigh(0.5 * (m2 + m2.conj().T))
    return _fix_phase(v[:, w < mu].copy())
