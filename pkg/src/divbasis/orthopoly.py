"""Orthonormal, hierarchical polynomials on the unit simplex by an Arnoldi process.

The Krylov "operator" is multiplication by a coordinate, applied to the
previous-degree columns in the order that generates degree-ordered
monomials (``x`` first, then ``y`` on the trailing block, and so on).  All
polynomials are stored as values at the points of
:func:`~divbasis.quadrature.simplex_rule`, and inner products carry the
``d!`` factor so that ``sum(w * q_i * q_j) * d! = delta_ij``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .quadrature import SimplexQuadrature, simplex_rule

__all__ = [
    "OrthoPolyBasis",
    "mgs_with_reorth",
    "build_orthopoly",
    "evaluate_orthopoly",
    "degree_offsets",
    "arnoldi_schedule",
]


class NumericalDegeneracy(RuntimeError):
    pass


def degree_offsets(k: int, d: int) -> tuple[int, ...]:
    """``p_j = C(j + d, d)`` for ``j = 0..k``."""
    return tuple(math.comb(j + d, d) for j in range(k + 1))


@lru_cache(maxsize=None)
def arnoldi_schedule(k: int, d: int) -> tuple[tuple[int, int], ...]:
    """``(direction, source)`` for every column after the first.

    Entry ``m - 1`` says that column ``m`` is obtained by multiplying column
    ``source`` by coordinate ``direction`` (both 0-based).  For degree ``j``
    and direction ``i`` the sources are the trailing ``C(j-1+d-1-i, d-1-i)``
    columns of degree ``j - 1``.
    """
    p = degree_offsets(k, d)
    sched = []
    for j in range(1, k + 1):
        for i in range(d):
            block = math.comb(j - 1 + d - 1 - i, d - 1 - i)
            for jp in range(block):
                sched.append((i, p[j - 1] - block + jp))
    return tuple(sched)


def _mgs2(QT: np.ndarray, WQT: np.ndarray, v: np.ndarray, scale: float):
    """Two modified Gram-Schmidt sweeps of ``v`` against rows of ``QT``.

    ``WQT`` holds the rows pre-multiplied by the quadrature weights.  ``v``
    may be a vector or a block of columns handled in lockstep.
    """
    m = QT.shape[0]
    coef = np.zeros((m,) + v.shape[1:])
    v = np.array(v, dtype=float, copy=True)
    for _ in range(2):
        for j in range(m):
            t = scale * (WQT[j] @ v)
            coef[j] += t
            if v.ndim == 1:
                v -= t * QT[j]
            else:
                v -= np.outer(QT[j], t)
    return coef, v


def mgs_with_reorth(basis_columns: np.ndarray, v: np.ndarray, w: np.ndarray,
                    scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Project ``v`` off the columns of ``basis_columns`` with MGS plus one reorthogonalization.

    The columns are assumed orthonormal in ``<a, b> = scale * sum(w * a * b)``.
    Returns the accumulated coefficients of both sweeps and the residual.
    """
    Q = np.asarray(basis_columns, dtype=float)
    w = np.asarray(w, dtype=float)
    QT = np.ascontiguousarray(Q.T)
    WQT = QT * w[None, :]
    return _mgs2(QT, WQT, np.asarray(v, dtype=float), scale)


@dataclass(frozen=True)
class OrthoPolyBasis:
    """Orthonormal polynomial basis of degree <= ``degree`` on the unit ``dim``-simplex.

    Attributes
    ----------
    Q : (npoints, p) values at the quadrature points.
    H : (p, p - 1) upper Hessenberg recurrence matrix.
    degree_offsets : ``p_j`` for ``j = 0..degree``.
    """

    dim: int
    degree: int
    Q: np.ndarray
    H: np.ndarray
    degree_offsets: tuple[int, ...]
    quad: SimplexQuadrature

    @property
    def p(self) -> int:
        return self.degree_offsets[-1]

    @property
    def scale(self) -> float:
        return float(math.factorial(self.dim))


def build_orthopoly(k: int, d: int, quad: SimplexQuadrature | None = None) -> OrthoPolyBasis:
    """Arnoldi construction of ``q_1..q_p`` at the degree-``2k`` simplex rule."""
    if k < 0 or d < 1:
        raise ValueError(f"invalid degree/dimension ({k}, {d})")
    quad = simplex_rule(k, d) if quad is None else quad
    x, w = quad.points, quad.weights
    scale = float(math.factorial(d))
    offs = degree_offsets(k, d)
    p = offs[-1]
    nq = quad.npoints

    QT = np.zeros((p, nq))
    WQT = np.zeros((p, nq))
    H = np.zeros((p, max(p - 1, 0)))
    QT[0] = 1.0
    WQT[0] = w
    tiny = 1e-13 * math.sqrt(scale)
    for m, (i, t) in enumerate(arnoldi_schedule(k, d), start=1):
        v = x[:, i] * QT[t]
        h, v = _mgs2(QT[:m], WQT[:m], v, scale)
        nrm = math.sqrt(scale * float(v @ (w * v)))
        if nrm < tiny:
            raise NumericalDegeneracy(
                f"numerical degeneracy at column {m}: norm {nrm:.3e}")
        H[:m, m - 1] = h
        H[m, m - 1] = nrm
        QT[m] = v / nrm
        WQT[m] = w * QT[m]
    Q = np.ascontiguousarray(QT.T)
    Q.setflags(write=False)
    H.setflags(write=False)
    return OrthoPolyBasis(d, k, Q, H, offs, quad)


def evaluate_orthopoly(basis: OrthoPolyBasis, s, ncols: int | None = None) -> np.ndarray:
    """Values of ``q_1..q_p`` at arbitrary points by running the Hessenberg recurrence.

    ``ncols`` truncates to the first columns (any hierarchical prefix).
    """
    s = np.atleast_2d(np.asarray(s, dtype=float))
    if s.shape[1] != basis.dim:
        raise ValueError(f"points have dimension {s.shape[1]}, basis has {basis.dim}")
    p = basis.p if ncols is None else ncols
    H = basis.H
    out = np.empty((p, s.shape[0]))
    out[0] = 1.0
    sched = arnoldi_schedule(basis.degree, basis.dim)
    for m in range(1, p):
        i, t = sched[m - 1]
        out[m] = (s[:, i] * out[t] - H[:m, m - 1] @ out[:m]) / H[m, m - 1]
    return out.T
