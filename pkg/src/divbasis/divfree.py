"""Orthonormal hierarchical divergence-free vector bases on simplices.

A divergence-free field of degree <= k is stored by its coefficients in the
vector basis ``{q_r e_i}``: row ``i * p + r`` of ``N`` multiplies ``q_r e_i``.
Sampled values are stacked component-major, ``(x-values; y-values; ...)``.

On the reference simplex each degree block is an orthonormal basis of the
null space of the divergence moments and of the previous blocks.  On a
physical element the reference coefficients are pushed forward by the
element Jacobian (contravariant Piola, which keeps divergence at zero) and
re-orthonormalized degree by degree with block classical Gram-Schmidt.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Union

import numpy as np

from .diffmat import DerivativeMatrices, simplex_diff
from .orthopoly import OrthoPolyBasis, _mgs2, build_orthopoly, evaluate_orthopoly, mgs_with_reorth

__all__ = [
    "DivFreeRefBasis",
    "DivFreeElemBasis",
    "divfree_offsets",
    "constraint_matrix",
    "build_divfree_ref",
    "build_divfree_elem",
    "evaluate_divfree",
    "project_l2",
    "monomial_divfree_oracle",
    "evaluate_monomial_fields",
    "element_jacobian",
]

ORTH_TOL = 1e-13


class RankDeficiency(RuntimeError):
    pass


class IllConditionedElement(RuntimeError):
    pass


def divfree_offsets(k: int, d: int) -> tuple[int, ...]:
    """``n_j = d C(j+d, d) - C(j-1+d, d)`` for ``j = 0..k``."""
    return tuple(d * math.comb(j + d, d) - (math.comb(j - 1 + d, d) if j > 0 else 0)
                 for j in range(k + 1))


def _block_rows(p: int, pj: int, d: int) -> np.ndarray:
    """Rows of ``N`` (columns of ``C``) belonging to ``q_1..q_pj`` in every component."""
    return np.concatenate([np.arange(i * p, i * p + pj) for i in range(d)])


@dataclass(frozen=True)
class DivFreeRefBasis:
    """Divergence-free basis on the reference simplex.

    ``N`` is ``(d p, n)``, ``C`` is ``(p_{k-1}, d p)`` with
    ``C[s, i p + r] = d! * integral(q_s * dq_r/dx_i)``, i.e. the coefficient of
    ``q_s`` in the expansion of ``dq_r/dx_i``.
    """

    dim: int
    degree: int
    N: np.ndarray
    C: np.ndarray
    ortho: OrthoPolyBasis
    offsets: tuple[int, ...]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.offsets[-1]

    @property
    def coeffs(self) -> np.ndarray:
        return self.N

    @property
    def Qd(self) -> np.ndarray:
        if "Qd" not in self._cache:
            self._cache["Qd"] = _sample(self.ortho, self.N)
        return self._cache["Qd"]


@dataclass(frozen=True)
class DivFreeElemBasis:
    """Divergence-free basis on one affine element.

    ``jacobian`` follows the convention ``F[i, j] = d x_i / d x^(e)_j``
    (reference coordinates differentiated by physical ones); ``edges`` is its
    inverse, the matrix whose columns are ``X_{j+1} - X_0``.
    """

    nodes: np.ndarray
    Ne: np.ndarray
    jacobian: np.ndarray
    edges: np.ndarray
    volume: float
    ref: DivFreeRefBasis
    element: int = -1
    reorthogonalized: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.ref.dim

    @property
    def degree(self) -> int:
        return self.ref.degree

    @property
    def n(self) -> int:
        return self.ref.n

    @property
    def offsets(self) -> tuple[int, ...]:
        return self.ref.offsets

    @property
    def ortho(self) -> OrthoPolyBasis:
        return self.ref.ortho

    @property
    def coeffs(self) -> np.ndarray:
        return self.Ne

    @property
    def Qd(self) -> np.ndarray:
        if "Qd" not in self._cache:
            self._cache["Qd"] = _sample(self.ref.ortho, self.Ne)
        return self._cache["Qd"]

    def to_reference(self, xe) -> np.ndarray:
        xe = np.atleast_2d(np.asarray(xe, dtype=float))
        return (xe - self.nodes[0]) @ self.jacobian.T

    def to_physical(self, s) -> np.ndarray:
        s = np.atleast_2d(np.asarray(s, dtype=float))
        return self.nodes[0] + s @ self.edges.T

    def element_constraints(self) -> np.ndarray:
        """Divergence moments in physical derivatives: ``C`` composed with ``kron(F, I)``."""
        if "Ce" not in self._cache:
            self._cache["Ce"] = physical_constraints(self.ref.C, self.jacobian, self.ref.ortho.p)
        return self._cache["Ce"]


Basis = Union[DivFreeRefBasis, DivFreeElemBasis]


def physical_constraints(C: np.ndarray, F: np.ndarray, p: int) -> np.ndarray:
    """Columns ``i p + r`` become moments of ``dq_r/dx^(e)_i = sum_m F[m, i] dq_r/dx_m``."""
    d = F.shape[0]
    Ce = np.zeros_like(C)
    for i in range(d):
        for m in range(d):
            if F[m, i] != 0.0:
                Ce[:, i * p:(i + 1) * p] += F[m, i] * C[:, m * p:(m + 1) * p]
    return Ce


def _sample(ortho: OrthoPolyBasis, coeffs: np.ndarray, Q: np.ndarray | None = None) -> np.ndarray:
    Q = ortho.Q if Q is None else Q
    p = ortho.p
    d = coeffs.shape[0] // p
    return np.vstack([Q @ coeffs[i * p:(i + 1) * p] for i in range(d)])


def constraint_matrix(ortho: OrthoPolyBasis, dmats: DerivativeMatrices | None = None) -> np.ndarray:
    """Divergence constraint coefficients ``C`` (rows ``q_1..q_{p_{k-1}}``).

    Each derivative ``DX_i q_r`` of a degree-``j`` column is expanded on the
    degree ``< j`` columns by two MGS sweeps.  Entries for lower rows are
    structurally zero and left so.
    """
    d, k = ortho.dim, ortho.degree
    dmats = simplex_diff(ortho.quad) if dmats is None else dmats
    offs = ortho.degree_offsets
    p = ortho.p
    rows = offs[k - 1] if k > 0 else 0
    C = np.zeros((rows, d * p))
    w = ortho.quad.weights
    QT = np.ascontiguousarray(ortho.Q.T)
    WQT = QT * w[None, :]
    for j in range(1, k + 1):
        lo, hi = offs[j - 1], offs[j]
        for i in range(d):
            V = dmats.apply(i, ortho.Q[:, lo:hi])
            coef, _ = _mgs2(QT[:lo], WQT[:lo], V, ortho.scale)
            C[:lo, i * p + lo:i * p + hi] = coef
    return C


def _null_space(M: np.ndarray) -> tuple[np.ndarray, int]:
    """Orthonormal null-space basis from the SVD and the detected rank."""
    if M.shape[0] == 0:
        return np.eye(M.shape[1]), 0
    _, s, vt = np.linalg.svd(M, full_matrices=True)
    tol = max(M.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    return vt[rank:].T.copy(), rank


def build_divfree_ref(ortho: OrthoPolyBasis | None = None,
                      dmats: DerivativeMatrices | None = None, *,
                      k: int | None = None, d: int | None = None) -> DivFreeRefBasis:
    """Reference-simplex divergence-free basis, built degree by degree.

    Either pass an :class:`OrthoPolyBasis` or ``k`` and ``d``.
    """
    if ortho is None:
        if k is None or d is None:
            raise TypeError("need either an OrthoPolyBasis or k and d")
        ortho = build_orthopoly(k, d)
    d, k = ortho.dim, ortho.degree
    dmats = simplex_diff(ortho.quad) if dmats is None else dmats
    C = constraint_matrix(ortho, dmats)
    offs = ortho.degree_offsets
    noffs = divfree_offsets(k, d)
    p = ortho.p
    N = np.zeros((d * p, noffs[-1]))
    for i in range(d):
        N[i * p, i] = 1.0
    for j in range(1, k + 1):
        ii = _block_rows(p, offs[j], d)
        nprev = noffs[j - 1]
        M = np.vstack([C[:offs[j - 1], ii], N[ii, :nprev].T])
        Z, _ = _null_space(M)
        want = noffs[j] - nprev
        if Z.shape[1] != want:
            raise RankDeficiency(
                f"rank deficiency at degree {j}: null space has dimension "
                f"{Z.shape[1]}, expected {want}")
        N[np.ix_(ii, np.arange(nprev, noffs[j]))] = Z
    N.setflags(write=False)
    C.setflags(write=False)
    return DivFreeRefBasis(d, k, N, C, ortho, noffs)


def element_jacobian(node_coords) -> tuple[np.ndarray, np.ndarray, float]:
    """Edge matrix ``E`` (columns ``X_{j+1} - X_0``), ``F = E^{-1}`` and the volume."""
    X = np.asarray(node_coords, dtype=float)
    d = X.shape[1]
    if X.shape != (d + 1, d):
        raise ValueError(f"expected {(d + 1, d)} node coordinates, got {X.shape}")
    E = (X[1:] - X[0]).T
    det = float(np.linalg.det(E))
    scale = float(np.max(np.abs(E))) if E.size else 1.0
    if abs(det) <= 1e-12 * scale ** d:
        raise ValueError(f"degenerate element: |det| = {abs(det):.3e}")
    return E, np.linalg.inv(E), abs(det) / math.factorial(d)


def _orth(A: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(A)
    return q


def build_divfree_elem(ref: DivFreeRefBasis, node_coords, element: int = -1) -> DivFreeElemBasis:
    """Push the reference basis onto an affine element and re-orthonormalize it.

    Per degree: combine the new reference columns with the element Jacobian,
    remove components along the element columns already built (block CGS),
    orthonormalize, and repeat the projection once if the measured loss of
    orthogonality exceeds ``1e-13``.
    """
    X = np.asarray(node_coords, dtype=float)
    E, F, vol = element_jacobian(X)
    d, k = ref.dim, ref.degree
    p = ref.ortho.p
    offs = ref.ortho.degree_offsets
    noffs = ref.offsets
    N = ref.N
    Ne = np.zeros_like(N)
    reorth = 0
    for j in range(k + 1):
        pj = offs[j]
        lo, hi = (noffs[j - 1] if j > 0 else 0), noffs[j]
        Nbar = np.zeros((d * pj, hi - lo))
        for m in range(d):
            block = N[m * p:m * p + pj, lo:hi]
            for i in range(d):
                if E[i, m] != 0.0:
                    Nbar[i * pj:(i + 1) * pj] += E[i, m] * block
        ii = _block_rows(p, pj, d)
        prev = Ne[ii, :lo]
        if lo:
            Nbar -= prev @ (prev.T @ Nbar)
        Nbar = _orth(Nbar)
        if lo:
            tt = np.abs(Nbar.T @ prev).sum(axis=1).max()
            if tt > ORTH_TOL:
                reorth += 1
                Nbar -= prev @ (prev.T @ Nbar)
                Nbar = _orth(Nbar)
                tt = np.abs(Nbar.T @ prev).sum(axis=1).max()
                if tt > ORTH_TOL:
                    raise IllConditionedElement(
                        f"element too ill-conditioned: orthogonality error {tt:.3e} "
                        f"at degree {j} after reorthogonalization")
        Ne[np.ix_(ii, np.arange(lo, hi))] = Nbar
    Ne.setflags(write=False)
    return DivFreeElemBasis(X, Ne, F, E, vol, ref, element, reorth)


def evaluate_divfree(basis: Basis, s, ncols: int | None = None) -> np.ndarray:
    """Values of the basis fields at reference points ``s``, stacked component-major.

    Only the ``q`` columns that the requested fields touch are evaluated.
    """
    s = np.atleast_2d(np.asarray(s, dtype=float))
    n = basis.n if ncols is None else ncols
    coeffs = basis.coeffs
    ortho = basis.ortho
    p = ortho.p
    j = next(j for j, nj in enumerate(basis.offsets) if nj >= n)
    pj = ortho.degree_offsets[j]
    Qs = evaluate_orthopoly(ortho, s, ncols=pj)
    d = coeffs.shape[0] // p
    return np.vstack([Qs @ coeffs[i * p:i * p + pj, :n] for i in range(d)])


def project_l2(basis: Basis, samples) -> np.ndarray:
    """Coefficients of the L2 projection of sampled field values onto the basis.

    ``samples`` are component-major values at the (element) quadrature points.
    Truncating the result to its first ``n_j`` entries gives the degree-``j``
    projection.
    """
    f = np.asarray(samples, dtype=float).ravel()
    d = basis.dim
    wd = np.tile(basis.ortho.quad.weights, d)
    coef, _ = mgs_with_reorth(basis.Qd, f, wd, basis.ortho.scale)
    return coef


def reconstruct(values: np.ndarray, coef: np.ndarray, offsets, d: int):
    """Running partial sums ``values[:, :n_j] @ coef[:n_j]`` for every degree ``j``."""
    acc = np.zeros(values.shape[0])
    lo = 0
    for hi in offsets:
        acc = acc + values[:, lo:hi] @ coef[lo:hi]
        lo = hi
        yield acc.reshape(d, -1)


# -- monomial oracle ---------------------------------------------------------

def _exponents(j: int, d: int) -> list[tuple[int, ...]]:
    out = []
    for combo in combinations_with_replacement(range(d), j):
        a = [0] * d
        for c in combo:
            a[c] += 1
        out.append(tuple(a))
    return out


MonomialField = dict  # {(component, exponent tuple): Fraction}


def monomial_divfree_oracle(k: int, d: int) -> list[MonomialField]:
    """Monomial divergence-free fields of degree <= k with exact rational coefficients.

    Per degree ``j``: fields ``x^a e_i`` whose divergence vanishes, then for
    every ``x^a e_i`` with ``a_i > 0`` (``i < d``) the combination
    ``x^a e_i / a_i - x^(a - e_i + e_d) e_d / (a_d + 1)``.
    """
    fields: list[MonomialField] = []
    last = d - 1
    for j in range(k + 1):
        expo = _exponents(j, d)
        pure, combos = [], []
        for i in range(d):
            for a in expo:
                if a[i] == 0:
                    pure.append({(i, a): Fraction(1)})
                elif i != last:
                    b = list(a)
                    b[i] -= 1
                    b[last] += 1
                    combos.append({(i, a): Fraction(1, a[i]),
                                   (last, tuple(b)): Fraction(-1, b[last])})
        fields.extend(pure)
        fields.extend(combos)
    return fields


def monomial_divergence(field: MonomialField) -> dict:
    """Exact divergence as ``{exponent: Fraction}`` with zero terms dropped."""
    out: dict = {}
    for (i, a), c in field.items():
        if a[i] == 0:
            continue
        b = list(a)
        b[i] -= 1
        key = tuple(b)
        out[key] = out.get(key, Fraction(0)) + c * a[i]
    return {key: v for key, v in out.items() if v != 0}


def evaluate_monomial_fields(fields: list[MonomialField], pts) -> np.ndarray:
    """Sampled values of oracle fields, component-major, shape ``(d * npts, len(fields))``."""
    x = np.atleast_2d(np.asarray(pts, dtype=float))
    npts, d = x.shape
    out = np.zeros((d * npts, len(fields)))
    powcache: dict = {}
    for col, fld in enumerate(fields):
        for (i, a), c in fld.items():
            if a not in powcache:
                powcache[a] = np.prod(x ** np.asarray(a, dtype=float), axis=1)
            out[i * npts:(i + 1) * npts, col] += float(c) * powcache[a]
    return out
