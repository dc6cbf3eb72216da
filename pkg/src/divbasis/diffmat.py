"""Spectral differentiation at the collapsed simplex quadrature points.

Values of a polynomial of degree <= k sampled at the ``(k+1)**d`` points of
:func:`~divbasis.quadrature.simplex_rule` are differentiated exactly: the 1-D
barycentric differentiation matrix acts along each hypercube axis and the
chain rule of the Duffy map converts hypercube derivatives into simplex
derivatives.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quadrature import GaussRule1D, SimplexQuadrature

__all__ = ["barycentric_weights", "diff_1d", "DerivativeMatrices", "simplex_diff"]

DENSE_LIMIT = 20_000


def barycentric_weights(nodes) -> np.ndarray:
    """``lambda_i = 1 / prod_{j != i} (z_i - z_j)``."""
    z = np.asarray(nodes, dtype=float)
    diff = z[:, None] - z[None, :]
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0.0):
        i, j = np.argwhere(diff == 0.0)[0]
        raise ValueError(f"duplicate nodes at positions {i} and {j}: {z[i]!r}")
    return 1.0 / diff.prod(axis=1)


def diff_1d(rule: GaussRule1D | np.ndarray) -> np.ndarray:
    """Differentiation matrix of the Lagrange interpolant through the rule's nodes.

    Off-diagonals are ``(lam_j / lam_i) / (z_i - z_j)``; each diagonal entry is
    minus the sum of its row so constants map to zero exactly.
    """
    z = np.asarray(rule.nodes if isinstance(rule, GaussRule1D) else rule, dtype=float)
    lam = barycentric_weights(z)
    diff = z[:, None] - z[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (lam[None, :] / lam[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


@dataclass(frozen=True)
class DerivativeMatrices:
    """Partial-derivative operators ``DX^(i)`` on simplex quadrature samples.

    The operators are applied by sum factorization (1-D matrices along tensor
    axes, then diagonal chain-rule scalings), so memory stays at
    ``O(d (k+1)**d)``.  :meth:`dense` materializes a matrix when needed.
    """

    dim: int
    degree: int
    d1: tuple[np.ndarray, ...]
    # scal[i][j]: row scaling of the hypercube derivative along axis j in DX^(i)
    scal: tuple[dict[int, np.ndarray], ...]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def npoints(self) -> int:
        return (self.degree + 1) ** self.dim

    def _dzeta(self, j: int, v: np.ndarray) -> np.ndarray:
        """Derivative along hypercube axis ``j`` (0-based, axis 0 fastest)."""
        n = self.degree + 1
        d = self.dim
        extra = v.shape[1:]
        # C-order reshape: the last tensor axis is the fastest index, i.e. axis 0
        t = v.reshape((n,) * d + extra)
        # differences v_j - v_i instead of D @ v: constants map to exactly zero and
        # the large off-diagonals near the endpoints do not amplify the magnitude of v
        t = np.moveaxis(t, d - 1 - j, 0)
        D = self.d1[j]
        out = np.empty_like(t)
        for i in range(n):
            out[i] = np.tensordot(D[i], t - t[i], axes=1)
        return np.moveaxis(out, 0, d - 1 - j).reshape(v.shape)

    def apply(self, i: int, v: np.ndarray) -> np.ndarray:
        """Values of the ``i``-th partial derivative (0-based) at the quadrature points."""
        v = np.asarray(v, dtype=float)
        out = np.zeros_like(v)
        for j, s in self.scal[i].items():
            dz = self._dzeta(j, v)
            out += s.reshape((-1,) + (1,) * (v.ndim - 1)) * dz
        return out

    def dense(self, i: int) -> np.ndarray:
        if self.npoints > DENSE_LIMIT:
            raise MemoryError(
                f"refusing to materialize a {self.npoints}x{self.npoints} derivative matrix")
        if i not in self._cache:
            M = self.apply(i, np.eye(self.npoints))
            M.setflags(write=False)
            self._cache[i] = M
        return self._cache[i]

    @property
    def dx(self) -> list[np.ndarray]:
        return [self.dense(i) for i in range(self.dim)]


def simplex_diff(quad: SimplexQuadrature) -> DerivativeMatrices:
    """Derivative operators on the points of ``quad``.

    With ``t_j = 1 - x_1 - ... - x_{j-1}`` the Duffy map gives
    ``d/dx_i = (1/t_i) d/dz_i + sum_{j>i} (x_j / t_j**2) d/dz_j``.
    """
    d, k = quad.dim, quad.degree
    x = quad.points
    if np.any(x <= 0.0) or np.any(x.sum(axis=1) >= 1.0):
        raise ValueError("derivative matrices need strictly interior quadrature points")
    d1 = tuple(diff_1d(r) for r in quad.rules)
    scal: list[dict[int, np.ndarray]] = [dict() for _ in range(d)]
    scal[0][0] = np.ones(quad.npoints)
    t1 = np.ones(quad.npoints)
    for j in range(1, d):
        t1 = t1 - x[:, j - 1]
        inv = 1.0 / t1
        tt3 = x[:, j] * inv * inv
        for i in range(j):
            scal[i][j] = tt3
        scal[j][j] = inv
    return DerivativeMatrices(d, k, d1, tuple(scal))
