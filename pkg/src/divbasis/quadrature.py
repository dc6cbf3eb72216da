"""Gauss-Jacobi rules on [0, 1] and Duffy-collapsed tensor rules on the unit simplex.

The simplex rule with ``k + 1`` points per direction integrates every
polynomial of total degree ``2k`` exactly, which is what the Gram-Schmidt
inner products of degree-``k`` polynomials require.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "GaussRule1D",
    "SimplexQuadrature",
    "gauss_jacobi_01",
    "duffy_map",
    "simplex_rule",
    "simplex_grid",
]


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class GaussRule1D:
    """``n``-point Gauss rule on [0, 1] for the weight ``(1 - z)**alpha``."""

    nodes: np.ndarray
    weights: np.ndarray
    alpha: int

    @property
    def n(self) -> int:
        return self.nodes.size


@dataclass(frozen=True)
class SimplexQuadrature:
    """Tensor Gauss-Jacobi rule collapsed onto the unit ``dim``-simplex.

    Points are ordered with the first hypercube coordinate varying fastest,
    so ``point_index = i_1 + (k+1) * i_2 + (k+1)**2 * i_3 + ...``.  The
    derivative matrices rely on this ordering.
    """

    dim: int
    degree: int
    points: np.ndarray
    weights: np.ndarray
    hypercube_points: np.ndarray
    rules: tuple[GaussRule1D, ...]

    @property
    def npoints(self) -> int:
        return self.weights.size

    @property
    def n1d(self) -> int:
        return self.degree + 1


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def _jacobi_recurrence_01(n: int, alpha: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Recurrence of the monic Jacobi(alpha, 0) polynomials shifted to [0, 1].

    Returns diagonal ``a``, squared off-diagonals ``b`` (``b[m]`` couples
    degrees ``m - 1`` and ``m``; ``b[0]`` unused) and the total mass.
    """
    a_, b_ = float(alpha), 0.0
    m = np.arange(n, dtype=float)
    s = 2.0 * m + a_ + b_
    with np.errstate(divide="ignore", invalid="ignore"):
        diag = (b_ * b_ - a_ * a_) / (s * (s + 2.0))
    if a_ + b_ == 0.0:
        diag[0] = 0.0
    else:
        diag[0] = (b_ - a_) / (a_ + b_ + 2.0)
    off = np.zeros(n)
    if n > 1:
        mm = m[1:]
        ss = s[1:]
        off[1:] = (4.0 * mm * (mm + a_) * (mm + b_) * (mm + a_ + b_)
                   / (ss * ss * (ss + 1.0) * (ss - 1.0)))
    # [-1, 1] -> [0, 1]: z = (1 + t) / 2 scales the Jacobi matrix by 1/2
    diag = 0.5 * (1.0 + diag)
    off = 0.25 * off
    mass = 1.0 / (alpha + 1.0)
    return diag, off, mass


def _orthonormal_values(x: np.ndarray, diag: np.ndarray, off: np.ndarray,
                        mass: float, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthonormal polynomials p_0..p_{n-1} at ``x`` plus p_n and p_n'.

    ``diag`` and ``off`` must hold ``n + 1`` recurrence terms.
    """
    vals = np.empty((n, x.size))
    sq = np.sqrt(off)
    p_prev = np.zeros_like(x)
    dp_prev = np.zeros_like(x)
    p = np.full_like(x, 1.0 / math.sqrt(mass))
    dp = np.zeros_like(x)
    for m in range(n):
        vals[m] = p
        p_next = ((x - diag[m]) * p - sq[m] * p_prev) / sq[m + 1]
        dp_next = (p + (x - diag[m]) * dp - sq[m] * dp_prev) / sq[m + 1]
        p_prev, p = p, p_next
        dp_prev, dp = dp, dp_next
    return vals, p, dp


@lru_cache(maxsize=None)
def gauss_jacobi_01(n: int, alpha: int) -> GaussRule1D:
    """``n``-point Gauss-Jacobi rule on [0, 1] with weight ``(1 - z)**alpha``.

    Nodes come from the Golub-Welsch eigenproblem and are polished with
    Newton steps on the orthonormal recurrence; weights are the
    Christoffel numbers ``1 / sum_m p_m(z)**2``.
    """
    if n < 1:
        raise ValueError(f"need at least one node, got n={n}")
    if alpha < 0 or int(alpha) != alpha:
        raise ValueError(f"alpha must be a non-negative integer, got {alpha}")
    alpha = int(alpha)
    diag, off, mass = _jacobi_recurrence_01(n + 1, alpha)
    sub = np.sqrt(off[1:n])
    jac = np.diag(diag[:n]) + np.diag(sub, 1) + np.diag(sub, -1)
    nodes = np.linalg.eigvalsh(jac)

    for _ in range(8):
        _, pn, dpn = _orthonormal_values(nodes, diag, off, mass, n)
        step = pn / dpn
        nodes = nodes - step
        if np.all(np.abs(step) <= 4.0 * np.finfo(float).eps * np.maximum(np.abs(nodes), 1e-300)):
            break
    else:
        bad = int(np.argmax(np.abs(step)))
        if abs(step[bad]) > 1e-13:
            raise QuadratureError(
                f"Gauss-Jacobi node {bad} did not converge (n={n}, alpha={alpha}, "
                f"last step {step[bad]:.3e})")

    vals, _, _ = _orthonormal_values(nodes, diag, off, mass, n)
    weights = 1.0 / np.sum(vals * vals, axis=0)
    order = np.argsort(nodes)
    nodes, weights = nodes[order], weights[order]
    if np.any(nodes <= 0.0) or np.any(nodes >= 1.0) or np.any(np.diff(nodes) <= 0.0):
        raise QuadratureError(f"Gauss-Jacobi nodes left (0, 1) for n={n}, alpha={alpha}")
    return GaussRule1D(_frozen(nodes), _frozen(weights), alpha)


def duffy_map(zeta: np.ndarray) -> np.ndarray:
    """Collapse points of the unit hypercube onto the unit simplex.

    ``x_1 = z_1`` and ``x_j = z_j * prod_{i<j} (1 - z_i)``.  Works on a
    single point or on an ``(npts, d)`` array.
    """
    z = np.asarray(zeta, dtype=float)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    x = z.copy()
    if z.shape[1] > 1:
        x[:, 1:] = z[:, 1:] * np.cumprod(1.0 - z[:, :-1], axis=1)
    return x[0] if single else x


def _tensor_grid(axes: list[np.ndarray]) -> np.ndarray:
    # first coordinate fastest
    grids = np.meshgrid(*axes[::-1], indexing="ij")
    return np.column_stack([g.ravel() for g in grids[::-1]])


@lru_cache(maxsize=None)
def simplex_rule(k: int, d: int) -> SimplexQuadrature:
    """Rule with ``(k+1)**d`` points exact for total degree ``2k`` on the unit simplex."""
    if k < 0:
        raise ValueError(f"degree must be non-negative, got {k}")
    if d < 1:
        raise ValueError(f"dimension must be positive, got {d}")
    rules = tuple(gauss_jacobi_01(k + 1, d - j) for j in range(1, d + 1))
    zeta = _tensor_grid([r.nodes for r in rules])
    w = _tensor_grid([r.weights for r in rules]).prod(axis=1)
    x = duffy_map(zeta)
    return SimplexQuadrature(d, k, _frozen(x), _frozen(w), _frozen(zeta), rules)


def simplex_grid(n: int, d: int) -> np.ndarray:
    """``n**d`` evaluation points: a uniform hypercube grid pushed through the Duffy map."""
    s = np.linspace(0.0, 1.0, n)
    return duffy_map(_tensor_grid([s] * d))


def simplex_volume(d: int) -> float:
    return 1.0 / math.factorial(d)
