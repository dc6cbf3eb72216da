"""Manufactured fields and exact solutions used by the experiments.

Vector fields map ``(npts, d)`` points to component-major flat arrays of
length ``d * npts``; scalar fields return ``(npts,)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

TWO_PI = 2.0 * np.pi

__all__ = [
    "Problem",
    "taylor_green",
    "taylor_green_4",
    "helmholtz_square",
    "helmholtz_hull2d",
    "helmholtz_cube",
    "laplace_square",
    "poisson_square",
    "corner_lshape",
    "PROJECTION_TRIANGLE",
]

Vector = Callable[[np.ndarray], np.ndarray]
Scalar = Callable[[np.ndarray], np.ndarray]

PROJECTION_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.8], [0.1, 1.0]])


@dataclass(frozen=True)
class Problem:
    name: str
    dim: int
    g: Optional[Vector] = None
    lambda_D: Optional[Scalar] = None
    f: Optional[Scalar] = None
    u: Optional[Vector] = None
    lam: Optional[Scalar] = None


def _stack(*comps) -> np.ndarray:
    return np.concatenate(comps)


def taylor_green(x: np.ndarray) -> np.ndarray:
    px, py = np.pi * x[:, 0], np.pi * x[:, 1]
    return _stack(np.sin(px) * np.cos(py), -np.cos(px) * np.sin(py))


def taylor_green_4(x: np.ndarray) -> np.ndarray:
    px, py = 4 * np.pi * x[:, 0], 4 * np.pi * x[:, 1]
    return _stack(np.sin(px) * np.cos(py), -np.cos(px) * np.sin(py))


def _rot2(x: np.ndarray) -> np.ndarray:
    tx, ty = TWO_PI * x[:, 0], TWO_PI * x[:, 1]
    return _stack(np.cos(tx) * np.sin(ty), -np.sin(tx) * np.cos(ty))


def helmholtz_square() -> Problem:
    """``g = u + grad(lambda)`` with a solenoidal ``u`` and ``lambda = 0`` on the boundary."""
    def lam(x):
        return 0.1 / TWO_PI * np.sin(TWO_PI * x[:, 0]) * np.sin(TWO_PI * x[:, 1])

    def g(x):
        tx, ty = TWO_PI * x[:, 0], TWO_PI * x[:, 1]
        grad = _stack(0.1 * np.cos(tx) * np.sin(ty), 0.1 * np.sin(tx) * np.cos(ty))
        return _rot2(x) + grad

    return Problem("helmholtz", 2, g=g, u=_rot2, lam=lam)


def _zero(x):
    return np.zeros(x.shape[0])


def helmholtz_hull2d() -> Problem:
    return Problem("helmholtz", 2, g=_rot2, u=_rot2, lam=_zero)


def _cube_field(x: np.ndarray) -> np.ndarray:
    px, py, pz = np.pi * x[:, 0], np.pi * x[:, 1], np.pi * x[:, 2]
    return _stack(np.sin(px) * np.cos(py) * np.cos(pz),
                  -0.5 * np.cos(px) * np.sin(py) * np.cos(pz),
                  -0.5 * np.cos(px) * np.cos(py) * np.sin(pz))


def helmholtz_cube() -> Problem:
    return Problem("helmholtz", 3, g=_cube_field, u=_cube_field, lam=_zero)


def laplace_square() -> Problem:
    """``lambda = sin(2 pi x) exp(-2 pi y)`` (harmonic), ``u = -grad(lambda)``."""
    def lam(x):
        return np.sin(TWO_PI * x[:, 0]) * np.exp(-TWO_PI * x[:, 1])

    def u(x):
        tx, ey = TWO_PI * x[:, 0], np.exp(-TWO_PI * x[:, 1])
        return _stack(-TWO_PI * np.cos(tx) * ey, TWO_PI * np.sin(tx) * ey)

    return Problem("laplace", 2, lambda_D=lam, u=u, lam=lam)


def poisson_square() -> Problem:
    """``lambda = sin(2 pi x) sin(2 pi y)``, ``u = -grad(lambda)``, ``f = div(u)``."""
    def lam(x):
        return np.sin(TWO_PI * x[:, 0]) * np.sin(TWO_PI * x[:, 1])

    def u(x):
        tx, ty = TWO_PI * x[:, 0], TWO_PI * x[:, 1]
        return _stack(-TWO_PI * np.cos(tx) * np.sin(ty), -TWO_PI * np.sin(tx) * np.cos(ty))

    def f(x):
        return 2.0 * TWO_PI ** 2 * lam(x)

    return Problem("poisson", 2, f=f, u=u, lam=lam)


def corner_lshape() -> Problem:
    """Dirichlet data ``x**2`` on the L-shaped domain; no closed-form solution."""
    return Problem("laplace", 2, lambda_D=lambda x: x[:, 0] ** 2)
