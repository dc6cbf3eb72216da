"""Per-element local problems of the hybridized method.

With an orthonormal divergence-free basis the local solves reduce to inner
products: ``alpha`` holds the source moments and ``beta`` the face-multiplier
moments of each basis field, both divided by the element volume.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from ..divfree import DivFreeElemBasis, DivFreeRefBasis, build_divfree_elem
from ..mesh import ElementGeometry, SimplicialMesh, element_geometry
from ..orthopoly import OrthoPolyBasis, build_orthopoly, evaluate_orthopoly
from ..quadrature import SimplexQuadrature

__all__ = [
    "FaceBasis",
    "ElementData",
    "LocalSolution",
    "build_face_basis",
    "local_alpha",
    "local_beta",
    "face_reference_points",
    "prepare_element",
    "build_element_bases",
    "map_elements",
]

Field = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FaceBasis:
    """Orthonormal polynomials on the reference ``(d-1)``-simplex, ``int q_i q_j = delta_ij / (d-1)!``."""

    ortho: OrthoPolyBasis

    @property
    def m(self) -> int:
        return self.ortho.p

    @property
    def offsets(self) -> tuple[int, ...]:
        return self.ortho.degree_offsets

    @property
    def quad(self) -> SimplexQuadrature:
        return self.ortho.quad

    @property
    def scale(self) -> float:
        return self.ortho.scale


def build_face_basis(k: int, d: int) -> FaceBasis:
    if d < 2:
        raise ValueError("hybrid faces need d >= 2")
    return FaceBasis(build_orthopoly(k, d - 1))


@dataclass(frozen=True)
class ElementData:
    """Everything about one element that the solver reuses across degrees.

    ``face_moments[g][j, r] = int_face q_j^(f) q_r / |face|`` for local face ``g``.
    """

    element: int
    basis: DivFreeElemBasis
    geometry: ElementGeometry
    faces: np.ndarray
    face_moments: tuple[np.ndarray, ...]

    @property
    def volume(self) -> float:
        return self.geometry.volume


@dataclass(frozen=True)
class LocalSolution:
    """``alpha`` (length ``n``) and ``beta`` (``n x (d+1) m``, face-major columns)."""

    element: int
    alpha: np.ndarray
    beta: np.ndarray
    volume: float
    div_offsets: tuple[int, ...]
    face_offsets: tuple[int, ...]

    @property
    def degree(self) -> int:
        return len(self.div_offsets) - 1

    @property
    def n_faces(self) -> int:
        return self.beta.shape[1] // self.face_offsets[-1]

    def beta_block(self, g: int) -> np.ndarray:
        m = self.face_offsets[-1]
        return self.beta[:, g * m:(g + 1) * m]


def element_quadrature_points(basis: DivFreeElemBasis) -> np.ndarray:
    return basis.to_physical(basis.ortho.quad.points)


def local_alpha(elem_basis: DivFreeElemBasis, g_samples) -> np.ndarray:
    """``alpha_l = int g . phi_l / |element|`` from component-major samples at the element points."""
    g = np.asarray(g_samples, dtype=float).ravel()
    w = elem_basis.ortho.quad.weights
    wd = np.tile(w, elem_basis.dim)
    return elem_basis.ortho.scale * (elem_basis.Qd.T @ (wd * g))


def face_reference_points(mesh: SimplicialMesh, f: int, X: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Reference coordinates in element ``X`` of face points given in the shared face frame."""
    verts = mesh.nodes[mesh.faces[f]]
    x = verts[0] + t @ (verts[1:] - verts[0])
    E = (X[1:] - X[0]).T
    return np.linalg.solve(E, (x - X[0]).T).T


def face_moment_matrix(ortho: OrthoPolyBasis, face_basis: FaceBasis, s_face: np.ndarray) -> np.ndarray:
    """``G[j, r] = int_face q_j^(f) q_r / |face|`` by the face rule."""
    Qe = evaluate_orthopoly(ortho, s_face)
    w = face_basis.quad.weights
    return face_basis.scale * (face_basis.ortho.Q.T * w[None, :]) @ Qe


def local_beta(elem_basis: DivFreeElemBasis, face_basis: FaceBasis, s_face: np.ndarray,
               normal, measure: float, G: np.ndarray | None = None) -> np.ndarray:
    """``beta[l, j] = -int_face q_j^(f) phi_l . n / |element|`` for one local face.

    ``s_face`` are the face quadrature points in element reference coordinates.
    """
    if G is None:
        G = face_moment_matrix(elem_basis.ortho, face_basis, s_face)
    return _beta_from_moments(elem_basis, G, np.asarray(normal, dtype=float), measure)


def _beta_from_moments(basis: DivFreeElemBasis, G: np.ndarray, normal: np.ndarray,
                       measure: float) -> np.ndarray:
    p = basis.ortho.p
    Ne = basis.Ne
    flux = np.zeros((p, Ne.shape[1]))
    for i in range(basis.dim):
        if normal[i] != 0.0:
            flux += normal[i] * Ne[i * p:(i + 1) * p]
    return -(measure / basis.volume) * (G @ flux).T


def prepare_element(mesh: SimplicialMesh, e: int, basis: DivFreeElemBasis, face_basis: FaceBasis,
                    g: Field | None = None) -> tuple[ElementData, LocalSolution]:
    """Face moments and the full-degree local solution of element ``e``."""
    geom = element_geometry(mesh, e)
    t = face_basis.quad.points
    d = mesh.dim
    faces = mesh.element_faces[e]
    moments = []
    betas = []
    for gl in range(d + 1):
        f = int(faces[gl])
        s = face_reference_points(mesh, f, geom.nodes, t)
        G = face_moment_matrix(basis.ortho, face_basis, s)
        moments.append(G)
        betas.append(_beta_from_moments(basis, G, geom.normals[gl], geom.measures[gl]))
    if g is None:
        alpha = np.zeros(basis.n)
    else:
        alpha = local_alpha(basis, g(element_quadrature_points(basis)))
    data = ElementData(e, basis, geom, faces, tuple(moments))
    local = LocalSolution(e, alpha, np.hstack(betas), geom.volume, basis.offsets, face_basis.offsets)
    return data, local


def build_element_bases(mesh: SimplicialMesh, ref: DivFreeRefBasis, workers: int = 1) -> list[DivFreeElemBasis]:
    return map_elements(lambda e: build_divfree_elem(ref, mesh.element_nodes(e), element=e),
                        range(mesh.n_elements), workers)


def map_elements(fn: Callable[[int], object], elements: Iterable[int], workers: int = 1) -> list:
    """Apply ``fn`` to every element; results keep element order regardless of ``workers``."""
    elements = list(elements)
    if workers <= 1:
        return [fn(e) for e in elements]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, elements))
