"""Element and global matrices of the face-multiplier system, built degree by degree.

Element matrices are Gram matrices ``|element| * B^T B`` of the ``beta``
blocks.  Moving from degree ``k'-1`` to ``k'`` only adds the rows of ``B``
that belong to the new divergence-free functions, so one running sum in the
full-degree face layout serves every degree: the degree-``k'`` matrix is the
sub-block of the first ``m_{k'}`` face functions of each local face.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from ..mesh import SimplicialMesh
from .local import LocalSolution

__all__ = [
    "GlobalSystem",
    "IncrementalElement",
    "element_matrix_incremental",
    "element_matrix_scratch",
    "face_columns",
    "assemble_global",
    "global_dofs",
]


def face_columns(n_local_faces: int, m_full: int, m_sub: int) -> np.ndarray:
    """Columns of the first ``m_sub`` functions of each face in a face-major layout of width ``m_full``."""
    return (np.arange(n_local_faces)[:, None] * m_full + np.arange(m_sub)[None, :]).ravel()


class IncrementalElement:
    """Running partial sums of one element's matrix and vector over divergence-free functions."""

    def __init__(self, local: LocalSolution):
        self.local = local
        width = local.beta.shape[1]
        self._A = np.zeros((width, width))
        self._b = np.zeros(width)
        self.degree = -1

    def advance(self) -> tuple[int, np.ndarray, np.ndarray]:
        """Add the next degree block and return ``(k', A^(e,k'), b^(e,k'))``."""
        loc = self.local
        kp = self.degree + 1
        if kp > loc.degree:
            raise ValueError(f"degree {kp} exceeds the local solution degree {loc.degree}")
        lo = loc.div_offsets[kp - 1] if kp > 0 else 0
        hi = loc.div_offsets[kp]
        Bn = loc.beta[lo:hi]
        self._A += loc.volume * (Bn.T @ Bn)
        self._b += loc.volume * (Bn.T @ loc.alpha[lo:hi])
        self.degree = kp
        cols = face_columns(loc.n_faces, loc.face_offsets[-1], loc.face_offsets[kp])
        return kp, self._A[np.ix_(cols, cols)], self._b[cols]

    def __iter__(self) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
        while self.degree < self.local.degree:
            yield self.advance()


def element_matrix_incremental(local: LocalSolution, kprime: int) -> tuple[np.ndarray, np.ndarray]:
    """Degree-``k'`` element matrix and vector, reached through the degree-by-degree partial sums.

    The vector is ``|element| * sum_l alpha_l beta_l`` (the global right-hand
    side takes its negative).
    """
    if kprime > local.degree or kprime < 0:
        raise ValueError(f"degree {kprime} outside 0..{local.degree}")
    inc = IncrementalElement(local)
    while True:
        kp, A, b = inc.advance()
        if kp == kprime:
            return A, b


def element_matrix_scratch(local: LocalSolution, kprime: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Direct sum over all functions of degree ``<= k'`` (independent of the running sums)."""
    kp = local.degree if kprime is None else kprime
    n = local.div_offsets[kp]
    cols = face_columns(local.n_faces, local.face_offsets[-1], local.face_offsets[kp])
    B = local.beta[:n][:, cols]
    return local.volume * (B.T @ B), local.volume * (B.T @ local.alpha[:n])


@dataclass
class GlobalSystem:
    """Interior-face multiplier system at one degree.

    DOF ``i * m + j`` is coefficient ``j`` of the ``i``-th interior face
    (interior faces in mesh face order).
    """

    degree: int
    m: int
    interior_faces: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    boundary_values: np.ndarray      # (n_faces, m); rows of interior faces unused
    x: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.b.size

    def face_values(self) -> np.ndarray:
        """Multiplier coefficients of every face, boundary data included."""
        vals = np.array(self.boundary_values, dtype=float, copy=True)
        if self.x is not None:
            vals[self.interior_faces] = self.x.reshape(-1, self.m)
        return vals


def global_dofs(mesh: SimplicialMesh, m: int) -> np.ndarray:
    """``(n_faces, m)`` map from face coefficient to global DOF (-1 on boundary faces)."""
    interior = mesh.interior_faces
    dof = np.full((mesh.n_faces, m), -1, dtype=np.int64)
    dof[interior] = np.arange(interior.size * m).reshape(-1, m)
    return dof


def assemble_global(mesh: SimplicialMesh, element_blocks: Sequence[tuple[np.ndarray, np.ndarray]],
                    kprime: int, m: int, boundary_values: np.ndarray | None = None,
                    extra_rhs: np.ndarray | None = None) -> GlobalSystem:
    """Scatter degree-``k'`` element matrices/vectors onto all faces, then eliminate boundary faces.

    ``element_blocks[e] = (A^(e), b^(e))`` in local face-major layout with ``m``
    functions per face.  ``boundary_values`` (``n_faces x m``) hold the known
    multipliers of boundary faces; ``extra_rhs`` (``n_faces x m``) is added
    to the right-hand side before elimination.
    """
    d = mesh.dim
    nf = mesh.n_faces
    if len(element_blocks) != mesh.n_elements:
        raise ValueError(f"expected {mesh.n_elements} element blocks, got {len(element_blocks)}")
    w = (d + 1) * m
    rows, cols, vals = [], [], []
    b_all = np.zeros(nf * m)
    for e, (Ae, be) in enumerate(element_blocks):
        if Ae.shape != (w, w) or be.shape != (w,):
            raise ValueError(f"element {e}: block shape {Ae.shape} does not match {m} functions per face")
        idx = (mesh.element_faces[e][:, None] * m + np.arange(m)[None, :]).ravel()
        rows.append(np.repeat(idx, w))
        cols.append(np.tile(idx, w))
        vals.append(Ae.ravel())
        np.add.at(b_all, idx, -be)
    A_all = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(nf * m, nf * m)).tocsr()
    A_all.sum_duplicates()
    if extra_rhs is not None:
        b_all += np.asarray(extra_rhs, dtype=float).ravel()
    bvals = np.zeros((nf, m)) if boundary_values is None else np.asarray(boundary_values, dtype=float)
    if bvals.shape != (nf, m):
        raise ValueError(f"boundary values must have shape {(nf, m)}, got {bvals.shape}")
    interior = mesh.interior_faces
    boundary = mesh.boundary_faces
    I = (interior[:, None] * m + np.arange(m)[None, :]).ravel()
    B = (boundary[:, None] * m + np.arange(m)[None, :]).ravel()
    A = A_all[I][:, I].tocsr()
    b = b_all[I]
    cb = bvals[boundary].ravel()
    if B.size and np.any(cb != 0.0):
        b = b - A_all[I][:, B] @ cb
    return GlobalSystem(kprime, m, interior, A, b, bvals)
