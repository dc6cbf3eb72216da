"""Linear solver for the face-multiplier system."""
from __future__ import annotations

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import GlobalSystem

__all__ = ["SolverError", "solve_global", "DENSE_MAX", "CG_RTOL"]

DENSE_MAX = 2000
CG_RTOL = 1e-13


class SolverError(RuntimeError):
    pass


def _block_jacobi(A: sp.csr_matrix, m: int) -> spla.LinearOperator:
    n = A.shape[0]
    nb = n // m
    blocks = np.stack([A[i * m:(i + 1) * m, i * m:(i + 1) * m].toarray() for i in range(nb)])
    try:
        inv = np.linalg.inv(blocks)
    except np.linalg.LinAlgError:
        raise SolverError("singular diagonal block in block-Jacobi preconditioner") from None
    inv = 0.5 * (inv + np.transpose(inv, (0, 2, 1)))

    def apply(v):
        v = np.asarray(v).reshape(nb, m)
        return np.einsum("bij,bj->bi", inv, v).ravel()

    return spla.LinearOperator((n, n), matvec=apply, dtype=float)


def solve_global(system: GlobalSystem) -> np.ndarray:
    """Solve ``A x = b``; dense Cholesky up to ``DENSE_MAX`` unknowns, else block-Jacobi CG.

    Stores the solution on ``system.x`` and returns it.
    """
    A, b = system.A, system.b
    n = b.size
    if n == 0 or not np.any(b):
        x = np.zeros(n)
    elif n <= DENSE_MAX:
        try:
            cf = la.cho_factor(A.toarray(), lower=True, check_finite=True)
        except la.LinAlgError:
            raise SolverError(f"global matrix at degree {system.degree} is not positive definite") from None
        x = la.cho_solve(cf, b)
    else:
        M = _block_jacobi(A, system.m)
        x, info = spla.cg(A, b, rtol=CG_RTOL, atol=0.0, maxiter=10 * n, M=M)
        if info != 0:
            res = np.linalg.norm(A @ x - b) / np.linalg.norm(b)
            raise SolverError(
                f"conjugate gradients did not converge at degree {system.degree} "
                f"({n} unknowns, relative residual {res:.2e})")
    system.x = x
    return x
