"""Hybridized mixed solver built on the divergence-free element bases."""
from .assembly import (GlobalSystem, IncrementalElement, assemble_global, element_matrix_incremental,
                       element_matrix_scratch)
from .drivers import (DegreeResult, HybridSolution, degree_errors, driver_helmholtz, driver_laplace,
                      driver_poisson, recover_scalar, scalar_at, solve_hybrid)
from .local import FaceBasis, LocalSolution, build_face_basis, local_alpha, local_beta, prepare_element
from .solve import SolverError, solve_global

__all__ = [
    "GlobalSystem", "IncrementalElement", "assemble_global", "element_matrix_incremental",
    "element_matrix_scratch", "DegreeResult", "HybridSolution", "degree_errors", "driver_helmholtz",
    "driver_laplace", "driver_poisson", "recover_scalar", "scalar_at", "solve_hybrid", "FaceBasis",
    "LocalSolution", "build_face_basis", "local_alpha", "local_beta", "prepare_element",
    "SolverError", "solve_global",
]
