"""Orthonormal hierarchical divergence-free polynomial bases on simplices and a hybridized mixed solver."""
from .divfree import (DivFreeElemBasis, DivFreeRefBasis, build_divfree_elem, build_divfree_ref,
                      evaluate_divfree, monomial_divfree_oracle, project_l2)
from .diffmat import DerivativeMatrices, simplex_diff
from .mesh import SimplicialMesh, gen_lshape_graded, gen_uniform_square, load_mesh, save_mesh
from .orthopoly import OrthoPolyBasis, build_orthopoly, evaluate_orthopoly
from .quadrature import SimplexQuadrature, gauss_jacobi_01, simplex_rule

__version__ = "0.1.0"

__all__ = [
    "DivFreeElemBasis", "DivFreeRefBasis", "build_divfree_elem", "build_divfree_ref",
    "evaluate_divfree", "monomial_divfree_oracle", "project_l2", "DerivativeMatrices",
    "simplex_diff", "SimplicialMesh", "gen_lshape_graded", "gen_uniform_square", "load_mesh",
    "save_mesh", "OrthoPolyBasis", "build_orthopoly", "evaluate_orthopoly", "SimplexQuadrature",
    "gauss_jacobi_01", "simplex_rule",
]
