"""Experiment runners that produce per-degree convergence rows."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .divfree import (DivFreeRefBasis, build_divfree_elem, build_divfree_ref, evaluate_divfree,
                      evaluate_monomial_fields, monomial_divfree_oracle, project_l2)
from .hybrid.drivers import HybridSolution, degree_errors, field_samples, scalar_at, solve_hybrid
from .mesh import SimplicialMesh
from .problems import (PROJECTION_TRIANGLE, Problem, corner_lshape, helmholtz_cube, helmholtz_hull2d,
                       helmholtz_square, laplace_square, poisson_square, taylor_green, taylor_green_4)
from .quadrature import simplex_grid, simplex_rule

__all__ = [
    "ExperimentResult",
    "EXPERIMENTS",
    "run_projection",
    "run_conditioning",
    "run_hybrid",
    "run_corner",
    "monomial_projection_error",
    "arnoldi_projection_errors",
    "uniform_triangle_grid",
]

CORNER_POINT = (0.99, 0.99)


@dataclass
class ExperimentResult:
    name: str
    columns: list
    rows: list
    timings: dict = field(default_factory=dict)
    field_columns: list = field(default_factory=list)
    field_rows: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)


def uniform_triangle_grid(n: int) -> np.ndarray:
    """``n * n`` points of the unit triangle: a uniform square grid collapsed by the Duffy map."""
    return simplex_grid(n, 2)


def _component_errors(vals: np.ndarray, exact: np.ndarray, d: int) -> np.ndarray:
    return np.abs(vals - exact).reshape(d, -1).max(axis=1)


def run_projection(k: int = 20, ref: Optional[DivFreeRefBasis] = None, grid_n: int = 50) -> ExperimentResult:
    """L2 projection of the Taylor-Green field onto one affine triangle, every degree ``0..k``."""
    t0 = time.perf_counter()
    ref = build_divfree_ref(k=k, d=2) if ref is None else ref
    t1 = time.perf_counter()
    elem = build_divfree_elem(ref, PROJECTION_TRIANGLE)
    coef = project_l2(elem, taylor_green(elem.to_physical(ref.ortho.quad.points)))
    s = uniform_triangle_grid(grid_n)
    x = elem.to_physical(s)
    V = evaluate_divfree(elem, s)
    exact = taylor_green(x)
    Ce = elem.element_constraints()
    rows = []
    for j, nj in enumerate(ref.offsets):
        vals = V[:, :nj] @ coef[:nj]
        err = _component_errors(vals, exact, 2)
        cons = float(np.abs(Ce @ (elem.Ne[:, :nj] @ coef[:nj])).max()) if Ce.size else 0.0
        rows.append([j, nj, err[0], err[1], cons])
    t2 = time.perf_counter()
    vals = (V @ coef).reshape(2, -1).T
    return ExperimentResult(
        "projection", ["degree", "n_functions", "err_u_x", "err_u_y", "constraint_err"], rows,
        {"reference_basis": t1 - t0, "projection": t2 - t1},
        ["x", "y", "u_x", "u_y"], np.column_stack([x, vals]))


def monomial_projection_error(k: int, field_fn: Callable, grid: np.ndarray) -> float:
    """Max error of the Gram-matrix L2 projection onto the monomial divergence-free fields of degree ``k``."""
    quad = simplex_rule(k, 2)
    fields = monomial_divfree_oracle(k, 2)
    P = evaluate_monomial_fields(fields, quad.points)
    wd = np.tile(quad.weights, 2)
    gram = P.T @ (wd[:, None] * P)
    rhs = P.T @ (wd * field_fn(quad.points))
    try:
        c = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        c = np.linalg.lstsq(gram, rhs, rcond=None)[0]
    vals = evaluate_monomial_fields(fields, grid) @ c
    return float(np.abs(vals - field_fn(grid)).max())


def arnoldi_projection_errors(k: int, field_fn: Callable, grid: np.ndarray,
                              ref: Optional[DivFreeRefBasis] = None) -> list[float]:
    """Max projection error at every degree ``0..k`` from one hierarchical projection."""
    ref = build_divfree_ref(k=k, d=2) if ref is None else ref
    coef = project_l2(ref, field_fn(ref.ortho.quad.points))
    V = evaluate_divfree(ref, grid)
    exact = field_fn(grid)
    return [float(np.abs(V[:, :nj] @ coef[:nj] - exact).max()) for nj in ref.offsets]


def run_conditioning(k: int = 30, ref: Optional[DivFreeRefBasis] = None, grid_n: int = 50,
                     monomial_max: Optional[int] = None) -> ExperimentResult:
    """Projection of a high-frequency Taylor-Green field: monomial fields versus the orthonormal basis."""
    grid = uniform_triangle_grid(grid_n)
    t0 = time.perf_counter()
    arn = arnoldi_projection_errors(k, taylor_green_4, grid, ref)
    t1 = time.perf_counter()
    top = k if monomial_max is None else min(k, monomial_max)
    mono = [monomial_projection_error(j, taylor_green_4, grid) if j <= top else float("nan")
            for j in range(k + 1)]
    t2 = time.perf_counter()
    rows = [[j, a, m] for j, (a, m) in enumerate(zip(arn, mono))]
    return ExperimentResult("conditioning", ["degree", "err_orthonormal", "err_monomial"], rows,
                            {"orthonormal": t1 - t0, "monomial": t2 - t1})


def default_problem(name: str, mesh: SimplicialMesh, spec: str) -> Problem:
    if name == "helmholtz":
        if mesh.dim == 3:
            return helmholtz_cube()
        return helmholtz_hull2d() if spec == "hull2d" else helmholtz_square()
    if name == "laplace":
        return laplace_square()
    if name == "poisson":
        return poisson_square()
    if name == "corner":
        return corner_lshape()
    raise KeyError(name)


def _hybrid_fields(sol: HybridSolution, grid_n: int) -> tuple[list, np.ndarray]:
    d = sol.mesh.dim
    kp = sol.degree
    grid = simplex_grid(grid_n, d)
    chunks = []
    for e, x, u, lam in field_samples(sol, kp, grid):
        lam = np.full(len(x), np.nan) if lam is None else lam
        chunks.append(np.column_stack([np.full(len(x), e), x, u, lam]))
    axes = "xyz"[:d]
    cols = ["element"] + list(axes) + [f"u_{a}" for a in axes] + ["lambda"]
    return cols, np.vstack(chunks)


def _phase_timings(sol: HybridSolution) -> dict:
    out = dict(sol.timings)
    for res in sol.degrees:
        for phase, sec in res.timings.items():
            out[phase] = out.get(phase, 0.0) + sec
    return out


def run_hybrid(name: str, mesh: SimplicialMesh, k: int, spec: str = "",
               ref: Optional[DivFreeRefBasis] = None, dump_n: int = 6) -> ExperimentResult:
    prob = default_problem(name, mesh, spec)
    sol = solve_hybrid(mesh, k, g=prob.g, lambda_D=prob.lambda_D, f=prob.f, ref=ref, problem=name)
    rows_d = degree_errors(sol, prob.u, prob.lam)
    d = mesh.dim
    axes = "xyz"[:d]
    cols = (["degree", "ndof"] + [f"err_u_{a}" for a in axes]
            + ["err_lambda", "constraint_err", "flux_jump"])
    rows = [[r["degree"], r["ndof"], *r["err_u"], r["err_lambda"], r["constraint"], r["flux_jump"]]
            for r in rows_d]
    fcols, frows = _hybrid_fields(sol, dump_n)
    return ExperimentResult(name, cols, rows, _phase_timings(sol), fcols, frows,
                            {"elements": mesh.n_elements, "interior_faces": int(mesh.interior_faces.size)})


def run_corner(mesh: SimplicialMesh, k: int = 8, ref: Optional[DivFreeRefBasis] = None,
               dump_n: int = 4) -> ExperimentResult:
    """Scalar near the re-entrant corner at every degree and its change from the previous degree."""
    prob = corner_lshape()
    sol = solve_hybrid(mesh, k, lambda_D=prob.lambda_D, ref=ref, problem="corner")
    rows = []
    prev = float("nan")
    for kp in range(1, k + 1):
        val = scalar_at(sol, kp, CORNER_POINT)
        rows.append([kp, sol.degrees[kp].ndof, val, abs(val - prev)])
        prev = val
    fcols, frows = _hybrid_fields(sol, dump_n)
    return ExperimentResult("corner", ["degree", "ndof", "lambda_at_point", "change"], rows,
                            _phase_timings(sol), fcols, frows,
                            {"elements": mesh.n_elements, "point": CORNER_POINT})


EXPERIMENTS = ("projection", "helmholtz", "laplace", "poisson", "corner", "conditioning")
