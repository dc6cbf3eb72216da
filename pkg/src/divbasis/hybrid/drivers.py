"""End-to-end hybridized solves for every degree ``0..k`` plus post-processing.

One pipeline serves all three problems:

* Helmholtz projection: source ``g``, zero boundary multipliers;
* Laplace: no source, boundary multipliers from the Dirichlet data;
* Poisson: a per-element particular flux carries the divergence ``f`` and
  only adds to the global right-hand side.

Element flux coefficients are reported in the element's ``{q_r e_i}``
basis (``u_q[i, r]``, physical components) and, for the solenoidal part, in
the element's divergence-free basis.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as la

from ..divfree import DivFreeRefBasis, build_divfree_ref
from ..mesh import SimplicialMesh
from ..orthopoly import evaluate_orthopoly
from ..quadrature import simplex_grid, simplex_rule
from .assembly import IncrementalElement, assemble_global, face_columns
from .local import (ElementData, FaceBasis, build_element_bases, build_face_basis,
                    element_quadrature_points, map_elements, prepare_element)
from .solve import solve_global

__all__ = [
    "DegreeResult",
    "HybridSolution",
    "RecoveryError",
    "solve_hybrid",
    "driver_helmholtz",
    "driver_laplace",
    "driver_poisson",
    "recover_scalar",
    "particular_flux",
    "boundary_projection",
    "degree_errors",
    "scalar_at",
    "field_samples",
]

Field = Callable[[np.ndarray], np.ndarray]


class RecoveryError(RuntimeError):
    pass


@dataclass
class DegreeResult:
    degree: int
    ndof: int
    face_values: np.ndarray            # (n_faces, m') multiplier coefficients, boundary included
    u_div: list                        # per element, coefficients in the divergence-free basis
    u_q: list                          # per element, (d, p') coefficients of q_r e_i
    lam: list                          # per element, q-basis coefficients of degree <= k'-1
    recovery_residual: float = 0.0
    timings: dict = field(default_factory=dict)


@dataclass
class HybridSolution:
    problem: str
    mesh: SimplicialMesh
    ref: DivFreeRefBasis
    face_basis: FaceBasis
    elements: list
    locals: list
    degrees: list
    timings: dict
    source_moments: Optional[list] = None     # per element (d, p): d! sum w g_i q_r
    divergence_moments: Optional[list] = None  # per element (p,): d! sum w f q_s

    @property
    def degree(self) -> int:
        return len(self.degrees) - 1


def _moments(data: ElementData, values: np.ndarray) -> np.ndarray:
    """``d! sum_q w_q v(x_q) q_r(x_q)`` for each row of ``values`` (samples at element points)."""
    ortho = data.basis.ortho
    return ortho.scale * (values * ortho.quad.weights[None, :]) @ ortho.Q


def boundary_projection(mesh: SimplicialMesh, face_basis: FaceBasis, lambda_D: Field) -> np.ndarray:
    """Face L2 projection of Dirichlet data on boundary faces, ``(n_faces, m)``.

    Uses a face rule one degree richer than the basis (exact to degree ``2k+2``).
    """
    fb = face_basis.ortho
    rule = simplex_rule(fb.degree + 1, fb.dim)
    Qf = evaluate_orthopoly(fb, rule.points)
    out = np.zeros((mesh.n_faces, fb.p))
    for f in mesh.boundary_faces:
        verts = mesh.nodes[mesh.faces[f]]
        x = verts[0] + rule.points @ (verts[1:] - verts[0])
        vals = np.asarray(lambda_D(x), dtype=float)
        out[f] = fb.scale * (Qf.T @ (rule.weights * vals))
    return out


def _q_columns(d: int, p: int, pk: int) -> np.ndarray:
    return (np.arange(d)[:, None] * p + np.arange(pk)[None, :]).ravel()


def particular_flux(data: ElementData, f_moments: np.ndarray, kprime: int) -> np.ndarray:
    """Minimum-norm ``{q_r e_i}`` flux of degree ``k'`` whose divergence is the projection of ``f``.

    Being minimal in the element L2 norm, it is orthogonal to every
    divergence-free field of degree ``k'``.  Returns ``(d, p')``.
    """
    ortho = data.basis.ortho
    d, p = ortho.dim, ortho.p
    offs = ortho.degree_offsets
    pk = offs[kprime]
    pl = offs[kprime - 1] if kprime > 0 else 0
    if pl == 0:
        return np.zeros((d, pk))
    M = data.basis.element_constraints()[:pl][:, _q_columns(d, p, pk)]
    Qm, R = la.qr(M.T, mode="economic")
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-12 * diag.max():
        raise RecoveryError(
            f"element {data.element}: divergence moment system is rank deficient at degree {kprime}")
    a = Qm @ la.solve_triangular(R.T, f_moments[:pl], lower=True)
    return a.reshape(d, pk)


def recover_scalar(data: ElementData, u_q: np.ndarray, face_values: np.ndarray,
                   g_moments: Optional[np.ndarray], kprime: int) -> tuple[np.ndarray, float]:
    """Element scalar of degree ``k'-1`` from the flux equation tested with every ``q_r e_i``.

    Solves ``<lambda, div v> = <u - g, v> + sum_faces <lambda_hat, v.n>`` in the
    least-squares sense; returns the q-basis coefficients and the relative residual.
    ``face_values`` is ``(d+1, m')`` in local face order.
    """
    ortho = data.basis.ortho
    d, p = ortho.dim, ortho.p
    offs = ortho.degree_offsets
    pk = offs[kprime]
    pl = offs[kprime - 1] if kprime > 0 else 0
    if pl == 0:
        return np.zeros(0), 0.0
    vol = data.volume
    geom = data.geometry
    m = face_values.shape[1]
    rhs = u_q[:, :pk].copy()
    if g_moments is not None:
        rhs -= g_moments[:, :pk]
    rhs *= vol
    # residuals are judged against the largest term, not the (possibly cancelling) sum
    scale = vol * max(np.abs(u_q).max(), 0.0 if g_moments is None else np.abs(g_moments[:, :pk]).max())
    for gl in range(d + 1):
        face_term = geom.measures[gl] * (data.face_moments[gl][:m, :pk].T @ face_values[gl])
        term = geom.normals[gl][:, None] * face_term[None, :]
        scale = max(scale, np.abs(term).max())
        rhs += term
    rhs = rhs.ravel()
    M = vol * data.basis.element_constraints()[:pl][:, _q_columns(d, p, pk)].T
    mu, _, rank, _ = la.lstsq(M, rhs)
    if rank < pl:
        raise RecoveryError(
            f"element {data.element}: scalar moment system has rank {rank} < {pl} at degree {kprime}")
    scale = max(scale, np.finfo(float).tiny)
    return mu, float(np.abs(M @ mu - rhs).max() / scale)


def solve_hybrid(mesh: SimplicialMesh, k: int, *, g: Optional[Field] = None,
                 lambda_D: Optional[Field] = None, f: Optional[Field] = None,
                 ref: Optional[DivFreeRefBasis] = None, workers: int = 1,
                 recover: bool = True, problem: str = "hybrid") -> HybridSolution:
    """Solve at every degree ``0..k`` reusing one full-degree set of element data."""
    d = mesh.dim
    if k < 0:
        raise ValueError(f"degree must be non-negative, got {k}")
    timings: dict = {}
    t = time.perf_counter()
    if ref is None:
        ref = build_divfree_ref(k=k, d=d)
    elif ref.dim != d or ref.degree != k:
        raise ValueError(f"reference basis is (d={ref.dim}, k={ref.degree}), need (d={d}, k={k})")
    face_basis = build_face_basis(k, d)
    timings["reference_basis"] = time.perf_counter() - t

    t = time.perf_counter()
    bases = build_element_bases(mesh, ref, workers)
    timings["element_bases"] = time.perf_counter() - t

    t = time.perf_counter()
    prepared = map_elements(lambda e: prepare_element(mesh, e, bases[e], face_basis, g),
                            range(mesh.n_elements), workers)
    elements = [pe[0] for pe in prepared]
    locals_ = [pe[1] for pe in prepared]
    g_mom = None
    if g is not None:
        g_mom = [_moments(el, np.asarray(g(element_quadrature_points(el.basis))).reshape(d, -1))
                 for el in elements]
    f_mom = None
    if f is not None:
        f_mom = [_moments(el, np.asarray(f(element_quadrature_points(el.basis)))[None, :])[0]
                 for el in elements]
    bvals = np.zeros((mesh.n_faces, face_basis.m))
    if lambda_D is not None:
        bvals = boundary_projection(mesh, face_basis, lambda_D)
    timings["locals"] = time.perf_counter() - t

    incs = [IncrementalElement(loc) for loc in locals_]
    noffs = ref.offsets
    foffs = face_basis.offsets
    p = ref.ortho.p
    degrees = []
    for kp in range(k + 1):
        dt: dict = {}
        t = time.perf_counter()
        blocks = [inc.advance()[1:] for inc in incs]
        mk = foffs[kp]
        pk = ref.ortho.degree_offsets[kp]
        extra = None
        part = None
        if f_mom is not None:
            part = [particular_flux(el, fm, kp) for el, fm in zip(elements, f_mom)]
            extra = np.zeros((mesh.n_faces, mk))
            for el, a in zip(elements, part):
                geom = el.geometry
                for gl in range(d + 1):
                    flux = (el.face_moments[gl][:mk, :pk] @ a.T) @ geom.normals[gl]
                    extra[el.faces[gl]] += geom.measures[gl] * flux
        system = assemble_global(mesh, blocks, kp, mk, bvals[:, :mk], extra)
        dt["assembly"] = time.perf_counter() - t

        t = time.perf_counter()
        solve_global(system)
        dt["solve"] = time.perf_counter() - t

        t = time.perf_counter()
        fv = system.face_values()
        cols = face_columns(d + 1, face_basis.m, mk)
        n_k = noffs[kp]
        u_div, u_q, lam = [], [], []
        resid = 0.0
        for idx, (el, loc) in enumerate(zip(elements, locals_)):
            c_loc = fv[el.faces]
            ud = loc.alpha[:n_k] + loc.beta[:n_k][:, cols] @ c_loc.ravel()
            uq = (el.basis.Ne[:, :n_k] @ ud).reshape(d, p)[:, :pk]
            if part is not None:
                uq = uq + part[idx]
            u_div.append(ud)
            u_q.append(uq)
            if recover:
                mu, r = recover_scalar(el, uq, c_loc, None if g_mom is None else g_mom[idx], kp)
                lam.append(mu)
                resid = max(resid, r)
        dt["recovery"] = time.perf_counter() - t
        degrees.append(DegreeResult(kp, system.size, fv, u_div, u_q, lam, resid, dt))

    return HybridSolution(problem, mesh, ref, face_basis, elements, locals_, degrees, timings,
                          g_mom, f_mom)


def driver_helmholtz(mesh: SimplicialMesh, g: Field, k: int, **kw) -> HybridSolution:
    """Split ``g`` into a solenoidal part and a gradient with zero boundary potential."""
    return solve_hybrid(mesh, k, g=g, problem="helmholtz", **kw)


def driver_laplace(mesh: SimplicialMesh, lambda_D: Field, k: int, **kw) -> HybridSolution:
    return solve_hybrid(mesh, k, lambda_D=lambda_D, problem="laplace", **kw)


def driver_poisson(mesh: SimplicialMesh, f: Field, k: int, **kw) -> HybridSolution:
    """``u = -grad(lambda)``, ``div u = f``, ``lambda = 0`` on the boundary."""
    return solve_hybrid(mesh, k, f=f, problem="poisson", **kw)


# -- post-processing ---------------------------------------------------------------

def default_grid(d: int) -> np.ndarray:
    """1600 points per triangle, 8000 per tetrahedron."""
    return simplex_grid(40 if d == 2 else 20, d)


def field_samples(sol: HybridSolution, kprime: int, grid: np.ndarray | None = None):
    """Yield ``(element, physical points, u values (npts, d), scalar values or None)``."""
    d = sol.mesh.dim
    grid = default_grid(d) if grid is None else grid
    ortho = sol.ref.ortho
    Qg = evaluate_orthopoly(ortho, grid, ncols=ortho.degree_offsets[kprime])
    res = sol.degrees[kprime]
    pl = ortho.degree_offsets[kprime - 1] if kprime > 0 else 0
    for e, el in enumerate(sol.elements):
        x = el.basis.to_physical(grid)
        u = Qg @ res.u_q[e].T
        lam = Qg[:, :pl] @ res.lam[e] if res.lam and pl else None
        yield e, x, u, lam


def degree_errors(sol: HybridSolution, u_exact: Optional[Field] = None,
                  lam_exact: Optional[Field] = None, grid: np.ndarray | None = None) -> list[dict]:
    """Per degree: max flux error per component, scalar error, divergence-moment and flux-jump residuals."""
    d = sol.mesh.dim
    grid = default_grid(d) if grid is None else grid
    ortho = sol.ref.ortho
    p = ortho.p
    offs = ortho.degree_offsets
    exact_u = None
    exact_lam = None
    if u_exact is not None or lam_exact is not None:
        pts = [el.basis.to_physical(grid) for el in sol.elements]
        if u_exact is not None:
            exact_u = [np.asarray(u_exact(x)).reshape(d, -1).T for x in pts]
        if lam_exact is not None:
            exact_lam = [np.asarray(lam_exact(x)) for x in pts]
    Qg_full = evaluate_orthopoly(ortho, grid)
    rows = []
    for res in sol.degrees:
        kp = res.degree
        pk = offs[kp]
        pl = offs[kp - 1] if kp > 0 else 0
        mk = sol.face_basis.offsets[kp]
        Qg = Qg_full[:, :pk]
        err_u = np.zeros(d)
        err_lam = 0.0
        cons = 0.0
        for e, el in enumerate(sol.elements):
            uq = res.u_q[e]
            if exact_u is not None:
                err_u = np.maximum(err_u, np.abs(Qg @ uq.T - exact_u[e]).max(axis=0))
            if exact_lam is not None and pl and res.lam:
                err_lam = max(err_lam, float(np.abs(Qg[:, :pl] @ res.lam[e] - exact_lam[e]).max()))
            if pl:
                M = el.basis.element_constraints()[:pl][:, _q_columns(d, p, pk)]
                target = sol.divergence_moments[e][:pl] if sol.divergence_moments is not None else 0.0
                cons = max(cons, float(np.abs(M @ uq.ravel() - target).max()))
        jump = np.zeros((sol.mesh.n_faces, mk))
        for e, el in enumerate(sol.elements):
            geom = el.geometry
            for gl in range(d + 1):
                jump[el.faces[gl]] += (el.face_moments[gl][:mk, :pk] @ res.u_q[e].T) @ geom.normals[gl]
        interior = sol.mesh.interior_faces
        rows.append({
            "degree": kp,
            "ndof": res.ndof,
            "err_u": err_u if exact_u is not None else np.full(d, np.nan),
            "err_lambda": err_lam if exact_lam is not None and kp > 0 else float("nan"),
            "constraint": cons,
            "flux_jump": float(np.abs(jump[interior]).max()) if interior.size else 0.0,
            "recovery_residual": res.recovery_residual,
        })
    return rows


def scalar_at(sol: HybridSolution, kprime: int, x) -> float:
    """Recovered scalar of degree ``k'`` at one physical point."""
    if kprime < 1:
        raise ValueError("the scalar exists from degree 1 on")
    e, s = sol.mesh.locate(x)
    ortho = sol.ref.ortho
    pl = ortho.degree_offsets[kprime - 1]
    vals = evaluate_orthopoly(ortho, s[None, :], ncols=pl)[0]
    return float(vals @ sol.degrees[kprime].lam[e])
