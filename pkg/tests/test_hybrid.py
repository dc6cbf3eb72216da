import numpy as np
import pytest
import scipy.sparse as sp

from divbasis.divfree import build_divfree_elem, build_divfree_ref, evaluate_divfree
from divbasis.hybrid import (GlobalSystem, IncrementalElement, SolverError, assemble_global,
                             build_face_basis, element_matrix_incremental, element_matrix_scratch,
                             local_alpha, prepare_element, solve_global, solve_hybrid)
from divbasis.hybrid.drivers import (degree_errors, driver_helmholtz, driver_laplace,
                                     driver_poisson, field_samples, scalar_at)
from divbasis.hybrid.local import element_quadrature_points, face_reference_points
from divbasis.mesh import element_geometry, gen_uniform_square, load_fixture
from divbasis.problems import (helmholtz_hull2d, helmholtz_square, laplace_square,
                               poisson_square, taylor_green)


@pytest.fixture(scope="module")
def square8():
    return gen_uniform_square(2)


@pytest.fixture(scope="module")
def helmholtz20(square8):
    prob = helmholtz_square()
    return prob, driver_helmholtz(square8, prob.g, 20)


@pytest.fixture(scope="module")
def prepared(square8):
    ref = build_divfree_ref(k=6, d=2)
    fb = build_face_basis(6, 2)
    out = []
    for e in range(square8.n_elements):
        el = build_divfree_elem(ref, square8.element_nodes(e), e)
        out.append(prepare_element(square8, e, el, fb, helmholtz_square().g))
    return ref, fb, out


def slope_fit(degrees, errors):
    y = np.log10(errors)
    A = np.column_stack([degrees, np.ones(len(degrees))])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    r2 = 1 - resid @ resid / ((y - y.mean()) @ (y - y.mean()))
    return coef[0], r2


def test_face_basis_sizes():
    assert build_face_basis(5, 2).m == 6
    assert build_face_basis(4, 3).m == 15
    with pytest.raises(ValueError):
        build_face_basis(3, 1)


def test_alpha_of_basis_function_is_unit_vector(prepared):
    _, _, out = prepared
    data, _ = out[3]
    el = data.basis
    a = local_alpha(el, el.Qd[:, 11])
    assert a[11] == pytest.approx(1.0, abs=1e-13)
    assert np.abs(np.delete(a, 11)).max() <= 1e-13
    assert np.all(local_alpha(el, np.zeros(el.Qd.shape[0])) == 0.0)


def test_alpha_truncation_matches_lower_degree_build(square8):
    # both projections use the top-degree rule, so only the basis degree differs
    X = square8.element_nodes(5)
    top = build_divfree_elem(build_divfree_ref(k=8, d=2), X)
    quad = top.ortho.quad
    g = taylor_green(element_quadrature_points(top))
    wd = np.tile(quad.weights, 2)
    a_top = local_alpha(top, g)
    pts = np.random.default_rng(0).dirichlet(np.ones(3), size=40)[:, :2]
    V_top = evaluate_divfree(top, pts)
    for j in (2, 5):
        low = build_divfree_elem(build_divfree_ref(k=j, d=2), X)
        Vq = evaluate_divfree(low, quad.points)
        a_low = 2.0 * (Vq.T @ (wd * g))
        nj = low.n
        np.testing.assert_allclose(V_top[:, :nj] @ a_top[:nj], evaluate_divfree(low, pts) @ a_low,
                                   rtol=0, atol=1e-12)


def test_beta_on_constant_fields(prepared):
    ref, _, out = prepared
    data, loc = out[0]
    p = ref.ortho.p
    geom = data.geometry
    Phi0 = np.vstack([data.basis.Ne[i * p, :2] for i in range(2)])  # constant fields
    for g in range(3):
        want = -(geom.measures[g] / geom.volume) * (geom.normals[g] @ Phi0)
        np.testing.assert_allclose(loc.beta_block(g)[:2, 0], want, atol=1e-13)


def test_beta_divergence_theorem(prepared):
    _, _, out = prepared
    for _, loc in out:
        total = sum(loc.beta_block(g)[:, 0] for g in range(3))
        assert np.abs(total).max() <= 1e-12 * np.abs(loc.beta).max()


def test_face_points_shared_between_neighbours(square8):
    fb = build_face_basis(6, 2)
    t = fb.quad.points
    for f in square8.interior_faces:
        pts = []
        for e in square8.face_elements[f]:
            X = square8.element_nodes(e)
            s = face_reference_points(square8, f, X, t)
            pts.append(X[0] + s @ (X[1:] - X[0]))
        assert np.abs(pts[0] - pts[1]).max() <= 1e-14


def test_incremental_matches_scratch(prepared):
    _, _, out = prepared
    for _, loc in out:
        for kp in range(loc.degree + 1):
            A1, b1 = element_matrix_incremental(loc, kp)
            A2, b2 = element_matrix_scratch(loc, kp)
            assert np.abs(A1 - A2).max() <= 1e-12 * np.abs(A2).max()
            assert np.abs(b1 - b2).max() <= 1e-12 * max(np.abs(b2).max(), 1e-300)
            assert np.abs(A1 - A1.T).max() <= 1e-12 * np.abs(A1).max()
            assert np.linalg.eigvalsh(A1).min() >= -1e-12 * np.abs(A1).max()


def test_incremental_iterates_every_degree(prepared):
    _, _, out = prepared
    loc = out[0][1]
    seen = [kp for kp, _, _ in IncrementalElement(loc)]
    assert seen == list(range(loc.degree + 1))
    full_A, _ = element_matrix_incremental(loc, loc.degree)
    A2 = element_matrix_scratch(loc)[0]
    assert np.abs(full_A - A2).max() <= 1e-13 * np.abs(A2).max()
    with pytest.raises(ValueError):
        element_matrix_incremental(loc, loc.degree + 1)


def test_single_interior_face_against_dense_oracle():
    mesh = gen_uniform_square(1)
    ref = build_divfree_ref(k=2, d=2)
    fb = build_face_basis(2, 2)
    prob = helmholtz_square()
    locs = [prepare_element(mesh, e, build_divfree_elem(ref, mesh.element_nodes(e), e), fb, prob.g)[1]
            for e in range(2)]
    blocks = [element_matrix_incremental(loc, 0) for loc in locs]
    sys0 = assemble_global(mesh, blocks, 0, 1)
    assert sys0.A.shape == (1, 1)
    # brute force: dense matrix over all faces, then keep the interior row
    nf = mesh.n_faces
    Afull = np.zeros((nf, nf))
    bfull = np.zeros(nf)
    for e, (Ae, be) in enumerate(blocks):
        idx = mesh.element_faces[e]
        Afull[np.ix_(idx, idx)] += Ae
        bfull[idx] -= be
    f = mesh.interior_faces[0]
    assert sys0.A.toarray()[0, 0] == pytest.approx(Afull[f, f], rel=1e-14)
    assert sys0.b[0] == pytest.approx(bfull[f], rel=1e-14, abs=1e-300)
    x = solve_global(sys0)
    assert x[0] == pytest.approx(bfull[f] / Afull[f, f], rel=1e-13, abs=1e-300)


def test_global_sparsity_matches_face_adjacency(square8, prepared):
    _, fb, out = prepared
    for kp in (0, 3):
        blocks = [element_matrix_incremental(loc, kp) for _, loc in out]
        m = fb.offsets[kp]
        sysk = assemble_global(square8, blocks, kp, m)
        interior = square8.interior_faces
        share = np.zeros((interior.size, interior.size), dtype=bool)
        for a, fa in enumerate(interior):
            for b, fb_ in enumerate(interior):
                share[a, b] = bool(set(square8.face_elements[fa]) & set(square8.face_elements[fb_]) - {-1})
        A = sysk.A.toarray()
        blocknz = np.abs(A).reshape(interior.size, m, interior.size, m).max(axis=(1, 3)) > 0
        # coupling may cancel exactly (perpendicular legs at degree 0) but never appears unshared
        assert not np.any(blocknz & ~share)
        if kp == 3:
            np.testing.assert_array_equal(blocknz, share)
        assert np.abs(A - A.T).max() <= 1e-12 * np.abs(A).max()
        assert np.linalg.eigvalsh(A).min() > 0


def test_zero_data_gives_zero_rhs_and_solution(square8):
    sol = solve_hybrid(square8, 4)
    for res in sol.degrees:
        assert np.all(res.face_values == 0.0)
        assert all(np.all(u == 0.0) for u in res.u_q)


def test_assemble_rejects_bad_blocks(square8, prepared):
    _, _, out = prepared
    blocks = [element_matrix_incremental(loc, 1) for _, loc in out]
    with pytest.raises(ValueError):
        assemble_global(square8, blocks[:-1], 1, 2)
    with pytest.raises(ValueError):
        assemble_global(square8, blocks, 1, 3)


def _system(A, m=1):
    n = A.shape[0]
    b = np.random.default_rng(1).standard_normal(n)
    return GlobalSystem(0, m, np.arange(n // m), sp.csr_matrix(A), b, np.zeros((n // m, m)))


def test_solver_dense_spd():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((60, 60))
    s = _system(M @ M.T + 60 * np.eye(60), m=3)
    x = solve_global(s)
    assert np.linalg.norm(s.A @ x - s.b) / np.linalg.norm(s.b) <= 1e-12


def test_solver_cg_path():
    rng = np.random.default_rng(0)
    n, m = 2400, 4
    blocks = []
    for _ in range(n // m):
        B = rng.standard_normal((m, m))
        blocks.append(B @ B.T + m * np.eye(m))
    A = sp.block_diag(blocks) + sp.diags([-0.3, -0.3], [-m, m], shape=(n, n))
    s = _system(A.toarray(), m)
    x = solve_global(s)
    assert np.linalg.norm(s.A @ x - s.b) / np.linalg.norm(s.b) <= 1e-12


def test_solver_zero_rhs_and_non_spd():
    s = _system(np.eye(3))
    s.b = np.zeros(3)
    assert np.all(solve_global(s) == 0.0)
    with pytest.raises(SolverError):
        solve_global(_system(np.diag([1.0, -1.0, 2.0])))


def test_helmholtz_degree_20(helmholtz20):
    prob, sol = helmholtz20
    rows = degree_errors(sol, prob.u, prob.lam)
    assert max(rows[20]["err_u"]) <= 1e-13
    slope, r2 = slope_fit(range(2, 13), [max(r["err_u"]) for r in rows[2:13]])
    assert slope < 0 and r2 >= 0.95
    lam_err = [r["err_lambda"] for r in rows[1:]]
    assert lam_err[-1] <= 1e-12 and lam_err[-1] < lam_err[2] * 1e-6
    for r in rows:
        assert r["flux_jump"] <= 1e-11 * max(1.0, max(r["err_u"]))
        assert r["constraint"] <= 1e-11
        assert r["recovery_residual"] <= 1e-10


def test_solution_is_alpha_plus_beta_c(helmholtz20):
    _, sol = helmholtz20
    kp = 7
    res = sol.degrees[kp]
    n = sol.ref.offsets[kp]
    m_full = sol.face_basis.m
    mk = sol.face_basis.offsets[kp]
    for e, (el, loc) in enumerate(zip(sol.elements, sol.locals)):
        c = res.face_values[el.faces][:, :mk]
        B = np.hstack([loc.beta[:n, g * m_full:g * m_full + mk] for g in range(3)])
        np.testing.assert_allclose(res.u_div[e], loc.alpha[:n] + B @ c.ravel(), atol=1e-14)


def test_helmholtz_field_is_pointwise_divergence_free(helmholtz20):
    _, sol = helmholtz20
    h = 1e-6
    ortho = sol.ref.ortho
    pts = np.random.default_rng(4).dirichlet(np.ones(3), size=30)[:, :2]
    from divbasis.orthopoly import evaluate_orthopoly
    for e, el in enumerate(sol.elements):
        uq = sol.degrees[10].u_q[e]
        pk = uq.shape[1]
        x = el.basis.to_physical(pts)
        div = np.zeros(len(pts))
        for i in range(2):
            dx = np.zeros(2)
            dx[i] = h
            up = evaluate_orthopoly(ortho, el.basis.to_reference(x + dx), pk) @ uq[i]
            um = evaluate_orthopoly(ortho, el.basis.to_reference(x - dx), pk) @ uq[i]
            div += (up - um) / (2 * h)
        scale = np.abs(evaluate_orthopoly(ortho, pts, pk) @ uq.T).max()
        assert np.abs(div).max() <= 1e-5 * max(scale, 1.0)


def test_laplace_convergence(square8):
    prob = laplace_square()
    sol = driver_laplace(square8, prob.lambda_D, 15)
    rows = degree_errors(sol, prob.u, prob.lam)
    assert max(rows[15]["err_u"]) <= 1e-10
    assert rows[15]["err_lambda"] <= 1e-10
    slope, r2 = slope_fit(range(2, 13), [max(r["err_u"]) for r in rows[2:13]])
    assert slope < 0 and r2 >= 0.95


def test_laplace_constant_data(square8):
    sol = driver_laplace(square8, lambda x: np.full(len(x), 3.0), 4)
    for kp, res in enumerate(sol.degrees):
        assert max(np.abs(u).max() for u in res.u_q) <= 1e-12
        if kp:
            assert scalar_at(sol, kp, (0.3, 0.6)) == pytest.approx(3.0, abs=1e-11)


def test_laplace_recovers_polynomial_scalar_exactly(square8):
    def lam(x):
        return x[:, 0] ** 2 - x[:, 1] ** 2 + 0.5 * x[:, 0] * x[:, 1]
    sol = driver_laplace(square8, lam, 4)
    rows = degree_errors(sol, lambda x: np.concatenate([-(2 * x[:, 0] + 0.5 * x[:, 1]),
                                                        2 * x[:, 1] - 0.5 * x[:, 0]]), lam)
    for kp in (3, 4):
        assert rows[kp]["err_lambda"] <= 1e-11
        assert max(rows[kp]["err_u"]) <= 1e-11


def test_poisson_convergence_and_divergence(square8):
    prob = poisson_square()
    sol = driver_poisson(square8, prob.f, 17)
    rows = degree_errors(sol, prob.u, prob.lam)
    assert max(rows[17]["err_u"]) <= 1e-10
    assert all(r["constraint"] <= 1e-11 * 2 * (2 * np.pi) ** 2 for r in rows)
    slope, r2 = slope_fit(range(2, 13), [max(r["err_u"]) for r in rows[2:13]])
    assert slope < 0 and r2 >= 0.95


def test_poisson_zero_source(square8):
    sol = driver_poisson(square8, lambda x: np.zeros(len(x)), 3)
    for res in sol.degrees:
        assert max(np.abs(u).max() for u in res.u_q) == 0.0


def test_polynomial_divergence_free_source_has_no_potential():
    mesh = load_fixture("hull2d")
    sol = driver_helmholtz(mesh, lambda x: np.concatenate([x[:, 1] ** 2, x[:, 0] ** 3]), 4)
    for res in sol.degrees[3:]:
        scale = max(np.abs(u).max() for u in res.u_q)
        assert np.abs(res.face_values).max() <= 1e-12 * scale
        assert max(np.abs(l).max() for l in res.lam) <= 1e-12 * scale


def test_divergence_free_source_potential_decays():
    mesh = load_fixture("hull2d")
    prob = helmholtz_hull2d()
    sol = driver_helmholtz(mesh, prob.g, 8)
    top = [np.abs(res.face_values).max() for res in sol.degrees]
    assert top[8] < 1e-3 * top[2]
    rows = degree_errors(sol, prob.u, prob.lam)
    assert rows[8]["err_lambda"] < 1e-3 * rows[2]["err_lambda"]


def test_parallel_elements_bit_identical(square8):
    prob = helmholtz_square()
    a = solve_hybrid(square8, 5, g=prob.g, workers=1)
    b = solve_hybrid(square8, 5, g=prob.g, workers=3)
    for ra, rb in zip(a.degrees, b.degrees):
        np.testing.assert_array_equal(ra.face_values, rb.face_values)


def test_field_samples_and_scalar(helmholtz20, square8):
    prob, sol = helmholtz20
    chunks = list(field_samples(sol, 12, np.array([[0.2, 0.3]])))
    assert len(chunks) == square8.n_elements
    e, x, u, lam = chunks[0]
    np.testing.assert_allclose(u.T.ravel(), prob.u(x), atol=1e-6)
    assert scalar_at(sol, 20, (0.3, 0.7)) == pytest.approx(float(prob.lam(np.array([[0.3, 0.7]]))[0]),
                                                            abs=1e-12)
    with pytest.raises(ValueError):
        scalar_at(sol, 0, (0.3, 0.7))


def test_rejects_mismatched_reference(square8):
    with pytest.raises(ValueError):
        solve_hybrid(square8, 3, ref=build_divfree_ref(k=2, d=2))
    with pytest.raises(ValueError):
        solve_hybrid(square8, -1)


def test_three_dimensional_smoke():
    mesh = load_fixture("cube20")
    geom = element_geometry(mesh, 0)
    assert geom.normals.shape == (4, 3)
    from divbasis.problems import helmholtz_cube
    prob = helmholtz_cube()
    sol = driver_helmholtz(mesh, prob.g, 3)
    rows = degree_errors(sol, prob.u, prob.lam)
    errs = [max(r["err_u"]) for r in rows]
    assert errs[3] < errs[1] < errs[0]
    assert all(r["flux_jump"] <= 1e-11 for r in rows)
