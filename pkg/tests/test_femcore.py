import numpy as np
import pytest

from yeefem.exceptions import ContractError, DomainError, GeometryError
from yeefem.femcore import (
    PointLocator,
    barycentric_gradients,
    build_dofmap,
    curl_basis,
    curl_elementwise,
    element_geometry,
    eval_basis,
    eval_field,
    interpolate,
    l2_error,
    local_dof_table,
    vertex_quadrature,
)
from yeefem.mesh import refine_uniform

from conftest import random_triangles, square_mesh


def test_reference_gradients():
    g = barycentric_gradients([[0, 0], [1, 0], [0, 1]])
    assert np.allclose(g.grads[0], [[-1, -1], [1, 0], [0, 1]])
    assert g.area[0] == pytest.approx(0.5)


def test_degenerate_geometry():
    with pytest.raises(GeometryError):
        barycentric_gradients([[0, 0], [1, 1], [2, 2]])


def test_local_dof_table_orientation():
    attach, grad, sign = local_dof_table([[5, 2, 9]])
    # local edges (0,1), (1,2), (2,0); global ids 5, 2, 9
    # edge (0,1): global 5 > 2, so Phi_{lo,hi} attaches to local vertex 1
    assert attach[0, :2].tolist() == [1, 0]
    assert grad[0, :2].tolist() == [0, 1]
    assert sign[0].tolist() == [1, -1] * 3


def test_basis_tangential_traces(rng):
    pts = random_triangles(rng, 1)[0]
    g = barycentric_gradients(pts)
    attach, grad, sign = local_dof_table([[0, 1, 2]])
    for dof in range(6):
        a, b, sg = attach[0, dof], grad[0, dof], sign[0, dof]
        for u, v in [(0, 1), (1, 2), (0, 2)]:
            d = pts[v] - pts[u]
            for s_ in (0.0, 0.3, 1.0):
                lam = np.zeros(3)
                lam[u], lam[v] = 1 - s_, s_
                val = eval_basis(g, dof, pts[u] + s_ * d) @ d
                if {u, v} == {a, b}:
                    # sign * lambda_a * grad(lambda_b) . (x_v - x_u)
                    expect = sg * lam[a] * (1.0 if v == b else -1.0)
                else:
                    expect = 0.0
                assert val == pytest.approx(expect, abs=1e-12)


def test_curl_basis_matches_finite_differences(rng):
    pts = random_triangles(rng, 1)[0]
    g = barycentric_gradients(pts)
    x0 = pts.mean(axis=0)
    h = 1e-6
    for dof in range(6):
        dx = (eval_basis(g, dof, x0 + [h, 0]) - eval_basis(g, dof, x0 - [h, 0])) / (2 * h)
        dy = (eval_basis(g, dof, x0 + [0, h]) - eval_basis(g, dof, x0 - [0, h])) / (2 * h)
        assert curl_basis(g, dof) == pytest.approx(dx[1] - dy[0], rel=1e-6, abs=1e-8)


def test_eval_outside_triangle():
    g = barycentric_gradients([[0, 0], [1, 0], [0, 1]])
    with pytest.raises(DomainError):
        eval_basis(g, 0, [1.0, 1.0])


def test_interpolation_reproduces_linear_fields(rng):
    m = square_mesh(3)
    dm = build_dofmap(m)
    A = rng.normal(size=(2, 2))
    b = rng.normal(size=2)

    def F(x, t):
        return x @ A.T + b

    c = interpolate(F, 0.0, m, dm)
    p = rng.uniform(0, 1, size=(50, 2))
    assert np.allclose(eval_field(c, m, dm, p), F(p, 0.0), atol=1e-12)
    # curl of a linear field is constant A[1,0] - A[0,1]
    assert np.allclose(curl_elementwise(c, dm), A[1, 0] - A[0, 1], atol=1e-12)


def test_reduced_interpolation_reproduces_constants():
    m = square_mesh(3)
    red = np.ones(m.n_edges, dtype=bool)
    dm = build_dofmap(m, red)
    c = interpolate(lambda x, t: np.tile([2.0, -1.0], (len(x), 1)), 0.0, m, dm, mode="reduced")
    assert c.shape == (dm.n_reduced,)
    assert np.allclose(eval_field(c, m, dm, [[0.3, 0.7]]), [[2.0, -1.0]], atol=1e-13)
    with pytest.raises(ContractError):
        interpolate(lambda x, t: x, 0.0, m, dm, mode="bogus")


def test_interpolation_rates():
    m = square_mesh(4)

    def F(x, t):
        return np.stack([np.sin(np.pi * x[:, 1]), np.cos(2 * x[:, 0] * x[:, 1])], axis=1)

    err_full, err_red = [], []
    for _ in range(3):
        dm = build_dofmap(m)
        err_full.append(l2_error(interpolate(F, 0.0, m, dm), F, 0.0, m, dm))
        dr = build_dofmap(m, np.ones(m.n_edges, dtype=bool))
        err_red.append(l2_error(interpolate(F, 0.0, m, dr, mode="reduced"), F, 0.0, m, dr))
        m = refine_uniform(m)
    assert np.log2(err_full[-2] / err_full[-1]) == pytest.approx(2.0, abs=0.1)
    assert np.log2(err_red[-2] / err_red[-1]) == pytest.approx(1.0, abs=0.1)


def test_vertex_quadrature_exact_for_linear_products(rng):
    # a.b is quadratic in general; with a constant it is linear and the rule is exact
    m = square_mesh(2)
    dm = build_dofmap(m)
    c1 = interpolate(lambda x, t: np.tile([1.0, 2.0], (len(x), 1)), 0, m, dm)
    c2 = interpolate(lambda x, t: np.stack([x[:, 0], 3 * x[:, 0]], axis=1), 0, m, dm)
    # int_0^1 int_0^1 x + 6x = 3.5
    assert vertex_quadrature(m, 1.0, c1, c2, dm) == pytest.approx(3.5, rel=1e-13)
    with pytest.raises(ContractError):
        vertex_quadrature(m, 1.0, c1[:-1], c2, dm)


def test_point_locator(rng):
    m = square_mesh(5)
    loc = PointLocator(m)
    p = rng.uniform(0, 1, size=(200, 2))
    tris = loc.locate(p)
    g = element_geometry(m.vertices, m.triangles[tris])
    assert np.all(g.barycentric(p) > -1e-10)
    with pytest.raises(DomainError):
        loc.locate([[2.0, 2.0]])


def test_dofmap_spaces():
    m = square_mesh(2)
    red = np.zeros(m.n_edges, dtype=bool)
    red[::2] = True
    dm = build_dofmap(m, red)
    assert dm.n_reduced == dm.n_full - red.sum()
    assert dm.space_of(np.zeros(dm.n_full)) == "full"
    assert dm.space_of(np.zeros(dm.n_reduced)) == "reduced"
    with pytest.raises(ContractError):
        dm.space_of(np.zeros(3))
    with pytest.raises(ContractError):
        build_dofmap(m, red[:-1])
