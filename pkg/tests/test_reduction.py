import numpy as np
import pytest

from yeefem.assembly import assemble_lumped_mass, assemble_stiffness, invert_block_mass
from yeefem.exceptions import ContractError
from yeefem.femcore import build_dofmap, curl_elementwise
from yeefem.mesh import MaterialField, classify_reduced_edges
from yeefem.reduction import (
    build_projection_matrices,
    reduce_rhs_direct,
    reduce_rhs_lifted,
    reduce_system,
    reduced_load,
)

from conftest import square_mesh


@pytest.fixture
def setup(rng):
    m = square_mesh(4, labels=True)
    mat = MaterialField.from_labels(m, {0: (1, 0, 1), 1: (2, 3, 1)})
    red = classify_reduced_edges(m, mat, "A5")
    dm = build_dofmap(m, red)
    return m, dm, build_projection_matrices(dm)


def test_projection_identities(setup, rng):
    m, dm, ops = setup
    P, R, Q = ops.P, ops.R, ops.Q
    n = dm.n_reduced
    assert P.shape == (dm.n_full, n)
    assert abs(R @ P - np.eye(n)).max() < 1e-15
    assert abs(Q @ Q - Q).max() < 1e-15
    PtP = (P.T @ P).diagonal()
    assert set(np.unique(PtP)) <= {1.0, 2.0}
    assert int((PtP == 2).sum()) == int(dm.reduced.sum())
    # Q averages the two coefficients of reduced edges and keeps the others
    v = rng.normal(size=dm.n_full)
    Qv = Q @ v
    e = dm.reduced
    mean = 0.5 * (v[0::2] + v[1::2])
    assert np.allclose(Qv[0::2][e], mean[e]) and np.allclose(Qv[1::2][e], mean[e])
    assert np.array_equal(Qv[0::2][~e], v[0::2][~e])
    # P agrees with the dof map prolongation
    c = rng.normal(size=n)
    assert np.array_equal(P @ c, dm.prolong(c))


def test_projection_commutes_with_curl(setup, rng):
    m, dm, ops = setup
    full = build_dofmap(m)
    for _ in range(20):
        v = rng.normal(size=dm.n_full)
        assert np.allclose(curl_elementwise(ops.Q @ v, full), curl_elementwise(v, full),
                           atol=1e-12, rtol=0)


def test_reduce_system(setup, rng):
    m, dm, ops = setup
    full = build_dofmap(m)
    Minv = invert_block_mass(assemble_lumped_mass(m, full, 1.0))
    K = assemble_stiffness(m, full, 1.0)
    Ms = assemble_lumped_mass(m, full, 0.5).tocsr()
    red = reduce_system(Minv, Ms, K, ops)
    c = rng.normal(size=dm.n_reduced)
    Pc = ops.P @ c
    assert c @ red.K @ c == pytest.approx(Pc @ K @ Pc, rel=1e-12)
    assert abs(red.Minv - red.Minv.T).max() < 1e-14
    with pytest.raises(ContractError):
        reduce_system(Minv, Ms, K, ops, rhs_mode="other")
    with pytest.raises(ContractError):
        reduce_system(Minv, Ms[:-1, :-1], K, ops)


def test_rhs_modes(setup, rng):
    m, dm, ops = setup
    full = build_dofmap(m)
    Minv = invert_block_mass(assemble_lumped_mass(m, full, 1.0))
    load = rng.normal(size=dm.n_full)
    lifted = reduce_rhs_lifted(load, Minv, ops)
    assert np.allclose(lifted, ops.R @ (Minv @ load))
    red = reduce_system(Minv, Minv.tocsr(), assemble_stiffness(m, full, 1.0), ops, "direct")
    direct = reduce_rhs_direct(reduced_load(load, ops), red.Minv)
    assert direct.shape == lifted.shape
    with pytest.raises(ContractError):
        reduce_rhs_lifted(load[:-1], Minv, ops)
    with pytest.raises(ContractError):
        reduce_rhs_direct(load, red.Minv)


def test_no_reduced_edges_is_identity():
    m = square_mesh(2)
    ops = build_projection_matrices(build_dofmap(m))
    n = 2 * m.n_edges
    assert abs(ops.P - np.eye(n)).max() == 0
    assert abs(ops.Q - np.eye(n)).max() == 0
