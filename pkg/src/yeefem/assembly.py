"""
Global matrices and load vectors.

The lumped mass matrix is assembled directly into one dense block per mesh
vertex (:class:`BlockDiagMatrix`), which makes its inverse exactly as sparse
as the matrix itself.  General sparse operators are ``scipy.sparse`` CSR
matrices with sorted, duplicate-free column indices.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import ContractError, ParameterError, SingularBlockError
from .femcore import (
    EDGE_NODES,
    EDGE_WEIGHTS,
    TRI_BARY,
    TRI_WEIGHTS,
    DofMap,
    dof_curls,
    dof_vectors,
    element_geometry,
)


def _per_triangle(mesh, alpha, name):
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (mesh.n_triangles,))
    if np.any(alpha < 0):
        raise ParameterError(f"{name} must be non-negative")
    return alpha


def _csr(rows, cols, vals, n):
    # COO -> CSR sums duplicates in input order, so the result is
    # reproducible bit for bit
    A = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def is_symmetric(A, rtol=1e-14):
    diff = abs(A - A.T)
    scale = abs(A).max() if A.nnz else 0.0
    return diff.nnz == 0 or diff.max() <= rtol * scale


@dataclass(eq=False)
class BlockDiagMatrix:
    """Square matrix made of dense blocks on disjoint index sets.

    Blocks are grouped by size: ``groups[s] = (index, blocks, owner)`` with
    ``index`` of shape (n, s) holding global dofs, ``blocks`` of shape
    (n, s, s) and ``owner`` the vertex each block belongs to.
    """

    n: int
    groups: dict

    def matvec(self, x):
        x = np.asarray(x)
        y = np.zeros_like(x, dtype=float)
        for idx, blocks, _ in self.groups.values():
            y[idx] = np.einsum("nij,nj->ni", blocks, x[idx])
        return y

    def __matmul__(self, x):
        return self.matvec(x)

    def tocsr(self):
        rows, cols, vals = [], [], []
        for idx, blocks, _ in self.groups.values():
            s = idx.shape[1]
            rows.append(np.repeat(idx, s, axis=1).ravel())
            cols.append(np.tile(idx, (1, s)).ravel())
            vals.append(blocks.ravel())
        A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows),
                          np.concatenate(cols))), shape=(self.n, self.n))
        A.sort_indices()
        return A

    def todense(self):
        return self.tocsr().toarray()

    def block_of(self, vertex):
        for idx, blocks, owner in self.groups.values():
            hit = np.flatnonzero(owner == vertex)
            if len(hit):
                return idx[hit[0]], blocks[hit[0]]
        raise KeyError(vertex)


def assemble_lumped_mass(m, dm: DofMap, alpha) -> BlockDiagMatrix:
    """Vertex-rule mass matrix ``<alpha Phi_kl, Phi_ij>_h`` in per-vertex blocks."""
    alpha = _per_triangle(m, alpha, "mass weight")
    geom = element_geometry(m.vertices, m.triangles)
    vec = dof_vectors(dm, geom)  # (T, 6, 2)
    w = geom.area / 3 * alpha

    # position of every full-space dof inside its vertex block
    dof_vertex = dm.dof_vertex
    order = np.argsort(dof_vertex, kind="stable")
    size = np.bincount(dof_vertex, minlength=m.n_vertices)
    first = np.concatenate([[0], np.cumsum(size)[:-1]])
    pos = np.empty(dm.n_full, dtype=np.int64)
    pos[order] = np.arange(dm.n_full) - np.repeat(first, size)

    groups = {}
    slot = np.empty(m.n_vertices, dtype=np.int64)
    for s in np.unique(size[size > 0]):
        owner = np.flatnonzero(size == s)
        slot[owner] = np.arange(len(owner))
        idx = np.empty((len(owner), s), dtype=np.int64)
        dofs = order[np.repeat(first[owner], s) + np.tile(np.arange(s), len(owner))]
        idx[:] = dofs.reshape(len(owner), s)
        groups[int(s)] = (idx, np.zeros((len(owner), s, s)), owner)

    # in each triangle, local dofs 2k, 2k+1 attached to the same local
    # vertex couple; there are exactly two per vertex
    T = np.arange(m.n_triangles)
    att = dm.attach
    pairs = np.argsort(att, axis=1, kind="stable")  # (T, 6): grouped by vertex
    for a in range(3):
        k1 = pairs[:, 2 * a]
        k2 = pairs[:, 2 * a + 1]
        va = np.take_along_axis(dm.mesh.triangles, att[T, k1][:, None], axis=1)[:, 0]
        d1 = dm.tri_dofs[T, k1]
        d2 = dm.tri_dofs[T, k2]
        v1 = vec[T, k1]
        v2 = vec[T, k2]
        m11 = w * np.einsum("td,td->t", v1, v1)
        m12 = w * np.einsum("td,td->t", v1, v2)
        m22 = w * np.einsum("td,td->t", v2, v2)
        sizes = size[va]
        for s, (idx, blocks, owner) in groups.items():
            sel = sizes == s
            if not np.any(sel):
                continue
            b = slot[va[sel]]
            p1, p2 = pos[d1[sel]], pos[d2[sel]]
            np.add.at(blocks, (b, p1, p1), m11[sel])
            np.add.at(blocks, (b, p1, p2), m12[sel])
            np.add.at(blocks, (b, p2, p1), m12[sel])
            np.add.at(blocks, (b, p2, p2), m22[sel])
    return BlockDiagMatrix(dm.n_full, groups)


def invert_block_mass(M: BlockDiagMatrix) -> BlockDiagMatrix:
    """Blockwise inverse; every block must be symmetric positive definite."""
    groups = {}
    for s, (idx, blocks, owner) in M.groups.items():
        try:
            L = np.linalg.cholesky(blocks)
        except np.linalg.LinAlgError:
            ev = np.linalg.eigvalsh(blocks)[:, 0]
            # batched Cholesky does not say which block failed
            bad = np.flatnonzero(ev <= 0)
            k = int(bad[0]) if len(bad) else int(np.argmin(ev))
            raise SingularBlockError(int(owner[k]), float(ev[k])) from None
        Linv = np.linalg.inv(L)
        inv = np.einsum("nki,nkj->nij", Linv, Linv)
        groups[s] = (idx, 0.5 * (inv + inv.transpose(0, 2, 1)), owner)
    return BlockDiagMatrix(M.n, groups)


def _element_matrix(m, dm, local):
    rows = np.repeat(dm.tri_dofs, 6, axis=1).reshape(-1, 6, 6)
    cols = np.tile(dm.tri_dofs, (1, 6)).reshape(-1, 6, 6)
    return _csr(rows, cols, local, dm.n_full)


def assemble_stiffness(m, dm: DofMap, nu):
    """Curl-curl matrix ``<nu curl Phi_kl, curl Phi_ij>`` (exact, curls are constant)."""
    nu = _per_triangle(m, nu, "nu")
    geom = element_geometry(m.vertices, m.triangles)
    c = dof_curls(dm, geom)
    local = (geom.area * nu)[:, None, None] * c[:, :, None] * c[:, None, :]
    return _element_matrix(m, dm, local)


def assemble_consistent_mass(m, dm: DofMap, alpha=1.0):
    """Exact L2 mass matrix ``<alpha Phi_kl, Phi_ij>``, used for error norms."""
    alpha = _per_triangle(m, alpha, "mass weight")
    geom = element_geometry(m.vertices, m.triangles)
    vec = dof_vectors(dm, geom)
    # int lambda_a lambda_b = |T| (1 + delta_ab) / 12
    same = dm.attach[:, :, None] == dm.attach[:, None, :]
    lam = (geom.area * alpha)[:, None, None] * (1.0 + same) / 12.0
    local = lam * np.einsum("tkd,tld->tkl", vec, vec)
    return _element_matrix(m, dm, local)


def assemble_volume_load(m, dm: DofMap, f, t):
    """``<f(t), Phi_ij>`` with a 6-point degree-4 rule per triangle."""
    geom = element_geometry(m.vertices, m.triangles)
    x = np.einsum("qa,tad->tqd", TRI_BARY, geom.points)
    fv = np.asarray(f(x.reshape(-1, 2), t), dtype=float).reshape(x.shape)
    vec = dof_vectors(dm, geom)
    lam = TRI_BARY[:, dm.attach]  # (Q, T, 6)
    # sum_q w_q * lambda_attach(x_q) * f(x_q) . vec
    fdot = np.einsum("tqd,tkd->tqk", fv, vec)
    local = geom.area[:, None] * np.einsum("q,qtk,tqk->tk", TRI_WEIGHTS, lam, fdot)
    out = np.zeros(dm.n_full)
    np.add.at(out, dm.tri_dofs.ravel(), local.ravel())
    return out


def boundary_tangents(m):
    """Counterclockwise unit tangents of boundary edges (outward normal rotated +90 deg)."""
    be = m.boundary_edges
    tri = m.edge_tris[be, 0]
    # local edge k of the owning triangle runs counterclockwise
    k = np.argmax(m.tri_edges[tri] == be[:, None], axis=1)
    sign = m.tri_edge_sign[tri, k]
    return m.edge_tangents()[be] * sign[:, None], sign


class BoundaryLoad:
    """Reusable assembler for ``int_{boundary} g (Phi . t) ds``.

    Quadrature points are computed once; calling the object with ``(g, t)``
    evaluates ``g`` and scatters to the boundary-edge dofs.
    """

    def __init__(self, m, dm: DofMap):
        self.n = dm.n_full
        self.edges = be = m.boundary_edges
        _, self.sign = boundary_tangents(m) if len(be) else (None, np.zeros(0))
        p0 = m.vertices[m.edges[be, 0]]
        p1 = m.vertices[m.edges[be, 1]]
        s = EDGE_NODES
        self.points = (p0[:, None, :] + s[None, :, None] * (p1 - p0)[:, None, :]).reshape(-1, 2)
        # Phi_ij . tau = lambda_i / |e|, Phi_ji . tau = lambda_j / |e|; ds = |e| dsigma
        self.w_i = EDGE_WEIGHTS * (1 - s)
        self.w_j = EDGE_WEIGHTS * s

    def __call__(self, g, t):
        out = np.zeros(self.n)
        be = self.edges
        if len(be) == 0:
            return out
        gv = np.asarray(g(self.points, t), dtype=float).reshape(len(be), -1)
        out[2 * be] = self.sign * (gv @ self.w_i)
        out[2 * be + 1] = self.sign * (gv @ self.w_j)
        return out


def assemble_boundary_load(m, dm: DofMap, g, t):
    """``int_{boundary} g (Phi . t) ds`` with ``t`` the counterclockwise tangent.

    ``g(x, t)`` is the scalar trace ``nu * curl E`` on the boundary.
    """
    return BoundaryLoad(m, dm)(g, t)


def dump_matrix(A, path):
    """Write ``row col value`` lines, 1-based indices."""
    if isinstance(A, BlockDiagMatrix):
        A = A.tocsr()
    A = sp.coo_matrix(A)
    order = np.lexsort((A.col, A.row))
    with open(path, "w", encoding="utf-8") as fh:
        for r, c, v in zip(A.row[order], A.col[order], A.data[order]):
            fh.write(f"{r + 1} {c + 1} {float(v)!r}\n")


def load_matrix(path, n=None):
    data = np.loadtxt(path, ndmin=2)
    rows = data[:, 0].astype(np.int64) - 1
    cols = data[:, 1].astype(np.int64) - 1
    if n is None:
        n = int(max(rows.max(), cols.max())) + 1
    if rows.max() >= n or cols.max() >= n:
        raise ContractError("matrix entries exceed the given dimension")
    return sp.csr_matrix((data[:, 2], (rows, cols)), shape=(n, n))
