"""
Lowest-order second-kind Nedelec elements on triangles.

Every edge ``e = (i, j)``, ``i < j``, carries the two basis functions

    Phi_ij = lambda_i grad(lambda_j),      Phi_ji = -lambda_j grad(lambda_i),

stored at dofs ``2e`` and ``2e + 1``.  ``Phi_ij`` vanishes at every vertex
except ``v_i``, which is what makes the vertex rule produce a mass matrix
with one block per vertex.

Within a triangle the six local dofs are numbered ``2k, 2k + 1`` for local
edge ``k``.  A local dof is described by the local vertex it is attached to,
the local vertex whose gradient it carries and a sign, so that its value is
``sign * lambda[attach] * grad(lambda[grad])``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import ContractError, DomainError, GeometryError
from .mesh import LOCAL_EDGES, Mesh

# Gauss-Legendre nodes on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)
EDGE_NODES = 0.5 * (_GL_X + 1.0)
EDGE_WEIGHTS = 0.5 * _GL_W

# symmetric 6-point rule, exact for degree 4, weights sum to 1
_A1, _W1 = 0.445948490915965, 0.223381589678011
_A2, _W2 = 0.091576213509771, 0.109951743655322
TRI_BARY = np.array([
    [_A1, _A1, 1 - 2 * _A1], [_A1, 1 - 2 * _A1, _A1], [1 - 2 * _A1, _A1, _A1],
    [_A2, _A2, 1 - 2 * _A2], [_A2, 1 - 2 * _A2, _A2], [1 - 2 * _A2, _A2, _A2],
])
TRI_WEIGHTS = np.array([_W1] * 3 + [_W2] * 3)

BARY_TOL = 1e-10


def cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass(frozen=True, eq=False)
class ElementGeometry:
    """Barycentric gradients and areas of a batch of triangles.

    ``grads[t, a]`` is the gradient of the barycentric coordinate of local
    vertex ``a`` in triangle ``t``.
    """

    points: np.ndarray  # (T, 3, 2)
    grads: np.ndarray  # (T, 3, 2)
    area: np.ndarray  # (T,)

    def barycentric(self, p):
        """Barycentric coordinates of points ``p`` (shape (T, 2) or (T, n, 2))."""
        p = np.asarray(p, dtype=float)
        x0 = self.points[:, 0]
        if p.ndim == 2:
            d = p - x0
            l12 = np.einsum("tad,td->ta", self.grads[:, 1:], d)
            return np.concatenate([1 - l12.sum(axis=1, keepdims=True), l12], axis=1)
        d = p - x0[:, None, :]
        l12 = np.einsum("tad,tnd->tna", self.grads[:, 1:], d)
        return np.concatenate([1 - l12.sum(axis=2, keepdims=True), l12], axis=2)


def element_geometry(vertices, triangles) -> ElementGeometry:
    pts = np.asarray(vertices, dtype=float)[np.asarray(triangles)]
    d1 = pts[:, 1] - pts[:, 0]
    d2 = pts[:, 2] - pts[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    scale = np.maximum(np.sum(d1 ** 2, axis=1), np.sum(d2 ** 2, axis=1))
    if np.any(np.abs(det) <= 1e-14 * scale):
        t = int(np.flatnonzero(np.abs(det) <= 1e-14 * scale)[0])
        raise GeometryError(f"triangle {t} is degenerate")
    # rows of the inverse Jacobian give grad(lambda_1), grad(lambda_2)
    g1 = np.stack([d2[:, 1], -d2[:, 0]], axis=1) / det[:, None]
    g2 = np.stack([-d1[:, 1], d1[:, 0]], axis=1) / det[:, None]
    grads = np.stack([-g1 - g2, g1, g2], axis=1)
    return ElementGeometry(points=pts, grads=grads, area=0.5 * np.abs(det))


def barycentric_gradients(tri_points) -> ElementGeometry:
    """Geometry of a single triangle given as a (3, 2) array of vertices."""
    tri_points = np.asarray(tri_points, dtype=float).reshape(3, 2)
    return element_geometry(tri_points, np.array([[0, 1, 2]]))


# --------------------------------------------------------------------------
# local dof tables

def local_dof_table(vertex_ids):
    """Attach vertex, gradient vertex and sign of the six local dofs.

    ``vertex_ids`` holds global vertex ids, shape (T, 3).  Returns three
    integer arrays of shape (T, 6).
    """
    vertex_ids = np.asarray(vertex_ids)
    a = np.broadcast_to(LOCAL_EDGES[:, 0], vertex_ids.shape)
    b = np.broadcast_to(LOCAL_EDGES[:, 1], vertex_ids.shape)
    ga = np.take_along_axis(vertex_ids, a, axis=1)
    gb = np.take_along_axis(vertex_ids, b, axis=1)
    lo = np.where(ga < gb, a, b)
    hi = np.where(ga < gb, b, a)
    # dof 2k: Phi_{lo,hi} = lambda_lo grad lambda_hi
    # dof 2k+1: Phi_{hi,lo} = -lambda_hi grad lambda_lo
    attach = np.stack([lo, hi], axis=2).reshape(-1, 6)
    grad = np.stack([hi, lo], axis=2).reshape(-1, 6)
    sign = np.broadcast_to(np.array([1, -1] * 3), attach.shape).copy()
    return attach, grad, sign


def eval_basis(geom: ElementGeometry, dof: int, p, vertex_ids=(0, 1, 2)):
    """Value of local basis function ``dof`` (0..5) at point ``p``.

    ``geom`` describes a single triangle; ``vertex_ids`` are its global
    vertex ids which fix the orientation of each edge.
    """
    attach, grad, sign = local_dof_table(np.atleast_2d(vertex_ids))
    lam = geom.barycentric(np.atleast_2d(np.asarray(p, dtype=float)))[0]
    if np.any(lam < -BARY_TOL) or np.any(lam > 1 + BARY_TOL):
        raise DomainError(f"point {p} outside the triangle")
    a, g, s = attach[0, dof], grad[0, dof], sign[0, dof]
    return s * lam[a] * geom.grads[0, g]


def curl_basis(geom: ElementGeometry, dof: int, vertex_ids=(0, 1, 2)):
    """Constant scalar curl of local basis function ``dof`` on the triangle."""
    attach, grad, sign = local_dof_table(np.atleast_2d(vertex_ids))
    a, g, s = attach[0, dof], grad[0, dof], sign[0, dof]
    return float(s * cross2(geom.grads[0, a], geom.grads[0, g]))


# --------------------------------------------------------------------------
# dof map

@dataclass(frozen=True, eq=False)
class DofMap:
    """Edge-wise global numbering for the full and the reduced space.

    Full space: dofs ``2e`` (``Phi_ij``) and ``2e + 1`` (``Phi_ji``).
    Reduced space: one dof for each edge flagged in ``reduced`` and two for
    the others, again in edge order.
    """

    mesh: Mesh
    reduced: np.ndarray  # (E,) bool
    tri_dofs: np.ndarray  # (T, 6)
    attach: np.ndarray  # (T, 6) local vertex
    grad: np.ndarray  # (T, 6) local vertex
    sign: np.ndarray  # (T, 6)
    reduced_start: np.ndarray  # (E,) first reduced dof of each edge

    @property
    def n_full(self):
        return 2 * self.mesh.n_edges

    @property
    def n_reduced(self):
        return self.n_full - int(self.reduced.sum())

    @property
    def dof_vertex(self):
        """Global vertex each full-space dof is attached to."""
        e = self.mesh.edges
        return np.stack([e[:, 0], e[:, 1]], axis=1).ravel()

    def check_full(self, c, name="vector"):
        c = np.asarray(c)
        if c.shape[-1] != self.n_full:
            raise ContractError(
                f"{name} has length {c.shape[-1]}, full space has {self.n_full}")
        return c

    def space_of(self, c):
        n = np.asarray(c).shape[-1]
        if n == self.n_full:
            return "full"
        if n == self.n_reduced:
            return "reduced"
        raise ContractError(
            f"length {n} matches neither the full ({self.n_full}) nor the "
            f"reduced ({self.n_reduced}) space")

    def prolong(self, c):
        """Full-space coefficients of a reduced vector (duplicate on reduced edges)."""
        c = np.asarray(c)
        if c.shape[-1] == self.n_full:
            return c
        if c.shape[-1] != self.n_reduced:
            raise ContractError("vector length matches no space")
        s = self.reduced_start
        second = np.where(self.reduced, s, s + 1)
        idx = np.stack([s, second], axis=1).ravel()
        return c[..., idx]


def build_dofmap(mesh: Mesh, reduced=None) -> DofMap:
    if reduced is None:
        reduced = np.zeros(mesh.n_edges, dtype=bool)
    reduced = np.asarray(reduced, dtype=bool)
    if reduced.shape != (mesh.n_edges,):
        raise ContractError("one reduced flag per edge required")
    attach, grad, sign = local_dof_table(mesh.triangles)
    e = mesh.tri_edges
    tri_dofs = np.stack([2 * e, 2 * e + 1], axis=2).reshape(-1, 6)
    counts = np.where(reduced, 1, 2)
    start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return DofMap(mesh=mesh, reduced=reduced, tri_dofs=tri_dofs, attach=attach,
                  grad=grad, sign=sign, reduced_start=start)


def dof_vectors(dm: DofMap, geom: ElementGeometry):
    """``sign * grad(lambda[grad])`` for each local dof, shape (T, 6, 2)."""
    g = np.take_along_axis(geom.grads, dm.grad[:, :, None], axis=1)
    return dm.sign[:, :, None] * g


def dof_curls(dm: DofMap, geom: ElementGeometry):
    """Elementwise curl of each local basis function, shape (T, 6)."""
    ga = np.take_along_axis(geom.grads, dm.attach[:, :, None], axis=1)
    gg = np.take_along_axis(geom.grads, dm.grad[:, :, None], axis=1)
    return dm.sign * cross2(ga, gg)


def curl_elementwise(c, dm: DofMap, geom: ElementGeometry = None):
    """Piecewise constant curl of the field with coefficients ``c``."""
    if geom is None:
        geom = element_geometry(dm.mesh.vertices, dm.mesh.triangles)
    c = dm.prolong(c)
    return np.einsum("tk,...tk->...t", dof_curls(dm, geom), c[..., dm.tri_dofs])


def vertex_values(c, dm: DofMap, geom: ElementGeometry = None):
    """Field values at the three vertices of every triangle, shape (T, 3, 2)."""
    if geom is None:
        geom = element_geometry(dm.mesh.vertices, dm.mesh.triangles)
    c = dm.prolong(c)
    vec = dof_vectors(dm, geom) * c[dm.tri_dofs][:, :, None]
    out = np.zeros((dm.mesh.n_triangles, 3, 2))
    for k in range(6):
        np.add.at(out, (np.arange(len(out)), dm.attach[:, k]), vec[:, k])
    return out


def vertex_quadrature(m: Mesh, alpha, a, b, dm: DofMap = None):
    """Vertex rule ``sum_T |T|/3 * alpha_T * sum_v a(v) . b(v)``.

    ``a`` and ``b`` are full-space coefficient vectors.
    """
    if dm is None:
        dm = build_dofmap(m)
    a = dm.check_full(a, "a")
    b = dm.check_full(b, "b")
    geom = element_geometry(m.vertices, m.triangles)
    va = vertex_values(a, dm, geom)
    vb = vertex_values(b, dm, geom)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (m.n_triangles,))
    return float(np.sum(geom.area / 3 * alpha * np.einsum("tvd,tvd->t", va, vb)))


# --------------------------------------------------------------------------
# interpolation and evaluation

def edge_moments(F, t, m: Mesh):
    """Moments ``int_e F . tau lambda_i ds`` and ``... lambda_j ds`` per edge."""
    p0 = m.vertices[m.edges[:, 0]]
    p1 = m.vertices[m.edges[:, 1]]
    d = p1 - p0
    s = EDGE_NODES
    x = p0[:, None, :] + s[None, :, None] * d[:, None, :]
    vals = np.asarray(F(x.reshape(-1, 2), t), dtype=float).reshape(len(d), len(s), 2)
    # |e| ds * tau = d ds
    ft = np.einsum("eqd,ed->eq", vals, d)
    mi = ft @ (EDGE_WEIGHTS * (1 - s))
    mj = ft @ (EDGE_WEIGHTS * s)
    return mi, mj


def interpolate(F, t, m: Mesh, dm: DofMap, mode="full"):
    """Canonical interpolant from tangential edge moments.

    ``F(x, t)`` maps points of shape (n, 2) to vectors of shape (n, 2).
    ``mode="full"`` matches moments against linears on every edge and
    returns a full-space vector; ``mode="reduced"`` matches only the mean
    tangential component on reduced edges and returns a reduced-space vector.
    """
    mi, mj = edge_moments(F, t, m)
    full = np.empty(dm.n_full)
    # inverse of the edge mass matrix [[1/3, 1/6], [1/6, 1/3]]
    full[0::2] = 4 * mi - 2 * mj
    full[1::2] = -2 * mi + 4 * mj
    if mode == "full":
        return full
    if mode != "reduced":
        raise ContractError(f"unknown interpolation mode {mode!r}")
    out = np.empty(dm.n_reduced)
    s = dm.reduced_start
    red = dm.reduced
    out[s[red]] = (mi + mj)[red]
    out[s[~red]] = full[0::2][~red]
    out[s[~red] + 1] = full[1::2][~red]
    return out


class PointLocator:
    """Find the triangle containing each query point.

    Candidates come from the nearest centroids; points not resolved that
    way fall back to a linear scan.
    """

    def __init__(self, m: Mesh, k=8):
        self.mesh = m
        self.geom = element_geometry(m.vertices, m.triangles)
        self.tree = cKDTree(m.centroids())
        self.k = min(k, m.n_triangles)

    def locate(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        _, cand = self.tree.query(points, k=self.k)
        cand = np.asarray(cand).reshape(len(points), -1)
        found = np.full(len(points), -1, dtype=np.int64)
        g = self.geom
        for j in range(cand.shape[1]):
            todo = np.flatnonzero(found < 0)
            if len(todo) == 0:
                break
            t = cand[todo, j]
            lam = _bary(g, t, points[todo])
            ok = np.all(lam >= -BARY_TOL, axis=1)
            found[todo[ok]] = t[ok]
        for i in np.flatnonzero(found < 0):
            lam = _bary(g, np.arange(self.mesh.n_triangles),
                        np.broadcast_to(points[i], (self.mesh.n_triangles, 2)))
            hit = np.flatnonzero(np.all(lam >= -BARY_TOL, axis=1))
            if len(hit) == 0:
                raise DomainError(f"point {points[i].tolist()} outside the mesh")
            found[i] = hit[0]
        return found


def _bary(g: ElementGeometry, tris, p):
    d = p - g.points[tris, 0]
    l12 = np.einsum("nad,nd->na", g.grads[tris, 1:], d)
    return np.concatenate([1 - l12.sum(axis=1, keepdims=True), l12], axis=1)


def eval_field(c, m: Mesh, dm: DofMap, p, locator: PointLocator = None):
    """Evaluate the discrete field at points ``p`` (shape (n, 2) or (2,))."""
    single = np.ndim(p) == 1
    pts = np.atleast_2d(np.asarray(p, dtype=float))
    if locator is None:
        locator = PointLocator(m)
    tris = locator.locate(pts)
    out = eval_in_triangles(c, dm, locator.geom, tris, pts)
    return out[0] if single else out


def eval_in_triangles(c, dm: DofMap, geom: ElementGeometry, tris, pts):
    """Field values at ``pts[n]`` using the polynomial of triangle ``tris[n]``."""
    c = dm.prolong(c)
    lam = _bary(geom, tris, pts)
    attach, grad, sign = dm.attach[tris], dm.grad[tris], dm.sign[tris]
    la = np.take_along_axis(lam, attach, axis=1)
    gg = np.take_along_axis(geom.grads[tris], grad[:, :, None], axis=1)
    coef = c[dm.tri_dofs[tris]] * sign * la
    return np.einsum("nk,nkd->nd", coef, gg)


def l2_error(c, F, t, m: Mesh, dm: DofMap):
    """``||F(t) - E_h||_{L2}`` with the degree-4 triangle rule."""
    geom = element_geometry(m.vertices, m.triangles)
    x = np.einsum("qa,tad->tqd", TRI_BARY, geom.points)
    tris = np.repeat(np.arange(m.n_triangles), len(TRI_WEIGHTS))
    pts = x.reshape(-1, 2)
    diff = np.asarray(F(pts, t), dtype=float) - eval_in_triangles(c, dm, geom, tris, pts)
    sq = np.sum(diff ** 2, axis=1).reshape(m.n_triangles, -1)
    return float(np.sqrt(np.sum(geom.area * (sq @ TRI_WEIGHTS))))
