"""
Conforming triangular meshes with oriented edges and subdomain labels.

A :class:`Mesh` stores vertices, counterclockwise triangles, one integer
subdomain label per triangle and a derived edge table.  Edges are stored as
vertex pairs ``(i, j)`` with ``i < j``; the edge tangent points from ``i`` to
``j``.  Meshes are immutable once built.

Examples
--------
>>> from yeefem.mesh import ScattererGeometry, generate_scatterer_mesh
>>> m = generate_scatterer_mesh(ScattererGeometry(), level=1)
>>> m.n_triangles == 4 * generate_scatterer_mesh(ScattererGeometry(), 0).n_triangles
True
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import Delaunay

from .exceptions import (
    ConfigurationError,
    MeshParseError,
    MeshValidationError,
)

#: local edges of a triangle, as pairs of local vertex indices
LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])

DEGENERACY_TOL = 1e-14


def signed_areas(vertices, triangles):
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation.

    Use :meth:`Mesh.from_arrays` to build one; it derives the edge table and
    validates conformity.

    Attributes
    ----------
    vertices : ndarray, shape (V, 2)
    triangles : ndarray, shape (T, 3)
        Counterclockwise vertex ids.
    tri_label : ndarray, shape (T,)
        Subdomain tag per triangle.
    edges : ndarray, shape (E, 2)
        Vertex pairs with ``edges[:, 0] < edges[:, 1]``.
    tri_edges : ndarray, shape (T, 3)
        Edge id of local edge ``k``, where local edge ``k`` joins local
        vertices ``LOCAL_EDGES[k]``.
    tri_edge_sign : ndarray, shape (T, 3)
        +1 if local edge ``k`` runs from the lower to the higher vertex id.
    edge_tris : ndarray, shape (E, 2)
        Adjacent triangles, ``-1`` in the second slot for boundary edges.
    boundary_edges : ndarray
        Sorted ids of edges with a single adjacent triangle.
    level : int
        Number of uniform refinements applied to the generating mesh.
    parent : ndarray or None
        Coarse triangle containing each triangle, set by
        :func:`refine_uniform`.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    tri_label: np.ndarray
    edges: np.ndarray
    tri_edges: np.ndarray
    tri_edge_sign: np.ndarray
    edge_tris: np.ndarray
    boundary_edges: np.ndarray
    level: int = 0
    parent: Optional[np.ndarray] = None

    @classmethod
    def from_arrays(cls, vertices, triangles, tri_label=None, level=0, parent=None):
        vertices = np.ascontiguousarray(vertices, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshValidationError("vertices must have shape (V, 2)")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshValidationError("triangles must have shape (T, 3)")
        if tri_label is None:
            tri_label = np.zeros(len(triangles), dtype=np.int64)
        tri_label = np.ascontiguousarray(tri_label, dtype=np.int64)
        if tri_label.shape != (len(triangles),):
            raise MeshValidationError("one label per triangle required")
        _check_vertex_ids(vertices, triangles)
        _check_areas(vertices, triangles)

        local = triangles[:, LOCAL_EDGES]  # (T, 3, 2)
        lo = local.min(axis=2)
        hi = local.max(axis=2)
        keys = np.stack([lo.ravel(), hi.ravel()], axis=1)
        edges, inverse, counts = np.unique(
            keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if np.any(counts > 2):
            bad = int(np.flatnonzero(counts > 2)[0])
            raise MeshValidationError(
                f"edge {bad} ({edges[bad, 0]}, {edges[bad, 1]}) is shared by "
                f"{counts[bad]} triangles")
        tri_edges = inverse.reshape(-1, 3)
        tri_edge_sign = np.where(local[:, :, 0] < local[:, :, 1], 1, -1)

        n_edges = len(edges)
        order = np.argsort(inverse, kind="stable")
        tri_of = order // 3
        starts = np.concatenate([[0], np.cumsum(counts)])
        edge_tris = np.full((n_edges, 2), -1, dtype=np.int64)
        edge_tris[:, 0] = tri_of[starts[:-1]]
        two = counts == 2
        edge_tris[two, 1] = tri_of[starts[:-1][two] + 1]

        # two CCW triangles sharing an edge must traverse it in opposite senses
        sign_flat = tri_edge_sign.ravel()[order]
        second = np.minimum(starts[:-1] + 1, len(order) - 1)
        same = two & (sign_flat[starts[:-1]] == sign_flat[second])
        if np.any(same):
            bad = int(np.flatnonzero(same)[0])
            raise MeshValidationError(
                f"edge {bad} ({edges[bad, 0]}, {edges[bad, 1]}): adjacent "
                "triangles overlap")
        boundary_edges = np.flatnonzero(counts == 1)
        _check_boundary_manifold(edges, boundary_edges, len(vertices))

        return cls(vertices=vertices, triangles=triangles, tri_label=tri_label,
                   edges=edges, tri_edges=tri_edges, tri_edge_sign=tri_edge_sign,
                   edge_tris=edge_tris, boundary_edges=boundary_edges,
                   level=level, parent=parent)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def areas(self):
        return signed_areas(self.vertices, self.triangles)

    @property
    def is_boundary_edge(self):
        flags = np.zeros(self.n_edges, dtype=bool)
        flags[self.boundary_edges] = True
        return flags

    def edge_lengths(self):
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def edge_tangents(self):
        """Unit tangents pointing from the lower to the higher vertex id."""
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return d / np.hypot(d[:, 0], d[:, 1])[:, None]

    def h(self):
        """Global mesh size, the maximal edge length."""
        return float(self.edge_lengths().max())

    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def interface_edges(self):
        """Interior edges whose two triangles carry different labels."""
        interior = self.edge_tris[:, 1] >= 0
        lab = self.tri_label
        jump = np.zeros(self.n_edges, dtype=bool)
        et = self.edge_tris[interior]
        jump[interior] = lab[et[:, 0]] != lab[et[:, 1]]
        return np.flatnonzero(jump)


def _check_vertex_ids(vertices, triangles):
    if len(triangles) == 0:
        raise MeshValidationError("mesh has no triangles")
    bad = (triangles < 0) | (triangles >= len(vertices))
    if np.any(bad):
        t = int(np.flatnonzero(bad.any(axis=1))[0])
        raise MeshValidationError(
            f"triangle {t} references missing vertex id "
            f"{int(triangles[t][bad[t]][0])}")
    if np.any(triangles[:, 0] == triangles[:, 1]) or np.any(
            triangles[:, 1] == triangles[:, 2]) or np.any(
            triangles[:, 0] == triangles[:, 2]):
        raise MeshValidationError("triangle with repeated vertex id")


def _check_areas(vertices, triangles):
    area = signed_areas(vertices, triangles)
    p = vertices[triangles]
    diam2 = np.max(np.stack([
        np.sum((p[:, 0] - p[:, 1]) ** 2, axis=1),
        np.sum((p[:, 1] - p[:, 2]) ** 2, axis=1),
        np.sum((p[:, 2] - p[:, 0]) ** 2, axis=1)]), axis=0)
    degenerate = np.abs(area) <= DEGENERACY_TOL * diam2
    if np.any(degenerate):
        t = int(np.flatnonzero(degenerate)[0])
        raise MeshValidationError(f"triangle {t} is degenerate (zero area)")
    if np.any(area < 0):
        t = int(np.flatnonzero(area < 0)[0])
        raise MeshValidationError(f"triangle {t} is clockwise")


def _check_boundary_manifold(edges, boundary_edges, n_vertices):
    # hanging nodes show up as boundary vertices with more than two
    # boundary edges
    deg = np.bincount(edges[boundary_edges].ravel(), minlength=n_vertices)
    bad = np.flatnonzero((deg != 0) & (deg != 2))
    if len(bad):
        v = int(bad[0])
        e = boundary_edges[np.any(edges[boundary_edges] == v, axis=1)][0]
        raise MeshValidationError(
            f"edge {int(e)} ({edges[e, 0]}, {edges[e, 1]}): non-conforming "
            f"boundary at vertex {v}")


# --------------------------------------------------------------------------
# materials and geometry


@dataclass(frozen=True, eq=False)
class MaterialField:
    """Piecewise constant permittivity, conductivity and reluctivity."""

    eps: np.ndarray
    sigma: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        for name in ("eps", "sigma", "nu"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.eps.shape == self.sigma.shape == self.nu.shape):
            raise ConfigurationError("material arrays differ in length")
        if np.any(self.eps <= 0) or np.any(self.nu <= 0):
            raise ConfigurationError("eps and nu must be positive")
        if np.any(self.sigma < 0):
            raise ConfigurationError("sigma must be non-negative")

    @classmethod
    def from_labels(cls, mesh, table):
        """Build from ``{label: (eps, sigma, nu)}``."""
        eps = np.empty(mesh.n_triangles)
        sigma = np.empty(mesh.n_triangles)
        nu = np.empty(mesh.n_triangles)
        for label in np.unique(mesh.tri_label):
            if int(label) not in table:
                raise ConfigurationError(f"no material for label {label}")
            sel = mesh.tri_label == label
            eps[sel], sigma[sel], nu[sel] = table[int(label)]
        return cls(eps, sigma, nu)

    @classmethod
    def uniform(cls, mesh, eps=1.0, sigma=0.0, nu=1.0):
        n = mesh.n_triangles
        return cls(np.full(n, eps), np.full(n, sigma), np.full(n, nu))


@dataclass(frozen=True)
class ScattererGeometry:
    """Square domain ``(-w, w)^2`` with a polygonal disk inclusion.

    ``background_cells`` and ``jitter`` control the background grid of the
    coarse mesh; the disk is approximated by an inscribed regular polygon
    with ``segments`` sides which is kept fixed under refinement.
    """

    half_width: float = 1.0
    radius: float = 0.3
    segments: int = 16
    eps_in: float = 1.0
    sigma_in: float = 100.0
    nu_in: float = 1.0
    eps_out: float = 1.0
    sigma_out: float = 0.0
    nu_out: float = 1.0
    background_cells: int = 20
    jitter: float = 1e-4
    seed: int = 20220

    def __post_init__(self):
        if not 0 < self.radius < self.half_width:
            raise ConfigurationError("radius must lie in (0, half_width)")
        if self.segments < 8:
            raise ConfigurationError(
                f"polygon needs at least 8 segments, got {self.segments}")
        if self.background_cells < 2:
            raise ConfigurationError("background_cells must be >= 2")

    def polygon(self):
        """Vertices of the inscribed polygon, counterclockwise."""
        phi = 2 * np.pi * np.arange(self.segments) / self.segments
        return self.radius * np.stack([np.cos(phi), np.sin(phi)], axis=1)

    def materials(self, mesh):
        return MaterialField.from_labels(mesh, {
            0: (self.eps_out, self.sigma_out, self.nu_out),
            1: (self.eps_in, self.sigma_in, self.nu_in),
        })


def points_in_polygon(points, polygon):
    """Even-odd rule membership test."""
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    n = len(polygon)
    for k in range(n):
        (x1, y1), (x2, y2) = polygon[k], polygon[(k + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xc)
    return inside


def _coarse_scatterer_mesh(geom):
    w = geom.half_width
    n = geom.background_cells
    spacing = 2 * w / n
    s = np.linspace(-w, w, n + 1)
    X, Y = np.meshgrid(s, s, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    on_side = np.isclose(np.abs(pts[:, 0]), w) | np.isclose(np.abs(pts[:, 1]), w)
    rng = np.random.default_rng(geom.seed)
    shift = rng.uniform(-geom.jitter, geom.jitter, size=pts.shape) * spacing
    pts = np.where(on_side[:, None], pts, pts + shift)

    # keep background points clear of the polygon so that every polygon
    # side is a Gabriel edge, hence a Delaunay edge
    r = np.hypot(pts[:, 0], pts[:, 1])
    keep = on_side | (np.abs(r - geom.radius) > 0.6 * spacing)
    poly = geom.polygon()
    pts = np.concatenate([pts[keep], poly])
    n_bg = int(keep.sum())

    tri = Delaunay(pts).simplices.astype(np.int64)
    area = signed_areas(pts, tri)
    flip = area < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]

    ids = n_bg + np.arange(geom.segments)
    sides = np.stack([ids, np.roll(ids, -1)], axis=1)
    labels = points_in_polygon(pts[tri].mean(axis=1), poly).astype(np.int64)
    mesh = Mesh.from_arrays(pts, tri, labels, level=0)
    have = {tuple(e) for e in mesh.edges.tolist()}
    missing = [tuple(sorted(s)) for s in sides.tolist()
               if tuple(sorted(s)) not in have]
    if missing:
        raise ConfigurationError(
            f"polygon sides {missing} not resolved by the coarse mesh; "
            "adjust background_cells")
    return mesh


def generate_scatterer_mesh(geom: ScattererGeometry, level: int) -> Mesh:
    """Coarse interface-fitted mesh of the scatterer domain, refined ``level`` times.

    Triangles inside the polygon get label 1, the others label 0.
    """
    if level < 0:
        raise ConfigurationError("level must be non-negative")
    mesh = _coarse_scatterer_mesh(geom)
    for _ in range(level):
        mesh = refine_uniform(mesh)
    return mesh


def refine_uniform(m: Mesh) -> Mesh:
    """Red refinement: split every triangle into four via edge midpoints.

    Coarse vertices keep their ids; the midpoint of coarse edge ``e`` gets id
    ``V + e``.  Children of triangle ``t`` are ``4t, ..., 4t + 3``.
    """
    nv = m.n_vertices
    mid = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
    vertices = np.concatenate([m.vertices, mid])
    a, b, c = m.triangles.T
    mab, mbc, mca = (nv + m.tri_edges).T
    children = np.stack([
        np.stack([a, mab, mca], axis=1),
        np.stack([mab, b, mbc], axis=1),
        np.stack([mca, mbc, c], axis=1),
        np.stack([mab, mbc, mca], axis=1),
    ], axis=1).reshape(-1, 3)
    labels = np.repeat(m.tri_label, 4)
    parent = np.repeat(np.arange(m.n_triangles), 4)
    return Mesh.from_arrays(vertices, children, labels, level=m.level + 1,
                            parent=parent)


# --------------------------------------------------------------------------
# reduced edge classification

REDUCTION_MODES = ("none", "A5", "A5star", "all")


def classify_reduced_edges(m, mat, mode, f_jump=None, g_support=None):
    """Boolean mask of edges that carry a single degree of freedom.

    Parameters
    ----------
    m : Mesh
    mat : MaterialField
    mode : {"none", "A5", "A5star", "all"}
        ``A5`` keeps two dofs where sigma jumps and on boundary edges with
        nonzero sigma.  ``A5star`` additionally keeps two dofs on interior
        edges flagged by ``f_jump`` and on boundary edges in ``g_support``.
    f_jump : array_like of bool, optional
        Per-edge flag, True where the volume source jumps across the edge.
    g_support : array_like of bool, optional
        Per-edge flag, True on boundary edges where the boundary source is
        nonzero.  Defaults to every boundary edge.
    """
    if mode not in REDUCTION_MODES:
        raise ConfigurationError(f"unknown reduction mode {mode!r}")
    if mode == "none":
        return np.zeros(m.n_edges, dtype=bool)
    if mode == "all":
        return np.ones(m.n_edges, dtype=bool)

    sigma = mat.sigma
    et = m.edge_tris
    interior = et[:, 1] >= 0
    keep_two = np.zeros(m.n_edges, dtype=bool)
    keep_two[interior] = sigma[et[interior, 0]] != sigma[et[interior, 1]]
    bnd = ~interior
    keep_two[bnd] = sigma[et[bnd, 0]] != 0
    if mode == "A5star":
        if f_jump is not None:
            keep_two |= np.asarray(f_jump, dtype=bool) & interior
        if g_support is None:
            keep_two |= bnd
        else:
            keep_two |= np.asarray(g_support, dtype=bool) & bnd
    return ~keep_two


# --------------------------------------------------------------------------
# plain-text file format

HEADER = "meshfmt 1 2d"


def _data_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def parse_mesh(text: str) -> Mesh:
    """Parse the plain-text mesh format.

    ::

        meshfmt 1 2d
        vertices N
        x y            (N lines)
        triangles M
        i j k label    (M lines, 0-based, counterclockwise)

    Text after ``#`` is ignored.
    """
    lines = _data_lines(text)

    def expect_count(keyword):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise MeshParseError(f"unexpected end of file, expected '{keyword}'")
        parts = line.split()
        if len(parts) != 2 or parts[0] != keyword:
            raise MeshParseError(f"expected '{keyword} <count>'", lineno)
        try:
            count = int(parts[1])
        except ValueError:
            raise MeshParseError(f"invalid count {parts[1]!r}", lineno)
        if count < 0:
            raise MeshParseError("negative count", lineno)
        return count

    try:
        lineno, line = next(lines)
    except StopIteration:
        raise MeshParseError("empty mesh file")
    if line.split() != HEADER.split():
        raise MeshParseError(f"expected header '{HEADER}'", lineno)

    nv = expect_count("vertices")
    vertices = np.empty((nv, 2))
    for k in range(nv):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise MeshParseError(f"expected {nv} vertices, found {k}")
        parts = line.split()
        if len(parts) != 2:
            raise MeshParseError("vertex line needs 'x y'", lineno)
        try:
            vertices[k] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshParseError(f"invalid coordinate in {line!r}", lineno)
        if not np.all(np.isfinite(vertices[k])):
            raise MeshParseError("non-finite coordinate", lineno)

    nt = expect_count("triangles")
    triangles = np.empty((nt, 3), dtype=np.int64)
    labels = np.empty(nt, dtype=np.int64)
    for k in range(nt):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise MeshParseError(f"expected {nt} triangles, found {k}")
        parts = line.split()
        if len(parts) != 4:
            raise MeshParseError("triangle line needs 'i j k label'", lineno)
        try:
            triangles[k] = [int(p) for p in parts[:3]]
            labels[k] = int(parts[3])
        except ValueError:
            raise MeshParseError(f"invalid integer in {line!r}", lineno)

    for lineno, line in lines:
        raise MeshParseError(f"trailing content {line!r}", lineno)

    return Mesh.from_arrays(vertices, triangles, labels)


def format_mesh(m: Mesh) -> str:
    out = [HEADER, f"vertices {m.n_vertices}"]
    out.extend(f"{x!r} {y!r}" for x, y in m.vertices.tolist())
    out.append(f"triangles {m.n_triangles}")
    out.extend(f"{i} {j} {k} {lab}" for (i, j, k), lab in
               zip(m.triangles.tolist(), m.tri_label.tolist()))
    return "\n".join(out) + "\n"


def read_mesh(path) -> Mesh:
    with open(path, encoding="utf-8") as fh:
        return parse_mesh(fh.read())


def write_mesh(m: Mesh, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_mesh(m))


def from_points_triangles(points, triangles, labels=None):
    """Import a third-party triangulation (e.g. arrays exported by a mesher).

    Orientation is normalised to counterclockwise; the result can be written
    with :func:`write_mesh`.
    """
    points = np.asarray(points, dtype=float)[:, :2]
    triangles = np.array(triangles, dtype=np.int64)
    flip = signed_areas(points, triangles) < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    return Mesh.from_arrays(points, triangles, labels)
