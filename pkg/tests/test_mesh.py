import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yeefem.exceptions import ConfigurationError, MeshParseError, MeshValidationError
from yeefem.mesh import (
    MaterialField,
    Mesh,
    ScattererGeometry,
    classify_reduced_edges,
    format_mesh,
    from_points_triangles,
    generate_scatterer_mesh,
    parse_mesh,
    read_mesh,
    refine_uniform,
    write_mesh,
)

from conftest import square_mesh


def test_reference_triangle_edges(reference_triangle):
    m = reference_triangle
    assert m.edges.tolist() == [[0, 1], [0, 2], [1, 2]]
    assert len(m.boundary_edges) == 3
    # local edge 2 runs 2 -> 0, against the stored orientation
    assert m.tri_edge_sign.tolist() == [[1, 1, -1]]
    assert m.areas[0] == pytest.approx(0.5)


def test_square_mesh_topology(unit_square):
    m = unit_square
    assert m.n_vertices - m.n_edges + m.n_triangles == 1
    assert len(m.boundary_edges) == 16
    assert np.all(m.edges[:, 0] < m.edges[:, 1])
    assert np.all(m.areas > 0)
    interior = m.edge_tris[:, 1] >= 0
    assert interior.sum() == m.n_edges - 16


@pytest.mark.parametrize("tris, match", [
    ([[0, 2, 1]], "clockwise"),
    ([[0, 1, 5]], "missing vertex"),
    ([[0, 1, 1]], "repeated"),
])
def test_invalid_triangles(tris, match):
    with pytest.raises(MeshValidationError, match=match):
        Mesh.from_arrays([[0, 0], [1, 0], [0, 1]], tris)


def test_degenerate_triangle():
    with pytest.raises(MeshValidationError, match="degenerate"):
        Mesh.from_arrays([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])


def test_edge_shared_by_three_triangles():
    pts = [[0, 0], [1, 0], [0.5, 1], [0.5, -1], [0.5, 2]]
    with pytest.raises(MeshValidationError, match="shared by 3"):
        Mesh.from_arrays(pts, [[0, 1, 2], [1, 0, 3], [0, 1, 4]])


def test_overlapping_triangles():
    pts = [[0, 0], [1, 0], [0.5, 1], [0.5, 0.5]]
    with pytest.raises(MeshValidationError, match="overlap"):
        Mesh.from_arrays(pts, [[0, 1, 2], [0, 1, 3]])


def test_hanging_node_rejected():
    # vertex 4 sits on edge (0, 1) of the left triangle but only the right
    # side is split
    pts = [[0, 0], [2, 0], [1, 1], [1, -1], [1, 0]]
    tris = [[0, 1, 2], [0, 3, 4], [4, 3, 1]]
    with pytest.raises(MeshValidationError, match="non-conforming"):
        Mesh.from_arrays(pts, tris)


def test_refine_uniform(unit_square):
    m = refine_uniform(unit_square)
    assert m.n_triangles == 4 * unit_square.n_triangles
    assert m.n_vertices == unit_square.n_vertices + unit_square.n_edges
    assert m.h() == pytest.approx(unit_square.h() / 2, rel=1e-14)
    assert m.areas.sum() == pytest.approx(1.0, rel=1e-14)
    assert np.array_equal(m.parent, np.repeat(np.arange(unit_square.n_triangles), 4))
    e = 5
    mid = 0.5 * unit_square.vertices[unit_square.edges[e]].sum(axis=0)
    assert np.allclose(m.vertices[unit_square.n_vertices + e], mid)
    # children lie inside their parent
    geom_parent = unit_square.centroids()[m.parent]
    assert np.all(np.linalg.norm(m.centroids() - geom_parent, axis=1) < unit_square.h())
    assert m.level == 1


def test_refinement_keeps_labels():
    m = square_mesh(4, labels=True)
    r = refine_uniform(m)
    assert np.array_equal(r.tri_label, np.repeat(m.tri_label, 4))


@pytest.mark.parametrize("level", [0, 1, 2])
def test_scatterer_mesh(level):
    geom = ScattererGeometry()
    m = generate_scatterer_mesh(geom, level)
    assert len(m.interface_edges()) == geom.segments * 2 ** level
    # the disk is the inscribed polygon, so label-1 area is the polygon area
    poly_area = 0.5 * geom.segments * geom.radius ** 2 * np.sin(2 * np.pi / geom.segments)
    assert m.areas[m.tri_label == 1].sum() == pytest.approx(poly_area, rel=1e-12)
    assert m.areas.sum() == pytest.approx(4.0, rel=1e-12)
    bv = m.vertices[m.edges[m.boundary_edges].ravel()]
    assert np.all(np.isclose(np.abs(bv).max(axis=1), 1.0))


def test_scatterer_mesh_is_deterministic():
    a = generate_scatterer_mesh(ScattererGeometry(), 0)
    b = generate_scatterer_mesh(ScattererGeometry(), 0)
    assert format_mesh(a) == format_mesh(b)


def test_geometry_validation():
    with pytest.raises(ConfigurationError, match="at least 8"):
        ScattererGeometry(segments=6)
    with pytest.raises(ConfigurationError):
        ScattererGeometry(radius=2.0)
    with pytest.raises(ConfigurationError):
        generate_scatterer_mesh(ScattererGeometry(), -1)


def test_materials_from_labels():
    m = square_mesh(2, labels=True)
    mat = MaterialField.from_labels(m, {0: (1.0, 0.0, 1.0), 1: (2.0, 5.0, 0.5)})
    assert np.array_equal(mat.sigma == 5.0, m.tri_label == 1)
    with pytest.raises(ConfigurationError, match="no material"):
        MaterialField.from_labels(m, {0: (1.0, 0.0, 1.0)})
    with pytest.raises(ConfigurationError):
        MaterialField.uniform(m, eps=0.0)


def test_classify_modes():
    m = square_mesh(4, labels=True)
    mat = MaterialField.from_labels(m, {0: (1, 0, 1), 1: (1, 3, 1)})
    assert not classify_reduced_edges(m, mat, "none").any()
    assert classify_reduced_edges(m, mat, "all").all()

    a5 = classify_reduced_edges(m, mat, "A5")
    iface = m.interface_edges()
    assert not a5[iface].any()
    # boundary edges of the conducting half keep two dofs, the others are reduced
    bnd = m.boundary_edges
    conducting = mat.sigma[m.edge_tris[bnd, 0]] > 0
    assert not a5[bnd[conducting]].any()
    assert a5[bnd[~conducting]].all()
    interior = np.setdiff1d(np.flatnonzero(m.edge_tris[:, 1] >= 0), iface)
    assert a5[interior].all()

    a5s = classify_reduced_edges(m, mat, "A5star")
    assert not a5s[bnd].any()
    assert np.array_equal(a5s[interior], a5[interior])

    g = np.zeros(m.n_edges, dtype=bool)
    g[bnd[:2]] = True
    a5g = classify_reduced_edges(m, mat, "A5star", g_support=g)
    assert not a5g[bnd[:2]].any()
    assert np.array_equal(a5g[bnd[2:]], a5[bnd[2:]])

    f = np.zeros(m.n_edges, dtype=bool)
    f[interior[:3]] = True
    a5f = classify_reduced_edges(m, mat, "A5star", f_jump=f)
    assert not a5f[interior[:3]].any()

    with pytest.raises(ConfigurationError):
        classify_reduced_edges(m, mat, "bogus")


def test_file_roundtrip(tmp_path):
    m = generate_scatterer_mesh(ScattererGeometry(), 0)
    path = tmp_path / "m.txt"
    write_mesh(m, path)
    back = read_mesh(path)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.triangles, m.triangles)
    assert np.array_equal(back.tri_label, m.tri_label)
    assert path.read_text().startswith("meshfmt 1 2d\nvertices ")


def test_parse_with_comments():
    text = """# a comment
meshfmt 1 2d
vertices 3   # three of them
0 0
1 0
0 1
triangles 1
0 1 2 7
"""
    m = parse_mesh(text)
    assert m.tri_label.tolist() == [7]


@pytest.mark.parametrize("text, line", [
    ("meshfmt 2 2d\n", 1),
    ("meshfmt 1 2d\nvertices x\n", 2),
    ("meshfmt 1 2d\nvertices 1\n0 zero\n", 3),
    ("meshfmt 1 2d\nvertices 1\n0 0 0\n", 3),
    ("meshfmt 1 2d\nvertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2\n", 7),
    ("meshfmt 1 2d\nvertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2 0\nextra\n", 8),
])
def test_parse_errors_report_line(text, line):
    with pytest.raises(MeshParseError) as info:
        parse_mesh(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_parse_truncated():
    with pytest.raises(MeshParseError, match="expected 3 vertices"):
        parse_mesh("meshfmt 1 2d\nvertices 3\n0 0\n")
    with pytest.raises(MeshParseError, match="empty"):
        parse_mesh("# nothing\n")


def test_parse_rejects_invalid_topology():
    with pytest.raises(MeshValidationError):
        parse_mesh("meshfmt 1 2d\nvertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 2 1 0\n")


def test_import_fixes_orientation():
    m = from_points_triangles([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 2, 1]])
    assert m.areas[0] > 0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False),
                min_size=4, max_size=4))
def test_roundtrip_is_bit_exact(coords):
    x0, y0, dx, dy = coords
    pts = np.array([[x0, y0], [x0 + abs(dx) + 1.0, y0], [x0, y0 + abs(dy) + 1.0]])
    m = Mesh.from_arrays(pts, [[0, 1, 2]])
    back = parse_mesh(format_mesh(m))
    assert np.array_equal(back.vertices, m.vertices)
