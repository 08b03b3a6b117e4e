import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mixdim.mesh import (
    Line,
    Mesh1D,
    Mesh3D,
    MeshError,
    OutOfDomainError,
    _locate_generic,
    build_conforming_mesh,
    build_nonconforming_mesh,
    evaluate_point,
    kuhn_box_mesh,
    locate_line_elements,
    square_tube,
    tube_surface_mesh,
)
from oracles import barycentric_eval


@pytest.mark.parametrize("level, counts", [(1, (125, 5, 40)), (4, (35937, 33, 2112))])
def test_conforming_counts(level, counts):
    m, l1, surf = build_conforming_mesh(level)
    assert (m.num_vertices, l1.num_vertices, surf.num_vertices) == counts


@pytest.mark.parametrize("level, counts", [(1, (180, 13)), (3, (5508, 49))])
def test_nonconforming_counts(level, counts):
    m, l1 = build_nonconforming_mesh(level)
    assert (m.num_vertices, l1.num_vertices) == counts


def test_nonconforming_line_resolution():
    _, l1 = build_nonconforming_mesh(2)
    assert np.allclose(l1.lengths, 1 / 24, rtol=0, atol=1e-15)


@pytest.mark.parametrize("build", [build_conforming_mesh, build_nonconforming_mesh])
@pytest.mark.parametrize("level", [1, 2, 3])
def test_volume_and_count_invariants(build, level):
    m = build(level)[0]
    nx, ny, nz = m.cells_per_side
    assert m.num_vertices == (nx + 1) * (ny + 1) * (nz + 1)
    assert m.num_cells == 6 * nx * ny * nz
    assert np.all(m.volumes > 0)
    assert abs(m.volumes.sum() - 1.0) < 1e-12


@pytest.mark.parametrize("level", [1, 2])
def test_face_adjacency(level):
    m, _ = build_nonconforming_mesh(level)
    faces, adj = m.faces
    nx, ny, nz = m.cells_per_side
    boundary = 4 * (nx * ny + ny * nz + nx * nz)
    assert np.sum(adj[:, 1] < 0) == boundary
    assert len(faces) == (4 * m.num_cells + boundary) // 2
    interior = adj[:, 1] >= 0
    for f, (a, b) in zip(faces[interior], adj[interior]):
        assert set(f) <= set(m.tets[a]) and set(f) <= set(m.tets[b])
        assert a != b
    # each interior face appears once, so the relation is symmetric by construction
    pairs = {tuple(sorted(p)) for p in adj[interior]}
    assert len(pairs) == interior.sum()


@pytest.mark.parametrize("level", [1, 2, 3])
def test_surface_area_and_planes(level):
    _, _, surf = build_conforming_mesh(level)
    assert abs(surf.areas.sum() - 2.0) < 2e-12
    v = surf.vertices[surf.triangles]
    on = np.zeros(len(v), dtype=bool)
    for d in (0, 1):
        for val in (0.25, 0.75):
            on |= np.all(np.abs(v[:, :, d] - val) < 1e-14, axis=1)
    assert on.all()


def test_surface_is_made_of_tet_faces():
    m, _, surf = build_conforming_mesh(2)
    faces = m.faces[0]
    tri = np.sort(surf.parent_vertex[surf.triangles], axis=1)
    assert np.array_equal(faces[surf.parent_face], tri)


def test_line_mesh_invariants():
    for build in (build_conforming_mesh, build_nonconforming_mesh):
        l1 = build(2)[1]
        assert np.all(np.diff(l1.vertices) > 0)
        assert l1.vertices[0] == 0.0 and l1.vertices[-1] == 1.0
        assert abs(l1.lengths.sum() - 1.0) < 1e-14


def test_line_edges_are_tet_edges_in_conforming_mesh():
    m, l1, _ = build_conforming_mesh(1)
    idx = [m.vertex_index(2, 2, k) for k in range(5)]
    assert np.allclose(m.vertices[idx][:, 2], l1.vertices)
    edges = {tuple(sorted(e)) for t in m.tets for e in [(t[i], t[j]) for i in range(4) for j in range(i + 1, 4)]}
    assert all(tuple(sorted((a, b))) in edges for a, b in zip(idx[:-1], idx[1:]))


def test_no_tet_edge_on_line_in_nonconforming_mesh():
    m, _ = build_nonconforming_mesh(1)
    x = m.vertices
    on_line = np.flatnonzero((np.abs(x[:, 0] - 0.5) < 1e-12) & (np.abs(x[:, 1] - 0.5) < 1e-12))
    assert len(on_line) == 0


def test_level_guard():
    for bad in (0, -1):
        with pytest.raises(MeshError):
            build_conforming_mesh(bad)
        with pytest.raises(MeshError):
            build_nonconforming_mesh(bad)


@pytest.mark.parametrize("level, expected", [(1, 24), (2, 48), (3, 96)])
def test_gh_counts(level, expected):
    m, _ = build_nonconforming_mesh(level)
    inter = locate_line_elements(m)
    assert len(inter.g_h) == expected


@pytest.mark.parametrize("level", [1, 2, 3])
def test_intersection_covers_line(level):
    m, _ = build_nonconforming_mesh(level)
    inter = locate_line_elements(m)
    assert abs(inter.total_length - 1.0) < 1e-12
    assert inter.s_start[0] == 0.0 and inter.s_end[-1] == 1.0
    assert np.allclose(inter.s_start[1:], inter.s_end[:-1], atol=1e-15)
    assert set(inter.cells) <= set(inter.g_h)
    # every piece lies in its cell: midpoints have nonnegative barycentrics there
    mid = Line().point(0.5 * (inter.s_start + inter.s_end))
    assert np.all(m.barycentric(inter.cells, mid) > -1e-12)


def test_intersection_matches_generic_search():
    m, _ = build_nonconforming_mesh(1)
    a = locate_line_elements(m)
    b = _locate_generic(m, np.array([0.5, 0.5, 0.0]), np.array([0.5, 0.5, 1.0]))
    assert np.array_equal(a.g_h, b.g_h)
    assert np.allclose(a.s_start, b.s_start) and np.array_equal(a.cells, b.cells)
    assert np.allclose(a.internal_faces, b.internal_faces)


def test_single_tet_chord():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]])
    m = Mesh3D(v, np.array([[0, 1, 2, 3]]), (1, 1, 1))
    # ends on the face x + y + z = 1 away from its edges
    inter = locate_line_elements(m, Line((0.1, 0.1, 0.1), (0.3, 0.3, 0.4)))
    assert inter.cells.tolist() == [0]
    assert (inter.s_start[0], inter.s_end[0]) == (0.0, 1.0)


def test_line_outside_box():
    m, _ = build_nonconforming_mesh(1)
    with pytest.raises(OutOfDomainError):
        locate_line_elements(m, Line((0.5, 0.5, -0.1), (0.5, 0.5, 1.0)))


def test_evaluate_affine_example():
    m, _, _ = build_conforming_mesh(1)
    x = m.vertices
    c = x[:, 0] + 2 * x[:, 1] + 3 * x[:, 2]
    assert abs(evaluate_point(m, c, [0.3, 0.4, 0.5]) - 2.6) < 1e-13
    assert abs(evaluate_point(m, np.ones(m.num_vertices), [0.123, 0.9, 0.01]) - 1.0) < 1e-13


def test_evaluate_quadratic_against_oracle():
    m, _, _ = build_conforming_mesh(1)
    c = m.vertices[:, 0] ** 2
    for p in ([0.5, 0.5, 0.5], [0.3, 0.61, 0.2], [0.125, 0.375, 0.9]):
        ref = barycentric_eval(m.vertices, m.tets, c, p)
        assert ref and np.allclose(ref, ref[0], atol=1e-13)
        assert abs(evaluate_point(m, c, p) - ref[0]) < 1e-13


def test_evaluate_affine_random_points():
    m, _ = build_nonconforming_mesh(1)
    rng = np.random.default_rng(1)
    a = rng.standard_normal(4)
    c = m.vertices @ a[:3] + a[3]
    pts = rng.random((1000, 3))
    assert np.max(np.abs(evaluate_point(m, c, pts) - (pts @ a[:3] + a[3]))) < 1e-13


def test_evaluate_on_shared_entities_is_single_valued():
    m, _, _ = build_conforming_mesh(1)
    c = np.sin(m.vertices @ np.array([1.0, 2.0, 3.0]))
    for p in ([0.25, 0.5, 0.5], [0.25, 0.25, 0.3], [0.375, 0.375, 0.375]):
        vals = barycentric_eval(m.vertices, m.tets, c, p)
        assert len(vals) >= 2
        assert np.ptp(vals) < 1e-13
        assert abs(evaluate_point(m, c, p) - vals[0]) < 1e-13


def test_evaluate_out_of_domain():
    m, _, _ = build_conforming_mesh(1)
    with pytest.raises(OutOfDomainError):
        evaluate_point(m, np.zeros(m.num_vertices), [1.2, 0.5, 0.5])


@given(st.floats(0, 1), st.floats(0, 1))
def test_cross_section(s, t):
    g = square_tube()
    assert g.area(s) == 0.25 and g.perimeter(s) == 2.0
    p = g.boundary_param(s, t)
    off = np.abs(p[:2] - 0.5)
    assert abs(max(off) - 0.25) < 1e-14 and abs(p[2] - s) < 1e-14


def test_boundary_param_single_traversal():
    g = square_tube()
    t = np.linspace(0, 1, 4001)[:-1]
    p = g.boundary_param(0.3, t)
    seg = np.linalg.norm(np.diff(np.vstack([p, p[:1]]), axis=0), axis=1)
    assert abs(seg.sum() - 2.0) < 1e-12
    assert len(np.unique(np.round(p, 12), axis=0)) == len(t)


def test_kuhn_split_shares_main_diagonal():
    m = kuhn_box_mesh(1, 1, 1)
    assert all({0, 7} <= set(t) for t in m.tets)


def test_export_text():
    m = kuhn_box_mesh(1, 1, 1)
    lines = m.export_text().splitlines()
    assert lines[0] == "vertices 8 tets 6"
    assert len(lines) == 1 + 8 + 6
    assert np.allclose([list(map(float, l.split())) for l in lines[1:9]], m.vertices)


def test_tube_surface_mesh():
    s = tube_surface_mesh(32, 32)
    assert abs(s.areas.sum() - 2.0) < 1e-12
    assert s.num_vertices == 33 * 32 and s.num_cells == 2 * 32 * 32
    assert np.all(s.parent_vertex == -1)


def test_mesh1d_from_vertices():
    l1 = Mesh1D(np.linspace(0, 1, 5), Line())
    assert l1.num_cells == 4 and l1.resolution == 0.25
