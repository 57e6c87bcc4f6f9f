import numpy as np
import pytest

from stokestab.mesh import (
    Mesh, MeshError, TOP, BOTTOM,
    load_msh, save_msh, save_vtk,
    gen_structured_tri, gen_zigzag, gen_perturbed,
    gen_extruded_tet, gen_structured_cube, gen_quad_macro,
)

TWO_TRI_MSH = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
$EndNodes
$Elements
6
1 1 2 1 1 1 2
2 1 2 2 2 2 3
3 1 2 3 3 3 4
4 1 2 4 4 4 1
5 2 2 0 0 1 2 3
6 2 2 0 0 1 3 4
$EndElements
"""


def unit_square_two_tri():
    verts = [(0, 0), (1, 0), (1, 1), (0, 1)]
    cells = [(0, 1, 2), (0, 2, 3)]
    return Mesh(2, "triangle", verts, cells)


def test_load_msh_two_triangles(tmp_path):
    p = tmp_path / "sq.msh"
    p.write_text(TWO_TRI_MSH)
    mesh = load_msh(p)
    assert mesh.dim == 2
    assert mesh.num_vertices == 4
    assert mesh.num_cells == 2
    assert mesh.cell_kind == "triangle"
    tags = sorted(t for _, t in mesh.boundary_facets)
    assert tags == [1, 2, 3, 4]


def test_load_msh_rejects_other_versions(tmp_path):
    p = tmp_path / "bad.msh"
    p.write_text("$MeshFormat\n4.1 0 8\n$EndMeshFormat\n")
    with pytest.raises(MeshError, match="2.2"):
        load_msh(p)


def test_load_msh_parse_error_reports_line(tmp_path):
    p = tmp_path / "bad.msh"
    p.write_text(TWO_TRI_MSH.replace("1 0 0 0", "1 0 0"))
    with pytest.raises(MeshError, match="bad.msh:6"):
        load_msh(p)


def test_nonconforming_rejected_with_cell_pair():
    verts = [(0, 0), (1, 0), (0.5, 1), (0.5, -1), (0.5, 2)]
    cells = [(0, 1, 2), (0, 1, 3), (0, 1, 4)]  # edge (0,1) shared three times
    with pytest.raises(MeshError, match="shared by cells"):
        Mesh(2, "triangle", verts, cells)


def test_msh_round_trip(tmp_path):
    mesh = gen_zigzag(5, 4)
    p = tmp_path / "zz.msh"
    save_msh(mesh, p)
    back = load_msh(p)
    assert back.num_vertices == mesh.num_vertices
    assert back.num_cells == mesh.num_cells
    assert np.allclose(back.vertices, mesh.vertices, rtol=0, atol=1e-12)
    # cells equal as sets of vertex sets (orientation fix may reorder)
    a = {tuple(sorted(c)) for c in mesh.cells}
    b = {tuple(sorted(c)) for c in back.cells}
    assert a == b
    assert sorted(back.boundary_facets) == sorted(mesh.boundary_facets)


def test_msh_round_trip_tets(tmp_path):
    mesh = gen_extruded_tet(unit_square_two_tri(), 2, 1.0)
    p = tmp_path / "tet.msh"
    save_msh(mesh, p)
    back = load_msh(p)
    assert back.cell_kind == "tetrahedron"
    assert back.num_cells == mesh.num_cells
    assert np.allclose(back.vertices, mesh.vertices, atol=1e-12)


def _parse_vtk_points(path):
    lines = path.read_text().splitlines()
    i = next(k for k, ln in enumerate(lines) if ln.startswith("POINTS"))
    n = int(lines[i].split()[1])
    pts = [tuple(float(x) for x in lines[i + 1 + k].split()) for k in range(n)]
    return np.array(pts)


def test_save_vtk_fields_and_round_trip(tmp_path):
    mesh = gen_structured_tri(3, 1)
    p = tmp_path / "out.vtk"
    pressure = np.arange(mesh.num_vertices, dtype=float) * np.pi
    cellf = np.arange(mesh.num_cells, dtype=float)
    save_vtk(mesh, {"pressure": pressure, "marker": cellf}, p)
    text = p.read_text()
    assert "POINT_DATA" in text
    assert "CELL_DATA" in text
    assert "SCALARS pressure" in text
    pts = _parse_vtk_points(p)
    assert np.allclose(pts[:, :2], mesh.vertices, rtol=0, atol=1e-12)


def test_save_vtk_geometry_only(tmp_path):
    mesh = gen_structured_tri(2, 2)
    p = tmp_path / "geo.vtk"
    save_vtk(mesh, {}, p)
    text = p.read_text()
    assert "POINT_DATA" not in text
    assert "CELL_TYPES" in text


def test_save_vtk_length_mismatch(tmp_path):
    mesh = gen_structured_tri(2, 2)
    with pytest.raises(MeshError, match="length"):
        save_vtk(mesh, {"bad": np.zeros(3)}, tmp_path / "x.vtk")


def test_structured_tri_counts():
    mesh = gen_structured_tri(4, 3)
    assert mesh.num_vertices == 20
    assert mesh.num_cells == 24
    ys = np.unique(np.round(mesh.vertices[:, 1], 12))
    assert np.allclose(ys, [0, 1 / 3, 2 / 3, 1.0])
    assert len(mesh.interior_vertices()) == 3 * 2
    mesh.validate(geometric=True)


def test_structured_tri_single_cell_pair():
    mesh = gen_structured_tri(1, 1)
    assert mesh.num_cells == 2


def test_structured_tri_interior_valence():
    mesh = gen_structured_tri(5, 4)
    counts = np.zeros(mesh.num_vertices, dtype=int)
    for cell in mesh.cells:
        counts[list(cell)] += 1
    interior = mesh.interior_vertices()
    assert len(interior) == 4 * 3
    assert np.all(counts[interior] == 6)


def test_zigzag_smallest_case():
    mesh = gen_zigzag(2, 2)
    assert mesh.num_cells == 8
    assert len(mesh.interior_vertices()) == 1
    mesh.validate(geometric=True)


def test_zigzag_15x15_size():
    mesh = gen_zigzag(15, 15)
    h = mesh.metrics().h
    # cells live in 1/15-size grid boxes stretched by the +-dy/4 shifts
    assert 1 / 15 < h < 2 / 15
    assert mesh.metrics().min_area > 0


def test_zigzag_no_horizontal_alignment_interior():
    mesh = gen_zigzag(6, 6)
    v = mesh.vertices
    adj = {}
    for cell in mesh.cells:
        c = [int(x) for x in cell]
        for i in range(3):
            a, b = c[i], c[(i + 1) % 3]
            adj.setdefault(a, set()).add(b)
            adj.setdefault(b, set()).add(a)
    for q0 in mesh.interior_vertices():
        dys = [abs(v[q][1] - v[q0][1]) for q in adj[int(q0)]]
        aligned = sum(1 for d in dys if d < 1e-12)
        assert aligned == 0
        vert = sum(1 for q in adj[int(q0)] if abs(v[q][0] - v[q0][0]) < 1e-12)
        assert vert == 2


def test_perturbed_zero_amplitude_identity():
    base = gen_zigzag(4, 4)
    out = gen_perturbed(base, 0.0, seed=1)
    assert np.array_equal(out.vertices, base.vertices)


def test_perturbed_deterministic_and_boundary_fixed():
    base = gen_structured_tri(6, 6)
    a = gen_perturbed(base, 0.05, seed=42)
    b = gen_perturbed(base, 0.05, seed=42)
    assert np.array_equal(a.vertices, b.vertices)
    c = gen_perturbed(base, 0.05, seed=43)
    assert not np.array_equal(a.vertices, c.vertices)
    bnd = base.boundary_vertex_mask()
    assert np.array_equal(a.vertices[bnd], base.vertices[bnd])
    iv = base.interior_vertices()
    assert np.array_equal(a.vertices[iv, 1], base.vertices[iv, 1])


def test_perturbed_clipping_keeps_positive_cells():
    base = gen_structured_tri(5, 5)
    out = gen_perturbed(base, 10.0, seed=7)  # silly amplitude, must clip
    assert out.cell_measures().min() > 0


def test_extruded_tet_counts():
    mesh = gen_extruded_tet(unit_square_two_tri(), 1, 1.0)
    assert mesh.num_cells == 6
    assert mesh.cell_kind == "tetrahedron"
    assert np.isclose(mesh.cell_measures().sum(), 1.0)
    mesh.validate()


def test_extruded_tags():
    mesh = gen_extruded_tet(gen_structured_tri(2, 2), 2, 1.0)
    tags = {t for _, t in mesh.boundary_facets}
    assert {BOTTOM, TOP}.issubset(tags)
    assert np.isclose(mesh.cell_measures().sum(), 1.0)


def test_structured_cube_kuhn():
    mesh = gen_structured_cube(2, 2, 2)
    assert mesh.num_cells == 6 * 8
    assert np.isclose(mesh.cell_measures().sum(), 1.0)
    assert len(mesh.interior_vertices()) == 1
    mesh.validate()


def test_quad_macro():
    mesh = gen_quad_macro()
    assert mesh.num_vertices == 9
    assert mesh.num_cells == 4
    center = np.flatnonzero(np.all(np.abs(mesh.vertices) < 1e-14, axis=1))
    assert len(center) == 1
    assert np.isclose(mesh.cell_measures().sum(), 4.0)


def test_quad_macro_asymmetric():
    mesh = gen_quad_macro((0.5, 1.5), (2.0, 0.25))
    assert np.isclose(mesh.cell_measures().sum(), 2.0 * 2.25)
    mesh.validate()


def test_metrics():
    mesh = gen_structured_tri(2, 2)
    m = mesh.metrics()
    assert np.isclose(m.h, np.sqrt(2) / 2)
    assert np.isclose(m.min_area, 0.125)
    assert m.shape_ratio > 0


def test_generators_conform():
    for mesh in [gen_structured_tri(3, 3), gen_zigzag(4, 3),
                 gen_quad_macro(), gen_structured_cube(1, 1, 1)]:
        mesh.validate()
