import math

import numpy as np
import pytest

from coeffopt.mesh import (
    Mesh,
    MeshCorruptionError,
    build_unit_disk_mesh,
    build_unit_square_mesh,
    cell_geometry,
    write_vtk,
)


def edge_set(triangles):
    e = np.vstack([triangles[:, [0, 1]], triangles[:, [1, 2]],
                   triangles[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0)


def test_square_counts():
    n = 7
    m = build_unit_square_mesh(n)
    assert m.n_vertices == (n + 1) ** 2
    assert m.n_cells == 2 * n * n
    assert int(m.boundary.sum()) == 4 * n


def test_square_areas_uniform():
    n = 6
    m = build_unit_square_mesh(n)
    # every criss-cross half-quad has area 1/(2 n^2)
    assert np.allclose(m.cell_areas, 1.0 / (2 * n * n), rtol=0, atol=1e-15)
    assert abs(m.cell_areas.sum() - 1.0) < 1e-13


def test_square_rejects_bad_n():
    with pytest.raises(ValueError):
        build_unit_square_mesh(0)
    with pytest.raises(ValueError):
        build_unit_square_mesh(2.5)


def test_disk_polygon_area():
    for h in (0.3, 0.11):
        m = build_unit_disk_mesh(h)
        n = max(1, math.ceil(1.0 / h))
        # inscribed polygon of 6n boundary vertices
        expected = 3.0 * n * math.sin(math.pi / (3.0 * n))
        assert abs(m.cell_areas.sum() - expected) < 1e-12


def test_disk_structure():
    h = 0.2
    m = build_unit_disk_mesh(h)
    n = math.ceil(1.0 / h)
    assert np.allclose(m.vertices[0], 0.0)
    r = np.hypot(m.vertices[:, 0], m.vertices[:, 1])
    assert r.max() <= 1.0 + 1e-12
    # boundary = outer ring only
    assert int(m.boundary.sum()) == 6 * n
    assert np.allclose(r[m.boundary], 1.0, atol=1e-12)
    assert not m.boundary[0]


def test_disk_euler_characteristic():
    m = build_unit_disk_mesh(0.15)
    v = m.n_vertices
    e = edge_set(m.triangles).shape[0]
    f = m.n_cells
    assert v - e + f == 1  # disk topology


def test_disk_rejects_bad_h():
    for h in (0.0, -0.1, 1.0, 1.5):
        with pytest.raises(ValueError):
            build_unit_disk_mesh(h)


def test_cell_geometry_rejects_clockwise():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(MeshCorruptionError):
        cell_geometry(verts, np.array([[0, 2, 1]]))


def test_basis_gradients_partition_of_unity():
    m = build_unit_disk_mesh(0.3)
    # hat functions sum to 1, so their gradients sum to 0 per cell
    s = m.cell_basis_gradients.sum(axis=1)
    assert np.abs(s).max() < 1e-12


def test_basis_gradients_reference_triangle():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    areas, grads = cell_geometry(verts, np.array([[0, 1, 2]]))
    assert abs(areas[0] - 0.5) < 1e-15
    assert np.allclose(grads[0, 0], [-1.0, -1.0])
    assert np.allclose(grads[0, 1], [1.0, 0.0])
    assert np.allclose(grads[0, 2], [0.0, 1.0])


def test_mesh_validates_indices():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    tris = np.array([[0, 1, 3]])
    with pytest.raises(MeshCorruptionError):
        Mesh(verts, tris, np.zeros(3, dtype=bool), np.array([0.5]),
             np.zeros((1, 3, 2)))


def test_mesh_arrays_read_only():
    m = build_unit_square_mesh(2)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 9.0
    with pytest.raises(ValueError):
        m.cell_areas[0] = 1.0


def test_builds_deterministic():
    a = build_unit_disk_mesh(0.17)
    b = build_unit_disk_mesh(0.17)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.triangles, b.triangles)
    assert np.array_equal(a.cell_areas, b.cell_areas)


def test_centroids():
    m = build_unit_square_mesh(1)
    c = m.cell_centroids()
    assert c.shape == (2, 2)
    assert np.allclose(c.mean(axis=0), [0.5, 0.5])


def test_write_vtk_roundtrip(tmp_path):
    m = build_unit_square_mesh(2)
    path = tmp_path / "out.vtk"
    u = np.linspace(0.0, 1.0, m.n_vertices)
    a = np.arange(m.n_cells, dtype=float)
    write_vtk(path, m, point_data={"u": u}, cell_data={"a": a})
    text = path.read_text()
    lines = text.splitlines()
    assert lines[0] == "# vtk DataFile Version 2.0"
    assert f"POINTS {m.n_vertices} float" in lines
    assert f"CELLS {m.n_cells} {4 * m.n_cells}" in lines
    assert f"POINT_DATA {m.n_vertices}" in lines
    assert f"CELL_DATA {m.n_cells}" in lines
    assert "SCALARS u float 1" in lines
    assert "SCALARS a float 1" in lines
    # last cell value hits the cell-data tail of the file
    assert f"{a[-1]:.12e}" in lines

    write_vtk(tmp_path / "again.vtk", m, point_data={"u": u},
              cell_data={"a": a})
    assert (tmp_path / "again.vtk").read_bytes() == path.read_bytes()


def test_write_vtk_rejects_bad_shapes(tmp_path):
    m = build_unit_square_mesh(2)
    with pytest.raises(ValueError):
        write_vtk(tmp_path / "bad.vtk", m, point_data={"u": np.zeros(3)})
    with pytest.raises(ValueError):
        write_vtk(tmp_path / "bad.vtk", m, cell_data={"a": np.zeros(3)})
