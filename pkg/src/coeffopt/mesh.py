"""Triangular meshes of the unit square and the unit disk.

Both builders are structured and fully deterministic: the square uses an
alternating-diagonal (criss-cross) pattern, the disk concentric vertex
rings with six azimuthal sectors.  Cell areas and P1 hat-function
gradients are precomputed at construction time since every assembly and
gradient-recovery routine consumes them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Mesh",
    "MeshCorruptionError",
    "build_unit_square_mesh",
    "build_unit_disk_mesh",
    "cell_geometry",
    "write_vtk",
]


class MeshCorruptionError(RuntimeError):
    """A mesh failed its construction-time sanity checks."""


def cell_geometry(vertices: np.ndarray, triangles: np.ndarray):
    """Areas and P1 basis gradients of every triangle.

    Parameters
    ----------
    vertices : (n_vertices, 2) float array
    triangles : (n_cells, 3) int array
        Vertex indices, counter-clockwise order.

    Returns
    -------
    areas : (n_cells,) float array
        Signed areas; all must come out positive.
    grads : (n_cells, 3, 2) float array
        ``grads[c, i]`` is the (constant) gradient of the hat function
        attached to local vertex ``i`` of cell ``c``.

    Raises
    ------
    MeshCorruptionError
        If any triangle has nonpositive signed area (degenerate or
        clockwise cell).
    """
    p = vertices[triangles]  # (n_cells, 3, 2)
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    signed = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    bad = np.flatnonzero(signed <= 0.0)
    if bad.size:
        c = int(bad[0])
        raise MeshCorruptionError(
            f"cell {c} has nonpositive signed area {signed[c]:.3e}"
        )
    # grad of hat_i is the inward normal of the opposite edge over 2*area
    x, y = p[..., 0], p[..., 1]
    grads = np.empty((triangles.shape[0], 3, 2))
    inv2a = 1.0 / (2.0 * signed)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        grads[:, i, 0] = (y[:, j] - y[:, k]) * inv2a
        grads[:, i, 1] = (x[:, k] - x[:, j]) * inv2a
    return signed, grads


@dataclass(frozen=True)
class Mesh:
    """Conforming triangulation with precomputed P1 geometry.

    Attributes
    ----------
    vertices : (n_vertices, 2) float array
    triangles : (n_cells, 3) int array
        Counter-clockwise vertex indices.
    boundary : (n_vertices,) bool array
        True on Dirichlet-boundary vertices.
    cell_areas : (n_cells,) float array
    cell_basis_gradients : (n_cells, 3, 2) float array

    Arrays are frozen (read-only) after construction; the mesh is safe
    to share between concurrent runs.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    cell_areas: np.ndarray
    cell_basis_gradients: np.ndarray

    def __post_init__(self):
        nv = self.vertices.shape[0]
        tri = self.triangles
        if tri.min() < 0 or tri.max() >= nv:
            raise MeshCorruptionError("triangle refers to a nonexistent vertex")
        if len({(self.boundary.shape[0]), nv}) != 1:
            raise MeshCorruptionError("boundary flag array has wrong length")
        if not np.all(self.cell_areas > 0.0):
            c = int(np.flatnonzero(self.cell_areas <= 0.0)[0])
            raise MeshCorruptionError(f"cell {c} has nonpositive area")
        for arr in (
            self.vertices,
            self.triangles,
            self.boundary,
            self.cell_areas,
            self.cell_basis_gradients,
        ):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.triangles.shape[0]

    def cell_centroids(self) -> np.ndarray:
        """(n_cells, 2) centroid coordinates."""
        return self.vertices[self.triangles].mean(axis=1)


def _finish(vertices, triangles, boundary) -> Mesh:
    vertices = np.ascontiguousarray(vertices, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    boundary = np.ascontiguousarray(boundary, dtype=bool)
    areas, grads = cell_geometry(vertices, triangles)
    return Mesh(vertices, triangles, boundary, areas, grads)


def build_unit_square_mesh(n: int) -> Mesh:
    """Criss-cross triangulation of [0,1]^2 with n x n quads.

    Each quad is split along a diagonal whose direction alternates in a
    checkerboard pattern, which keeps the mesh free of a preferred
    direction.  (n+1)^2 vertices, 2 n^2 cells.

    Parameters
    ----------
    n : int
        Subdivisions per side, n >= 1.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    coords = np.arange(n + 1) / n
    xx, yy = np.meshgrid(coords, coords, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            if (i + j) % 2 == 0:
                tris.append((v00, v10, v11))
                tris.append((v00, v11, v01))
            else:
                tris.append((v00, v10, v01))
                tris.append((v10, v11, v01))
    triangles = np.array(tris, dtype=np.int64)

    i_idx = np.tile(np.arange(n + 1), n + 1)
    j_idx = np.repeat(np.arange(n + 1), n + 1)
    boundary = (i_idx == 0) | (i_idx == n) | (j_idx == 0) | (j_idx == n)
    return _finish(vertices, triangles, boundary)


def build_unit_disk_mesh(h: float) -> Mesh:
    """Concentric-ring triangulation of the unit disk.

    Ring k of ceil(1/h) rings carries 6k equally spaced vertices at
    radius k/n, so both the radial and azimuthal spacings stay at or
    below h and every edge is shorter than 2h.  The construction is
    deterministic; the origin is vertex 0 and the outermost ring is
    flagged as boundary.

    Parameters
    ----------
    h : float
        Target edge length, 0 < h < 1.
    """
    if not (0.0 < h < 1.0):
        raise ValueError(f"h must lie in (0, 1), got {h!r}")
    n = max(1, math.ceil(1.0 / h))

    verts = [(0.0, 0.0)]
    for k in range(1, n + 1):
        m = 6 * k
        r = k / n
        ang = 2.0 * np.pi * np.arange(m) / m
        ring = np.column_stack([r * np.cos(ang), r * np.sin(ang)])
        verts.extend(map(tuple, ring))
    vertices = np.array(verts)

    def ring_start(k):
        # center is vertex 0; ring k >= 1 starts after 6*(1+...+(k-1))
        return 1 + 3 * k * (k - 1)

    tris = []
    # innermost fan around the center vertex
    s1 = ring_start(1)
    for j in range(6):
        tris.append((0, s1 + j, s1 + (j + 1) % 6))
    # annulus strips, six sectors each, merged by azimuthal position
    for k in range(2, n + 1):
        so, si = ring_start(k), ring_start(k - 1)
        mo, mi = 6 * k, 6 * (k - 1)
        for s in range(6):
            def outer(t):
                return so + (s * k + t) % mo

            def inner(t):
                return si + (s * (k - 1) + t) % mi

            po, pi = 0, 0
            while po < k or pi < k - 1:
                if po == k:
                    step_outer = False
                elif pi == k - 1:
                    step_outer = True
                else:
                    # advance the ring whose next vertex trails in angle
                    step_outer = (s * k + po + 1) * (k - 1) <= (
                        s * (k - 1) + pi + 1
                    ) * k
                if step_outer:
                    tris.append((outer(po), outer(po + 1), inner(pi)))
                    po += 1
                else:
                    tris.append((outer(po), inner(pi + 1), inner(pi)))
                    pi += 1
    triangles = np.array(tris, dtype=np.int64)

    boundary = np.zeros(len(vertices), dtype=bool)
    boundary[ring_start(n):] = True
    return _finish(vertices, triangles, boundary)


def write_vtk(path, mesh: Mesh, point_data=None, cell_data=None,
              title: str = "coeffopt fields") -> None:
    """Write the mesh and named fields as a legacy ASCII VTK file.

    Parameters
    ----------
    path : str or pathlib.Path
    mesh : Mesh
    point_data : dict[str, array] or None
        Per-vertex scalar fields (POINT_DATA section).
    cell_data : dict[str, array] or None
        Per-cell scalar fields (CELL_DATA section).

    The output is byte-for-byte reproducible for identical inputs.
    """
    point_data = point_data or {}
    cell_data = cell_data or {}
    nv, nt = mesh.n_vertices, mesh.n_cells
    lines = [
        "# vtk DataFile Version 2.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} float",
    ]
    for x, y in mesh.vertices:
        lines.append(f"{x:.12e} {y:.12e} 0.0")
    lines.append(f"CELLS {nt} {4 * nt}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["5"] * nt)  # VTK_TRIANGLE
    if point_data:
        lines.append(f"POINT_DATA {nv}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (nv,):
                raise ValueError(f"point field {name!r} has shape {values.shape}")
            lines.append(f"SCALARS {name} float 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{v:.12e}" for v in values)
    if cell_data:
        lines.append(f"CELL_DATA {nt}")
        for name, values in cell_data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (nt,):
                raise ValueError(f"cell field {name!r} has shape {values.shape}")
            lines.append(f"SCALARS {name} float 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{v:.12e}" for v in values)
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
