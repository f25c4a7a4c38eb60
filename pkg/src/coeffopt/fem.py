"""P1 finite elements for -div(a grad u) = f with zero Dirichlet data.

States are continuous piecewise-linear (one value per vertex), controls
piecewise-constant (one value per cell).  Scalar coefficients are
assembled through the same isotropic-tensor path as matrix coefficients,
so the two agree bit for bit when the matrix is a*I.

Field conventions
-----------------
nodal field        (n_vertices,) float array
cell scalar field  (n_cells,) float array
cell tensor field  (n_cells, 3) float array, columns (a11, a12, a22)
                   of a symmetric 2x2 matrix per cell
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

from .mesh import Mesh

__all__ = [
    "PointLoad",
    "IllPosedCoefficientError",
    "SolverFailure",
    "StiffnessAssembler",
    "assemble_stiffness",
    "assemble_load",
    "assemble_point_load",
    "LinearSystem",
    "solve_dirichlet",
    "solve_state",
    "cell_gradient",
    "grad_norm_sq",
    "compliance",
    "cost_functional",
]


class PointLoad(NamedTuple):
    """Dirac load; snapped to the nearest mesh vertex on assembly."""

    location: tuple
    magnitude: float = 1.0


class IllPosedCoefficientError(ValueError):
    """Coefficient field is not uniformly elliptic on some cell."""


class SolverFailure(RuntimeError):
    """The linear solver stopped before reaching its tolerance."""


def _as_tensor_columns(mesh: Mesh, coeff: np.ndarray) -> np.ndarray:
    """Normalize a coefficient to (a11, a12, a22) columns, validated."""
    coeff = np.asarray(coeff, dtype=float)
    nt = mesh.n_cells
    if coeff.ndim == 0:
        coeff = np.full(nt, float(coeff))
    if coeff.shape == (nt,):
        bad = ~np.isfinite(coeff) | (coeff <= 0.0)
        if bad.any():
            c = int(np.flatnonzero(bad)[0])
            raise IllPosedCoefficientError(
                f"scalar coefficient on cell {c} is {coeff[c]!r}"
            )
        cols = np.zeros((nt, 3))
        cols[:, 0] = coeff
        cols[:, 2] = coeff
        return cols
    if coeff.shape == (nt, 3):
        a11, a12, a22 = coeff.T
        det = a11 * a22 - a12 * a12
        bad = ~np.isfinite(coeff).all(axis=1) | (a11 <= 0.0) | (det <= 0.0)
        if bad.any():
            c = int(np.flatnonzero(bad)[0])
            raise IllPosedCoefficientError(
                f"tensor coefficient on cell {c} is not positive definite: "
                f"{coeff[c]}"
            )
        return coeff
    raise ValueError(
        f"coefficient must have shape ({nt},) or ({nt}, 3), got {coeff.shape}"
    )


class StiffnessAssembler:
    """Reusable stiffness assembler for one mesh.

    The sparsity pattern, the duplicate-summation order and the CSR
    index arrays depend only on the mesh, so they are computed once.
    Repeated assemblies (every optimizer iteration) then reduce to one
    einsum and one segmented sum, both deterministic.
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        tri = mesh.triangles
        rows = np.repeat(tri, 3, axis=1).ravel()
        cols = np.tile(tri, (1, 3)).ravel()
        order = np.lexsort((cols, rows))  # stable: ties keep cell order
        rs, cs = rows[order], cols[order]
        first = np.empty(rs.size, dtype=bool)
        first[0] = True
        first[1:] = (rs[1:] != rs[:-1]) | (cs[1:] != cs[:-1])
        starts = np.flatnonzero(first)
        counts = np.bincount(rs[starts], minlength=mesh.n_vertices)
        self._order = order
        self._starts = starts
        self._indices = cs[starts].astype(np.int32)
        self._indptr = np.concatenate(
            [[0], np.cumsum(counts)]
        ).astype(np.int32)

    def assemble(self, coeff: np.ndarray) -> sp.csr_matrix:
        mesh = self.mesh
        cols = _as_tensor_columns(mesh, coeff)
        g = mesh.cell_basis_gradients
        a11, a12, a22 = cols[:, 0], cols[:, 1], cols[:, 2]
        ag = np.empty_like(g)
        ag[:, :, 0] = a11[:, None] * g[:, :, 0] + a12[:, None] * g[:, :, 1]
        ag[:, :, 1] = a12[:, None] * g[:, :, 0] + a22[:, None] * g[:, :, 1]
        loc = np.einsum("cid,cjd->cij", ag, g)
        loc *= mesh.cell_areas[:, None, None]
        # mirror the upper triangle so the matrix is symmetric bit for bit
        loc[:, 1, 0] = loc[:, 0, 1]
        loc[:, 2, 0] = loc[:, 0, 2]
        loc[:, 2, 1] = loc[:, 1, 2]
        data = loc.reshape(-1)[self._order]
        vals = np.add.reduceat(data, self._starts)
        nv = mesh.n_vertices
        return sp.csr_matrix(
            (vals, self._indices.copy(), self._indptr.copy()), shape=(nv, nv)
        )


def assemble_stiffness(mesh: Mesh, coeff: np.ndarray) -> sp.csr_matrix:
    """Stiffness matrix for a per-cell scalar or tensor coefficient."""
    return StiffnessAssembler(mesh).assemble(coeff)


def assemble_point_load(mesh: Mesh, location, magnitude: float = 1.0):
    """Unit-style point load snapped to the nearest vertex.

    The location must lie inside the triangulated domain; ties in the
    nearest-vertex search resolve to the lowest vertex index.
    """
    loc = np.asarray(location, dtype=float)
    if loc.shape != (2,):
        raise ValueError(f"location must be a 2-point, got {location!r}")
    # containment: barycentric coordinates nonnegative in some cell
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    rhs = loc[None, :] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    l1 = (rhs[:, 0] * d2[:, 1] - rhs[:, 1] * d2[:, 0]) / det
    l2 = (d1[:, 0] * rhs[:, 1] - d1[:, 1] * rhs[:, 0]) / det
    tol = 1e-12
    inside = (l1 >= -tol) & (l2 >= -tol) & (l1 + l2 <= 1.0 + tol)
    if not inside.any():
        raise ValueError(f"point load location {tuple(loc)} is outside the mesh")
    d2v = ((mesh.vertices - loc) ** 2).sum(axis=1)
    idx = int(np.argmin(d2v))  # first minimum = lowest index
    b = np.zeros(mesh.n_vertices)
    b[idx] = magnitude
    return b


def assemble_load(mesh: Mesh, f) -> np.ndarray:
    """Load vector for a constant, nodal, or point source.

    Constant f:  entry i collects f * area/3 from every incident cell.
    Nodal f:     each cell contributes area/3 times its vertex-mean of f.
    PointLoad:   see assemble_point_load.
    """
    if isinstance(f, PointLoad):
        return assemble_point_load(mesh, f.location, f.magnitude)
    tri = mesh.triangles
    third = mesh.cell_areas / 3.0
    if np.isscalar(f) or np.asarray(f).ndim == 0:
        w = third * float(f)
    else:
        f = np.asarray(f, dtype=float)
        if f.shape != (mesh.n_vertices,):
            raise ValueError(
                f"nodal source must have shape ({mesh.n_vertices},), got {f.shape}"
            )
        w = third * f[tri].mean(axis=1)
    return np.bincount(
        tri.ravel(), weights=np.repeat(w, 3), minlength=mesh.n_vertices
    )


@dataclass
class LinearSystem:
    """Assembled symmetric system with a Dirichlet vertex mask."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    boundary: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.rhs).all():
            raise ValueError("load vector has nonfinite entries")


def solve_dirichlet(system: LinearSystem, rtol: float = 1e-10,
                    x0: np.ndarray | None = None) -> np.ndarray:
    """Solve with zero Dirichlet values via symmetric elimination.

    Boundary rows and columns are removed (the boundary values are set
    to exactly 0.0), and the reduced SPD system is solved by conjugate
    gradients with a Jacobi preconditioner down to a relative residual
    of ``rtol``.

    Raises
    ------
    SolverFailure
        If CG stops without reaching the tolerance; the message reports
        the achieved relative residual.
    """
    free = np.flatnonzero(~system.boundary)
    K = system.matrix[free][:, free].tocsr()
    b = system.rhs[free]
    u = np.zeros(system.rhs.shape[0])
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return u
    diag = K.diagonal()
    if not (diag > 0.0).all():
        i = int(np.flatnonzero(diag <= 0.0)[0])
        raise IllPosedCoefficientError(
            f"nonpositive stiffness diagonal at reduced index {i}"
        )
    inv = 1.0 / diag
    M = LinearOperator(K.shape, matvec=lambda x: inv * x)
    x_init = x0[free] if x0 is not None else None
    x, info = cg(K, b, x0=x_init, rtol=rtol, atol=0.0, M=M,
                 maxiter=20 * K.shape[0])
    res = float(np.linalg.norm(b - K @ x)) / bnorm
    if info != 0 or res > rtol * 1.01:
        raise SolverFailure(
            f"CG stopped with info={info}, relative residual {res:.3e} "
            f"(target {rtol:.1e})"
        )
    u[free] = x
    return u


def solve_state(mesh: Mesh, coeff, f, rtol: float = 1e-10,
                x0: np.ndarray | None = None,
                assembler: StiffnessAssembler | None = None) -> np.ndarray:
    """Assemble and solve -div(a grad u) = f, u = 0 on the boundary."""
    asm = assembler if assembler is not None else StiffnessAssembler(mesh)
    K = asm.assemble(coeff)
    b = assemble_load(mesh, f)
    return solve_dirichlet(LinearSystem(K, b, mesh.boundary), rtol=rtol, x0=x0)


def cell_gradient(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """(n_cells, 2) gradient of a P1 field, constant per cell."""
    return np.einsum("ci,cid->cd", u[mesh.triangles], mesh.cell_basis_gradients)


def grad_norm_sq(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Per-cell |grad u|^2 of a P1 field."""
    g = cell_gradient(mesh, u)
    return g[:, 0] ** 2 + g[:, 1] ** 2


def compliance(mesh: Mesh, f, u: np.ndarray) -> float:
    """int f u, evaluated with the load quadrature so it equals b.u."""
    return float(assemble_load(mesh, f) @ u)


def cost_functional(mesh: Mesh, u: np.ndarray, coeff: np.ndarray, penalty,
                    f, j_sign: float = 1.0) -> float:
    """j_sign * int(f u) + int psi(a), with psi halved per penalty.half.

    The coefficient must stay inside the penalty domain; an out-of-range
    cell makes the cost infinite and the evaluation aborts.
    """
    from .penalty import psi_eval  # deferred: penalty imports nothing from fem

    vals = psi_eval(penalty, np.asarray(coeff, dtype=float), strict=False)
    if not np.isfinite(vals).all():
        c = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise ValueError(
            f"infinite penalty cost: coefficient {coeff[c]!r} on cell {c} "
            "is outside the penalty domain"
        )
    factor = 0.5 if getattr(penalty, "half", False) else 1.0
    return j_sign * compliance(mesh, f, u) + factor * float(
        mesh.cell_areas @ vals
    )
