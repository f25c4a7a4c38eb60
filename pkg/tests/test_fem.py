import numpy as np
import pytest
import scipy.sparse as sp

from coeffopt.fem import (
    IllPosedCoefficientError,
    LinearSystem,
    PointLoad,
    SolverFailure,
    StiffnessAssembler,
    assemble_load,
    assemble_point_load,
    assemble_stiffness,
    cell_gradient,
    compliance,
    cost_functional,
    grad_norm_sq,
    solve_dirichlet,
    solve_state,
)
from coeffopt.mesh import build_unit_disk_mesh, build_unit_square_mesh
from coeffopt.penalty import PenaltySpec


def hand_assembled(mesh, a):
    """Dense reference assembly, one triangle at a time."""
    nv = mesh.n_vertices
    K = np.zeros((nv, nv))
    for c, tri in enumerate(mesh.triangles):
        g = mesh.cell_basis_gradients[c]
        ke = a[c] * mesh.cell_areas[c] * (g @ g.T)
        for i in range(3):
            for j in range(3):
                K[tri[i], tri[j]] += ke[i, j]
    return K


def test_assembly_matches_hand_loop():
    m = build_unit_square_mesh(2)
    rng = np.random.default_rng(3)
    a = rng.uniform(0.5, 2.0, m.n_cells)
    K = assemble_stiffness(m, a).toarray()
    assert np.allclose(K, hand_assembled(m, a), atol=1e-14)


def test_assembly_bitwise_symmetric():
    m = build_unit_disk_mesh(0.2)
    rng = np.random.default_rng(11)
    a = rng.uniform(0.1, 5.0, m.n_cells)
    K = assemble_stiffness(m, a)
    assert (K - K.T).nnz == 0


def test_scalar_equals_isotropic_tensor():
    m = build_unit_square_mesh(3)
    rng = np.random.default_rng(5)
    a = rng.uniform(0.5, 2.0, m.n_cells)
    iso = np.zeros((m.n_cells, 3))
    iso[:, 0] = a
    iso[:, 2] = a
    Ks = assemble_stiffness(m, a)
    Kt = assemble_stiffness(m, iso)
    assert (Ks != Kt).nnz == 0


def test_assembly_linear_in_coefficient():
    m = build_unit_square_mesh(3)
    a = np.full(m.n_cells, 0.75)
    K1 = assemble_stiffness(m, a)
    K2 = assemble_stiffness(m, 2.0 * a)
    assert np.allclose(K2.toarray(), 2.0 * K1.toarray(), rtol=1e-15)


def test_rejects_nonpositive_scalar():
    m = build_unit_square_mesh(2)
    a = np.ones(m.n_cells)
    a[3] = 0.0
    with pytest.raises(IllPosedCoefficientError):
        assemble_stiffness(m, a)


def test_rejects_indefinite_tensor():
    m = build_unit_square_mesh(2)
    t = np.zeros((m.n_cells, 3))
    t[:, 0] = 1.0
    t[:, 2] = 1.0
    t[4, 1] = 2.0  # det = 1 - 4 < 0
    with pytest.raises(IllPosedCoefficientError):
        assemble_stiffness(m, t)


def test_rejects_bad_coefficient_shape():
    m = build_unit_square_mesh(2)
    with pytest.raises(ValueError):
        assemble_stiffness(m, np.ones(m.n_cells + 1))


def test_load_integrates_constants():
    m = build_unit_disk_mesh(0.25)
    b = assemble_load(m, 2.0)
    assert abs(b.sum() - 2.0 * m.cell_areas.sum()) < 1e-13


def test_load_nodal_field():
    m = build_unit_square_mesh(4)
    x = m.vertices[:, 0]
    b = assemble_load(m, x)
    # int x over the unit square = 1/2; vertex-mean quadrature is exact
    # for affine integrands on this mesh
    assert abs(b.sum() - 0.5) < 1e-13


def test_point_load_snaps_to_nearest_vertex():
    m = build_unit_square_mesh(4)
    b = assemble_point_load(m, (0.49, 0.51), magnitude=2.5)
    k = int(np.flatnonzero(b)[0])
    assert np.allclose(m.vertices[k], [0.5, 0.5])
    assert b[k] == 2.5
    assert np.count_nonzero(b) == 1


def test_point_load_outside_rejected():
    m = build_unit_disk_mesh(0.3)
    with pytest.raises(ValueError):
        assemble_point_load(m, (1.2, 0.0))


def test_load_dispatch_point_load():
    m = build_unit_square_mesh(4)
    b1 = assemble_load(m, PointLoad((0.5, 0.5), 3.0))
    b2 = assemble_point_load(m, (0.5, 0.5), 3.0)
    assert np.array_equal(b1, b2)


def test_poisson_center_value():
    # -lap u = 1 on the unit square; u(center) = 0.07367135...
    m = build_unit_square_mesh(32)
    u = solve_state(m, np.ones(m.n_cells), 1.0, rtol=1e-12)
    k = int(np.argmin(np.abs(m.vertices - 0.5).sum(axis=1)))
    assert abs(u[k] - 0.0736713) < 5e-4


def test_zero_rhs_returns_zero():
    m = build_unit_square_mesh(4)
    u = solve_state(m, np.ones(m.n_cells), 0.0)
    assert np.array_equal(u, np.zeros(m.n_vertices))


def test_solver_failure_on_unreachable_tolerance():
    m = build_unit_square_mesh(4)
    with pytest.raises(SolverFailure):
        solve_state(m, np.ones(m.n_cells), 1.0, rtol=1e-300)


def test_linear_system_rejects_nonfinite_rhs():
    K = sp.eye(3, format="csr")
    rhs = np.array([1.0, np.nan, 0.0])
    with pytest.raises(ValueError):
        LinearSystem(K, rhs, np.zeros(3, dtype=bool))


def test_warm_start_agrees_with_cold():
    m = build_unit_square_mesh(8)
    a = np.ones(m.n_cells)
    u0 = solve_state(m, a, 1.0, rtol=1e-12)
    u1 = solve_state(m, a, 1.0, rtol=1e-12, x0=u0)
    assert np.linalg.norm(u1 - u0) / np.linalg.norm(u0) < 1e-11


def test_cell_gradient_exact_for_affine():
    m = build_unit_disk_mesh(0.3)
    u = 2.0 * m.vertices[:, 0] + 3.0 * m.vertices[:, 1]
    g = cell_gradient(m, u)
    assert np.allclose(g[:, 0], 2.0, atol=1e-12)
    assert np.allclose(g[:, 1], 3.0, atol=1e-12)
    assert np.allclose(grad_norm_sq(m, u), 13.0, atol=1e-11)


def test_compliance_matches_quadratic_form():
    m = build_unit_square_mesh(8)
    a = np.full(m.n_cells, 1.3)
    u = solve_state(m, a, 1.0, rtol=1e-12)
    K = assemble_stiffness(m, a)
    assert abs(compliance(m, 1.0, u) - u @ (K @ u)) < 1e-10


def test_assembler_reuse_bitwise():
    m = build_unit_square_mesh(4)
    asm = StiffnessAssembler(m)
    a = np.linspace(1.0, 2.0, m.n_cells)
    K1 = asm.assemble(a)
    K2 = asm.assemble(a)
    K3 = assemble_stiffness(m, a)
    assert (K1 != K2).nnz == 0
    assert (K1 != K3).nnz == 0


def test_cost_functional_half_flag():
    m = build_unit_square_mesh(4)
    a = np.full(m.n_cells, 1.5)
    u = solve_state(m, a, 1.0)
    full = cost_functional(m, u, a, PenaltySpec("quadratic"), 1.0)
    half = cost_functional(m, u, a, PenaltySpec("quadratic", half=True), 1.0)
    c = compliance(m, 1.0, u)
    assert abs((full - c) - 2.0 * (half - c)) < 1e-14


def test_cost_functional_rejects_out_of_domain():
    m = build_unit_square_mesh(2)
    a = np.full(m.n_cells, 0.5)  # below alpha for a box penalty
    u = np.zeros(m.n_vertices)
    spec = PenaltySpec("linear-box", alpha=1.0, beta=2.0, gamma=0.1)
    with pytest.raises(ValueError):
        cost_functional(m, u, a, spec, 1.0)


def test_solve_deterministic():
    m = build_unit_disk_mesh(0.2)
    a = np.linspace(1.0, 2.0, m.n_cells)
    u1 = solve_state(m, a, 1.0)
    u2 = solve_state(m, a, 1.0)
    assert np.array_equal(u1, u2)
