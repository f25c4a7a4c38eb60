import numpy as np
import pytest

from coeffopt.fem import grad_norm_sq, solve_state
from coeffopt.gclosure import eig_sym_2x2, lamination_means
from coeffopt.mesh import build_unit_disk_mesh, build_unit_square_mesh
from coeffopt.oracles import counterexample_fields, ex11_ball
from coeffopt.optimize import (
    DescentConfig,
    LinearCost,
    compliance_descent,
    energy_relaxed_solve,
    general_relaxed_optimize,
    gradient_check,
)
from coeffopt.penalty import PenaltySpec


def test_config_validation():
    with pytest.raises(ValueError):
        DescentConfig(step0=0.0)
    with pytest.raises(ValueError):
        DescentConfig(step0=1.5)
    with pytest.raises(ValueError):
        DescentConfig(tol=0.0)
    with pytest.raises(ValueError):
        DescentConfig(max_iters=0)
    with pytest.raises(ValueError):
        DescentConfig(t0=-0.1)


def test_linear_cost():
    m = build_unit_square_mesh(4)
    u = np.ones(m.n_vertices)
    c = LinearCost(2.0)
    # int 2 u with u == 1 on a unit square, up to the boundary rows of
    # the load vector which weight every vertex
    assert abs(c.value(m, u) - 2.0) < 1e-13
    assert c.state_derivative(m, u) == 2.0
    w = np.ones(m.n_vertices)
    assert np.array_equal(LinearCost(w).state_derivative(m, u), w)
    with pytest.raises(ValueError):
        LinearCost(np.ones(3)).state_derivative(m, u)


def test_compliance_quadratic_disk():
    m = build_unit_disk_mesh(0.1)
    a, u, rep = compliance_descent(m, 1.0, PenaltySpec("quadratic"))
    assert rep.converged and not rep.stagnated
    assert np.all(np.diff(rep.costs) < 0.0)
    assert rep.iterations == len(rep.costs) - 1
    # matches the closed-form radial optimum at coarse-mesh accuracy
    cen = m.cell_centroids()
    r = np.hypot(cen[:, 0], cen[:, 1])
    a_ref = ex11_ball(r)[1]
    l2 = np.sqrt(m.cell_areas @ (a - a_ref) ** 2
                 / (m.cell_areas @ a_ref ** 2))
    assert l2 < 0.06


def test_compliance_preserves_symmetry():
    # the disk mesh has a 6-fold symmetric structure; cells at the same
    # centroid radius must end with (nearly) the same coefficient
    m = build_unit_disk_mesh(0.1)
    a, _, _ = compliance_descent(m, 1.0, PenaltySpec("quadratic"))
    cen = m.cell_centroids()
    r = np.round(np.hypot(cen[:, 0], cen[:, 1]), 9)
    worst = 0.0
    for val in np.unique(r):
        sel = r == val
        if sel.sum() >= 6 and a[sel].mean() > 1e-3:
            spread = (a[sel].max() - a[sel].min()) / a[sel].mean()
            worst = max(worst, spread)
    assert worst < 1e-2


def test_compliance_fixed_point_residual():
    # at the default tolerance the self-consistency a = |grad u|^2 holds
    # to a few parts in 1e4; the cost-based stop cannot push it to
    # machine precision, only to the scale set by the step noise
    m = build_unit_disk_mesh(0.1)
    a, u, rep = compliance_descent(m, 1.0, PenaltySpec("quadratic"))
    gsq = grad_norm_sq(m, u)
    res = np.linalg.norm(a - gsq) / np.linalg.norm(a)
    assert res < 1e-3


def test_compliance_zero_load_box():
    # with f = 0 the cost reduces to the penalty; a box penalty with a
    # positive slope drives every cell to alpha immediately
    m = build_unit_disk_mesh(0.2)
    spec = PenaltySpec("linear-box", alpha=1.0, beta=2.0, gamma=0.05)
    a, u, rep = compliance_descent(m, 0.0, spec)
    assert rep.converged
    assert rep.iterations <= 2
    assert np.all(a == 1.0)
    assert np.all(u == 0.0)


def test_compliance_respects_domain():
    m = build_unit_square_mesh(8)
    spec = PenaltySpec("linear-box", alpha=1.0, beta=2.0, gamma=0.01141)
    a, _, rep = compliance_descent(m, 1.0, spec)
    assert np.all(a >= 1.0) and np.all(a <= 2.0)
    assert rep.converged


def test_compliance_deterministic():
    m = build_unit_square_mesh(8)
    spec = PenaltySpec("quadratic")
    a1, u1, r1 = compliance_descent(m, 1.0, spec)
    a2, u2, r2 = compliance_descent(m, 1.0, spec)
    assert np.array_equal(a1, a2)
    assert np.array_equal(u1, u2)
    assert r1.costs == r2.costs


def test_gradient_check_quadratic():
    m = build_unit_square_mesh(8)
    rng = np.random.default_rng(0)
    spec = PenaltySpec("quadratic")
    for _ in range(3):
        a = rng.uniform(0.5, 2.0, m.n_cells)
        d = rng.normal(size=m.n_cells)
        _, _, rel = gradient_check(m, 1.0, spec, a, d)
        assert rel < 1e-4


def test_gradient_check_box_interior():
    m = build_unit_square_mesh(8)
    rng = np.random.default_rng(1)
    spec = PenaltySpec("linear-box", alpha=1.0, beta=2.0, gamma=0.05)
    a = rng.uniform(1.2, 1.8, m.n_cells)
    d = rng.normal(size=m.n_cells)
    d /= np.abs(d).max()
    _, _, rel = gradient_check(m, 1.0, spec, a, d, h=1e-6)
    assert rel < 1e-4


def test_gradient_check_zero_direction():
    m = build_unit_square_mesh(4)
    a = np.ones(m.n_cells)
    analytic, fd, _ = gradient_check(m, 1.0, PenaltySpec("quadratic"), a,
                                     np.zeros(m.n_cells))
    assert analytic == 0.0
    assert abs(fd) < 1e-12


def test_energy_relaxed_square():
    m = build_unit_square_mesh(16)
    t, a_eff, u, rep = energy_relaxed_solve(m, 1.0, 1.0, 2.0, 0.0142)
    assert rep.converged
    assert np.all(np.diff(rep.costs) <= 1e-15)
    assert np.all(t >= 0.0) and np.all(t <= 1.0)
    assert np.all(a_eff >= 1.0 - 1e-12) and np.all(a_eff <= 2.0 + 1e-12)
    # interior cells mix: both phases must be present at this gamma
    assert t.max() > 0.9 and t.min() < 0.1


def test_energy_gamma_to_zero_limit():
    # as gamma -> 0 the mass term vanishes and the energy is minimized
    # by the softest admissible conductivity: t -> 1 (all alpha) and the
    # state approaches the plain Poisson solution scaled by 1/alpha
    m = build_unit_square_mesh(16)
    t, _, u, rep = energy_relaxed_solve(m, 1.0, 1.0, 2.0, 1e-8)
    assert rep.converged
    assert t.min() > 1.0 - 1e-3
    u_ref = solve_state(m, np.ones(m.n_cells), 1.0, rtol=1e-12)
    assert np.abs(u - u_ref).max() / np.abs(u_ref).max() < 1e-4


def test_energy_rejects_bad_gamma():
    m = build_unit_square_mesh(4)
    with pytest.raises(ValueError):
        energy_relaxed_solve(m, 1.0, 1.0, 2.0, 0.0)


def test_general_layered_self_adjoint():
    # cost weight == load makes the problem self-adjoint; the adjoint
    # must then be the state bit for bit, and the optimal tensors stay
    # isotropic (no genuine lamination at epsilon = 0)
    m = build_unit_disk_mesh(0.1)
    tau = 0.23539
    t, A, u, p, rep = general_relaxed_optimize(
        m, 1.0, LinearCost(1.0), tau ** 2, 1.0, 2.0)
    assert rep.converged and not rep.stagnated
    assert np.array_equal(p, u)
    lam1, lam2, _, _ = eig_sym_2x2(A)
    assert (lam2 / lam1).max() < 1.01
    # the isotropic value tracks the classical radial optimum
    cen = m.cell_centroids()
    r = np.hypot(cen[:, 0], cen[:, 1])
    a_ref = counterexample_fields(r, tau)[0]
    l2 = np.sqrt(m.cell_areas @ (lam1 - a_ref) ** 2
                 / (m.cell_areas @ a_ref ** 2))
    assert l2 < 0.05


def test_general_feasibility_invariants():
    m = build_unit_disk_mesh(0.15)
    tau = 0.23539
    cen = m.cell_centroids()
    weight_nodes = 1.0 + 0.5 * m.vertices[:, 0]
    t, A, u, p, rep = general_relaxed_optimize(
        m, 1.0, LinearCost(weight_nodes), tau ** 2, 1.0, 2.0)
    assert np.all(t >= 0.0) and np.all(t <= 1.0)
    mu, nu = lamination_means(t, 1.0, 2.0)
    lam1, lam2, _, _ = eig_sym_2x2(A)
    assert np.all(lam1 >= nu - 1e-10)
    assert np.all(lam2 <= mu + 1e-10)
    assert np.all(np.diff(rep.costs) < 0.0)
    assert rep.converged or rep.stagnated or rep.iterations == 2000


def test_general_deterministic():
    m = build_unit_disk_mesh(0.2)
    tau = 0.23539
    r1 = general_relaxed_optimize(m, 1.0, LinearCost(1.0), tau ** 2,
                                  1.0, 2.0)[4]
    r2 = general_relaxed_optimize(m, 1.0, LinearCost(1.0), tau ** 2,
                                  1.0, 2.0)[4]
    assert r1.costs == r2.costs
    assert r1.steps == r2.steps


def test_general_validates_g_field():
    m = build_unit_square_mesh(4)
    with pytest.raises(ValueError):
        general_relaxed_optimize(m, 1.0, LinearCost(1.0),
                                 np.ones(m.n_cells + 2), 1.0, 2.0)


def test_report_iterations_property():
    m = build_unit_square_mesh(6)
    _, _, rep = compliance_descent(m, 1.0, PenaltySpec("quadratic"))
    assert rep.iterations == len(rep.steps) == len(rep.ratios)
    assert len(rep.costs) == rep.iterations + 1


def test_initial_coefficient_override():
    m = build_unit_square_mesh(6)
    spec = PenaltySpec("quadratic")
    cfg = DescentConfig(a0=2.0, max_iters=1)
    _, _, rep = compliance_descent(m, 1.0, spec, cfg)
    # the first recorded cost must reflect the requested start
    u0 = solve_state(m, np.full(m.n_cells, 2.0), 1.0)
    from coeffopt.fem import assemble_load
    J0 = float(assemble_load(m, 1.0) @ u0) + float(
        m.cell_areas @ (np.full(m.n_cells, 2.0) ** 2 / 2.0))
    assert abs(rep.costs[0] - J0) < 1e-9
    with pytest.raises(ValueError):
        compliance_descent(m, 1.0, spec, DescentConfig(a0=np.ones(3)))
