import numpy as np
import pytest

from scfem.adaptive import dorfler_select
from scfem.estimators import SpatialSampleSet
from scfem.fem import (DiffusionCoefficient, FESolution, Forcing, SingularSystemError,
                       assemble_and_solve, assemble_stiffness, gradient_at_points,
                       h1_seminorm_error, l2_error, residual_estimator)
from scfem.mesh import refine_nvb, unit_square_mesh
from scfem.problems import manufactured_poisson

UNIT = DiffusionCoefficient(np.ones(1), np.zeros((1, 1)))
Y0 = (0.0,)


def midpoint_fourier(terms=401):
    """u(1/2, 1/2) for -Δu = 1 on the unit square, double sine series."""
    k = np.arange(1, terms, 2, dtype=float)
    M, N = np.meshgrid(k, k)
    sign = np.sin(M * np.pi / 2) * np.sin(N * np.pi / 2)
    return float(np.sum(16.0 * sign / (np.pi ** 4 * M * N * (M ** 2 + N ** 2))))


def test_fourier_oracle_converged():
    assert midpoint_fourier(401) == pytest.approx(midpoint_fourier(801), abs=1e-8)
    assert midpoint_fourier() == pytest.approx(0.07367, abs=5e-6)


def test_unit_load_midpoint_value():
    mesh = unit_square_mesh(128)
    sol = assemble_and_solve(mesh, UNIT, Y0, Forcing.piecewise([1.0]))
    centre = np.flatnonzero(np.all(np.isclose(mesh.vertices, 0.5), axis=1))[0]
    assert sol.u[centre] == pytest.approx(midpoint_fourier(), abs=1e-4)


def test_zero_load_gives_zero_solution_and_indicators():
    mesh = unit_square_mesh(4)
    f = Forcing.piecewise([0.0])
    sol = assemble_and_solve(mesh, UNIT, Y0, f)
    assert not sol.u.any()
    eta2, eta = residual_estimator(sol, UNIT, f)
    assert eta == 0.0 and not eta2.any()


def test_stiffness_symmetric():
    mesh = refine_nvb(unit_square_mesh(4), [0, 5, 9])
    K = assemble_stiffness(mesh, np.linspace(0.5, 2.0, mesh.n_triangles)).toarray()
    assert np.abs(K - K.T).max() <= 1e-14 * np.abs(K).max()
    np.testing.assert_allclose(K.sum(axis=1), 0.0, atol=1e-12)


def _observed_rate(hs, errs):
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def test_manufactured_convergence_rates():
    prob = manufactured_poisson()
    hs, l2, h1, eff = [], [], [], []
    for n in (4, 8, 16, 32, 64):
        mesh = unit_square_mesh(n)
        sol = assemble_and_solve(mesh, prob.coefficient, Y0, prob.forcing)
        hs.append(1.0 / n)
        l2.append(l2_error(sol, prob.exact))
        h1.append(h1_seminorm_error(sol, prob.exact_grad))
        eff.append(residual_estimator(sol, prob.coefficient, prob.forcing)[1] / h1[-1])
    assert 1.8 <= _observed_rate(hs, l2) <= 2.1
    assert 0.9 <= _observed_rate(hs, h1) <= 1.1
    assert all(1.0 <= e <= 20.0 for e in eff)
    assert all(b < a for a, b in zip(h1, h1[1:]))


def test_gradient_of_linear_interpolant():
    mesh = refine_nvb(unit_square_mesh(3), [2, 4])
    sol = FESolution(mesh, mesh.vertices[:, 0].copy(), Y0)
    pts = np.random.default_rng(0).uniform(0.01, 0.99, (100, 2))
    np.testing.assert_allclose(gradient_at_points(sol, pts), np.tile([1.0, 0.0], (100, 1)),
                               atol=1e-13)
    zero = FESolution(mesh, np.zeros(mesh.n_vertices), Y0)
    assert not gradient_at_points(zero, pts).any()


def brute_force_estimator(sol, a_vals, f_vals):
    """Edge walk over triangle pairs, independent of the mesh edge tables."""
    mesh = sol.mesh
    V, T = mesh.vertices, mesh.triangles
    eta2 = np.zeros(len(T))
    grads = []
    for tri in T:
        A = np.array([[1, *V[v]] for v in tri])
        coef = np.linalg.solve(A, sol.u[tri])
        grads.append(coef[1:])
    for t, tri in enumerate(T):
        P = V[tri]
        h = max(np.linalg.norm(P[k] - P[(k + 1) % 3]) for k in range(3))
        d1, d2 = P[1] - P[0], P[2] - P[0]
        area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
        eta2[t] += h * h * f_vals[mesh.labels[t]] ** 2 * area
        for s, other in enumerate(T):
            shared = set(tri) & set(other)
            if s == t or len(shared) != 2:
                continue
            p, q = (V[v] for v in sorted(shared))
            tang = q - p
            he = np.linalg.norm(tang)
            nrm = np.array([tang[1], -tang[0]]) / he
            jump = (a_vals[mesh.labels[t]] * grads[t] - a_vals[mesh.labels[s]] * grads[s]) @ nrm
            eta2[t] += he * he * (jump / 2) ** 2
    return eta2


@pytest.mark.parametrize("coeff_base", [[1.0, 1.0], [1.0, 3.5]])
def test_residual_estimator_matches_edge_walk(coeff_base):
    mesh = unit_square_mesh(2, lambda x: (x[:, 0] > 0.5).astype(np.int64))
    a = DiffusionCoefficient(np.array(coeff_base), np.zeros((1, 2)))
    f_vals = np.array([2.0, -1.0])
    sol = assemble_and_solve(mesh, a, Y0, Forcing.piecewise(f_vals))
    rng = np.random.default_rng(3)
    for u in (sol.u, np.where(np.isin(np.arange(mesh.n_vertices), mesh.free_vertices),
                              rng.standard_normal(mesh.n_vertices), 0.0)):
        trial = FESolution(mesh, u, Y0)
        eta2, eta = residual_estimator(trial, a, Forcing.piecewise(f_vals))
        ref = brute_force_estimator(trial, a.values(Y0), f_vals)
        np.testing.assert_allclose(eta2, ref, rtol=1e-13, atol=1e-13)
        assert eta == pytest.approx(np.sqrt(ref.sum()), rel=1e-13)


def test_dorfler_contraction_smoke():
    prob = manufactured_poisson()
    mesh = prob.initial_mesh()
    errs, etas = [], []
    for _ in range(11):
        sol = assemble_and_solve(mesh, prob.coefficient, Y0, prob.forcing)
        eta2, eta = residual_estimator(sol, prob.coefficient, prob.forcing)
        errs.append(h1_seminorm_error(sol, prob.exact_grad))
        etas.append(eta)
        mesh = refine_nvb(mesh, dorfler_select(eta2, 0.25))
    errs, etas = np.array(errs), np.array(etas)
    assert any(np.all(np.diff(errs ** 2 + k * etas ** 2) < 0) for k in (0.01, 0.1, 1.0))


def test_coefficient_must_be_elliptic():
    with pytest.raises(ValueError):
        DiffusionCoefficient(np.array([1.0]), np.array([[1.5]]))


def test_solver_rejects_mesh_without_interior_vertices():
    with pytest.raises(SingularSystemError):
        assemble_and_solve(unit_square_mesh(1), UNIT, Y0, Forcing.piecewise([1.0]))


def test_coefficient_parameter_count_checked():
    with pytest.raises(ValueError):
        UNIT.values((0.0, 0.0))


def test_monte_carlo_norm_of_quadratic_field():
    # ||x y||^2 over the unit square is 1/9
    estimates = []
    for seed in range(5):
        pi = SpatialSampleSet.uniform(10_000, seed, lambda x: np.zeros(len(x), dtype=np.int64))
        g = pi.points[:, 0] * pi.points[:, 1]
        estimates.append(np.sqrt(np.mean(g ** 2)))
    assert np.mean(estimates) == pytest.approx(1 / 3, rel=0.03)


def test_function_forcing_load_integrates_exactly_for_polynomials():
    mesh = refine_nvb(unit_square_mesh(3), [1, 2])
    F = Forcing.function(lambda x: x[:, 0] ** 2 + 3 * x[:, 1])
    assert F.load_vector(mesh).sum() == pytest.approx(1 / 3 + 1.5, rel=1e-13)
    assert F.l2_squared(mesh).sum() == pytest.approx(1 / 5 + 6 * (1 / 3) * (1 / 2) + 3.0, rel=1e-13)
