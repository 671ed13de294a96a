import itertools

import numpy as np
import pytest

from conftest import (N_LABELS, grow_random_set, random_coefficient, random_labels, surplus_data,
                      surplus_of_product, theorem_condition)
from scfem.estimators import (SpatialSampleSet, estimate, eta_total, zeta_direct,
                              zeta_pointwise, zeta_total)
from scfem.fem import DiffusionCoefficient, assemble_and_solve, gradient_at_points
from scfem.mesh import refine_uniform, unit_square_mesh
from scfem.multiindex import MultiIndexSet, margin
from scfem.problems import inclusion_labels, inclusion_reduced
from scfem.sparse_grid import ParamSampleSet, SparseGrid, surplus_apply, tensor_points

def test_vanishing_theorem_pairs_2d():
    rng = np.random.default_rng(7)
    coeff = random_coefficient(rng, 2)
    labels = random_labels(rng)
    theta = rng.uniform(-1, 1, (200, 2))
    levels = list(itertools.product(range(1, 5), repeat=2))
    covered = 0
    for i, j in itertools.product(levels, levels):
        if theorem_condition(i, j):
            covered += 1
            assert surplus_of_product(i, j, coeff, labels, theta, rng) <= 1e-10, (i, j)
    assert covered > 100
    # the excluded cases really do contribute
    assert surplus_of_product((2, 2), (2, 2), coeff, labels, theta, rng) > 1e-3
    assert surplus_of_product((3, 2), (2, 2), coeff, labels, theta, rng) > 1e-3


def test_zeta_vanishes_for_unrelated_surplus():
    rng = np.random.default_rng(1)
    I = MultiIndexSet.rectangle((3, 3))
    grid = SparseGrid(I.union([(4, 1)]))
    labels = random_labels(rng)
    grads = surplus_data((1, 3), grid, rng, len(labels))
    coeff = random_coefficient(rng, 2)
    theta = ParamSampleSet.uniform(2, 200, 0)
    zeta = zeta_pointwise((4, 1), I, SparseGrid(I), grads[:len(SparseGrid(I))], coeff, theta, labels)
    assert zeta <= 1e-10
    assert zeta_direct((4, 1), SparseGrid(I), grads[:len(SparseGrid(I))], coeff, theta,
                       labels) <= 1e-10


@pytest.mark.parametrize("seed", range(10))
def test_simplified_matches_direct_definition(seed):
    rng = np.random.default_rng(100 + seed)
    dim = 1 + seed % 2
    I = grow_random_set(rng, dim, int(rng.integers(1, 7)))
    grid = SparseGrid(I)
    labels = random_labels(rng, 30)
    grads = rng.standard_normal((len(grid), len(labels), 2))
    coeff = random_coefficient(rng, dim)
    theta = ParamSampleSet.uniform(dim, 60, seed)
    for i in margin(I):
        fast = zeta_pointwise(i, I, grid, grads, coeff, theta, labels)
        slow = zeta_direct(i, grid, grads, coeff, theta, labels)
        assert fast == pytest.approx(slow, rel=1e-10)


def test_deterministic_problem_has_no_parametric_error():
    rng = np.random.default_rng(2)
    coeff = DiffusionCoefficient(np.full(N_LABELS, 1.5), np.zeros((2, N_LABELS)))
    I = MultiIndexSet([(1, 1), (2, 1), (1, 2), (2, 2), (3, 1)])
    grid = SparseGrid(I)
    labels = random_labels(rng)
    field = rng.standard_normal((len(labels), 2))
    grads = np.repeat(field[None], len(grid), axis=0)
    theta = ParamSampleSet.uniform(2, 100, 0)
    zeta, total = zeta_total(I, grid, grads, coeff, theta, labels)
    assert all(v <= 1e-10 for v in zeta.values())
    assert total <= 2 * 1e-10


def test_zeta_total_sums_margin_in_order():
    rng = np.random.default_rng(4)
    I = MultiIndexSet([(1, 1), (2, 1)])
    grid = SparseGrid(I)
    labels = random_labels(rng)
    grads = rng.standard_normal((len(grid), len(labels), 2))
    coeff = random_coefficient(rng, 2)
    theta = ParamSampleSet.uniform(2, 50, 0)
    zeta, total = zeta_total(I, grid, grads, coeff, theta, labels)
    assert list(zeta) == list(margin(I))
    expected = 0.0
    for i in margin(I):
        expected += zeta_pointwise(i, I, grid, grads, coeff, theta, labels)
    assert total == expected


def _inclusion_grads(problem, mesh, grid, pi):
    return np.stack([gradient_at_points(assemble_and_solve(mesh, problem.coefficient, p,
                                                           problem.forcing), pi.points)
                     for p in grid.points])


def test_one_parameter_inclusion_estimator_against_definition():
    problem = inclusion_reduced(1)
    mesh = unit_square_mesh(8, inclusion_labels)
    I = MultiIndexSet.unit_set(1)
    grid = SparseGrid(I)
    pi = SpatialSampleSet.uniform(1024, 1, inclusion_labels)
    theta = ParamSampleSet.uniform(1, 500, 0)
    grads = _inclusion_grads(problem, mesh, grid, pi)
    fast = zeta_pointwise((2,), I, grid, grads, problem.coefficient, theta, pi.labels)
    slow = zeta_direct((2,), grid, grads, problem.coefficient, theta, pi.labels)
    assert fast > 0
    assert fast == pytest.approx(slow, rel=1e-12)


def test_parametric_estimator_settles_under_mesh_refinement():
    problem = inclusion_reduced(2)
    I = MultiIndexSet.rectangle((2, 2))
    grid = SparseGrid(I)
    pi = SpatialSampleSet.uniform(2048, 1, inclusion_labels)
    theta = ParamSampleSet.uniform(2, 200, 0)
    mesh = unit_square_mesh(8, inclusion_labels)
    values = []
    for _ in range(5):
        grads = _inclusion_grads(problem, mesh, grid, pi)
        values.append(zeta_total(I, grid, grads, problem.coefficient, theta, pi.labels)[1])
        mesh = refine_uniform(mesh, 2)
    steps = np.abs(np.diff(values))
    assert np.all(np.diff(steps) < 0)
    assert steps[-1] < 0.2 * steps[0]


def test_eta_total_single_point_and_zero():
    assert eta_total(np.array([0.7]), np.array([1.0])) == 0.7
    assert eta_total(np.zeros(3), np.array([1.0, 2.0, 3.0])) == 0.0


def test_estimate_report_fields():
    rng = np.random.default_rng(5)
    I = MultiIndexSet([(1, 1), (2, 1)])
    grid = SparseGrid(I)
    pi = SpatialSampleSet(rng.uniform(0, 1, (40, 2)), random_labels(rng), 0)
    grads = rng.standard_normal((len(grid), 40, 2))
    coeff = random_coefficient(rng, 2)
    theta = ParamSampleSet.uniform(2, 50, 3)
    eta = rng.uniform(0, 1, len(grid))
    rep = estimate(grid, grads, eta, coeff, theta, pi)
    assert rep.total == rep.zeta_sc + rep.eta_fe
    assert rep.eta_fe == pytest.approx(float(eta @ rep.weights), rel=1e-14)
    assert rep.meta["theta_seed"] == 3 and rep.meta["n_pi"] == 40
    again = estimate(grid, grads, eta, coeff, theta, pi, weights=rep.weights, zeta=rep.zeta)
    assert again.zeta_sc == rep.zeta_sc


def test_tensor_points_cover_surplus_needs():
    # every lower tensor grid of a margin index is inside H of I plus that index
    I = MultiIndexSet([(1, 1), (2, 1), (1, 2)])
    grid = SparseGrid(I.union([(2, 2)]))
    pts = set(grid.points)
    for alpha in itertools.product((0, 1), repeat=2):
        lower = (2 - alpha[0], 2 - alpha[1])
        assert {tuple(map(float, p)) for p in tensor_points(lower)} <= pts
