"""Adaptive drivers: FE refinement, parameter enrichment and their alternation.

``scfe_driver`` alternates ``refine_fe_spaces`` (Dörfler marking over
collocation points, then over elements of each marked point's mesh) with
``refine_parameter_space`` (profit-maximising enrichment of the index set).
``sc_driver`` is the parameter-only loop run against a fixed fine-mesh sampler.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .estimators import EstimatorReport, SpatialSampleSet, estimate, zeta_total
from .fem import FESolution, assemble_and_solve, gradient_at_points, residual_estimator
from .mesh import Triangulation, locate_points, refine_nvb, refine_uniform
from .multiindex import (MultiIndex, MultiIndexSet, margin, reduced_set, stability_bound,
                         work)
from .problems import ProblemSpec
from .sparse_grid import ParamSampleSet, Point, SparseGrid, lagrange_sup_norms

log = logging.getLogger(__name__)

PROFIT_KINDS = ("workless", "with_work")
TOL_RULES = ("margin_weighted", "simplified")
# parametric estimator below this fraction of the gradient scale counts as zero
ZETA_FLOOR = 1e-10


class BudgetExceeded(RuntimeError):
    pass


class SweepLimitExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class AdaptiveConfig:
    """Parameters of the coupled adaptive loop.

    Ties in the profit argmax go to the lexicographically smallest index,
    comparing entries left to right.
    """

    eps: float = 1e-1
    theta_y: float = 0.5
    theta_x: float = 0.25
    alpha: float = 0.9
    profit: str = "with_work"
    tol_rule: str = "simplified"
    deferred_tol: bool = True
    n_theta: int = 1000
    theta_seed: int = 0
    n_pi: int = 4096
    pi_seed: int = 1
    max_outer: int = 50
    max_dofs: int = 500_000
    max_sweeps: int = 10_000
    workers: int = 1

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        for name in ("theta_y", "theta_x", "alpha"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.profit not in PROFIT_KINDS:
            raise ValueError(f"profit must be one of {PROFIT_KINDS}")
        if self.tol_rule not in TOL_RULES:
            raise ValueError(f"tol_rule must be one of {TOL_RULES}")
        for name in ("n_theta", "n_pi", "max_outer", "max_dofs", "max_sweeps", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class IterationRecord:
    phase: str
    outer: int
    sweep: int
    n_indices: int
    n_points: int
    dofs: int
    zeta_sc: float
    eta_fe: float
    total: float
    tol: float | None = None
    selected: MultiIndex | None = None
    elapsed: float = 0.0


@dataclass(eq=False)
class PointRecord:
    """FE data owned by one collocation point."""

    solution: FESolution
    eta2: np.ndarray
    eta: float
    grads: np.ndarray

    @property
    def mesh(self) -> Triangulation:
        return self.solution.mesh


@dataclass(eq=False)
class CollocationState:
    problem: ProblemSpec
    grid: SparseGrid
    records: dict[Point, PointRecord]
    init_mesh: Triangulation
    theta: ParamSampleSet
    pi: SpatialSampleSet
    weights: np.ndarray | None = None

    @property
    def index_set(self) -> MultiIndexSet:
        return self.grid.index_set

    @property
    def dofs(self) -> int:
        return sum(self.records[p].mesh.n_dofs for p in self.grid.points)

    def grads(self) -> np.ndarray:
        return np.stack([self.records[p].grads for p in self.grid.points])

    def etas(self) -> np.ndarray:
        return np.array([self.records[p].eta for p in self.grid.points])

    def lagrange_weights(self) -> np.ndarray:
        if self.weights is None:
            self.weights = lagrange_sup_norms(self.grid, self.theta)
        return self.weights

    def is_complete(self) -> bool:
        return all(p in self.records for p in self.grid.points)


def solve_point(problem: ProblemSpec, mesh: Triangulation, y: Sequence[float],
                pi: SpatialSampleSet) -> PointRecord:
    sol = assemble_and_solve(mesh, problem.coefficient, y, problem.forcing)
    eta2, eta = residual_estimator(sol, problem.coefficient, problem.forcing)
    return PointRecord(sol, eta2, eta, gradient_at_points(sol, pi.points))


def _parallel_map(fn: Callable, items: list, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def dorfler_select(weights: Sequence[float], theta: float) -> np.ndarray:
    """Smallest set of ids whose weights sum to at least ``theta`` times the total.

    Ids are sorted by decreasing weight (ties: lower id first) and the shortest
    qualifying prefix is returned, in that order.
    """
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    total = w.sum()
    if not total > 0:
        raise ValueError("all weights are zero; nothing to mark")
    order = np.argsort(-w, kind="stable")
    csum = np.cumsum(w[order])
    k = int(np.searchsorted(csum, theta * total, side="left")) + 1
    return order[:min(k, w.size)]


def profit(i: MultiIndex, I: MultiIndexSet, zeta: dict[MultiIndex, float],
           kind: str = "workless") -> float:
    A = reduced_set(i, I)
    try:
        gain = sum(zeta[j] for j in A)
    except KeyError as err:
        raise KeyError(f"missing estimator for index {err.args[0]}") from None
    if kind == "workless":
        return gain
    if kind == "with_work":
        return gain / sum(work(j) for j in A)
    raise ValueError(f"unknown profit kind {kind!r}")


def select_index(I: MultiIndexSet, zeta: dict[MultiIndex, float], kind: str) -> MultiIndex:
    best, best_val = None, -np.inf
    for i in margin(I):
        v = profit(i, I, zeta, kind)
        if v > best_val:
            best, best_val = i, v
    return best


def fe_tolerance(report: EstimatorReport, I: MultiIndexSet, config: AdaptiveConfig) -> float:
    if report.zeta_sc <= ZETA_FLOOR * max(report.meta.get("grad_scale", 1.0), 1e-300):
        # deterministic limit: no parametric error to balance against
        return 0.5 * config.eps
    tol = config.alpha * report.zeta_sc
    if config.tol_rule == "margin_weighted":
        tol /= sum(stability_bound(i) for i in margin(I)) ** 2
    return tol


def _report(state: CollocationState, with_zeta: bool = True,
            zeta: dict | None = None) -> EstimatorReport:
    if not with_zeta and zeta is None:
        raise ValueError("need zeta values when skipping their computation")
    return estimate(state.grid, state.grads(), state.etas(), state.problem.coefficient,
                    state.theta, state.pi, weights=state.lagrange_weights(),
                    zeta=None if with_zeta else zeta)


def _record(phase, outer, sweep, state, report, tol=None, selected=None, t0=0.0):
    return IterationRecord(phase, outer, sweep, len(state.index_set), len(state.grid),
                           state.dofs, report.zeta_sc, report.eta_fe, report.total,
                           tol, selected, time.perf_counter() - t0)


def initial_state(problem: ProblemSpec, config: AdaptiveConfig,
                  index_set: MultiIndexSet | None = None) -> CollocationState:
    init_mesh = problem.initial_mesh()
    I = index_set or MultiIndexSet.unit_set(problem.n_params)
    grid = SparseGrid(I)
    theta = ParamSampleSet.uniform(I.dim, config.n_theta, config.theta_seed)
    pi = SpatialSampleSet.uniform(config.n_pi, config.pi_seed, problem.label_of)
    recs = _parallel_map(lambda p: solve_point(problem, init_mesh, p, pi),
                         list(grid.points), config.workers)
    return CollocationState(problem, grid, dict(zip(grid.points, recs)), init_mesh, theta, pi)


def refine_parameter_space(state: CollocationState, zeta: dict[MultiIndex, float],
                           kind: str, workers: int = 1) -> tuple[CollocationState, MultiIndex]:
    """Enrich the index set by the reduced set of the profit maximiser.

    New collocation points are solved on the initial mesh; existing records
    are carried over untouched.
    """
    I = state.index_set
    i = select_index(I, zeta, kind)
    I_new = I.union(reduced_set(i, I))
    grid = SparseGrid(I_new, previous=state.grid)
    new_points = [p for p in grid.points if p not in state.records]
    recs = _parallel_map(lambda p: solve_point(state.problem, state.init_mesh, p, state.pi),
                         new_points, workers)
    records = dict(state.records)
    records.update(zip(new_points, recs))
    return replace(state, grid=grid, records=records, weights=None), i


def _fe_sweep(state: CollocationState, report: EstimatorReport, config: AdaptiveConfig) -> None:
    """One Dörfler pass over collocation points, one mark/refine/solve per marked point."""
    w = report.eta ** 2 * report.weights
    chosen = dorfler_select(w, config.theta_y)
    pts = [state.grid.points[k] for k in sorted(chosen)]

    def work_on(p):
        rec = state.records[p]
        marked = dorfler_select(rec.eta2, config.theta_x)
        mesh = refine_nvb(rec.mesh, marked)
        return solve_point(state.problem, mesh, p, state.pi)

    for p, rec in zip(pts, _parallel_map(work_on, pts, config.workers)):
        state.records[p] = rec


def refine_fe_spaces(state: CollocationState, config: AdaptiveConfig,
                     report: EstimatorReport | None = None, outer: int = 0,
                     emit: Callable[[IterationRecord], None] | None = None,
                     t0: float = 0.0) -> tuple[EstimatorReport, float]:
    """Refine meshes until the weighted FE estimator falls below the tolerance.

    Mutates ``state.records`` in place and returns the final report and
    tolerance. With ``config.deferred_tol`` the tolerance (and the parametric
    estimator it depends on) is only recomputed once the FE estimator has
    dropped below the current value.
    """
    if report is None:
        report = _report(state)
    tol = fe_tolerance(report, state.index_set, config)
    sweeps = 0
    while report.eta_fe > tol:
        if sweeps >= config.max_sweeps:
            raise SweepLimitExceeded(f"no convergence after {sweeps} FE sweeps")
        if state.dofs > config.max_dofs:
            raise BudgetExceeded(f"dof budget {config.max_dofs} exhausted")
        _fe_sweep(state, report, config)
        sweeps += 1
        if config.deferred_tol:
            report = _report(state, with_zeta=False, zeta=report.zeta)
            if report.eta_fe <= tol:
                report = _report(state)
                tol = fe_tolerance(report, state.index_set, config)
        else:
            report = _report(state)
            tol = fe_tolerance(report, state.index_set, config)
        if emit is not None:
            emit(_record("fe_sweep", outer, sweeps, state, report, tol, t0=t0))
        log.debug("sweep %d: dofs=%d eta=%.4e zeta=%.4e tol=%.4e",
                  sweeps, state.dofs, report.eta_fe, report.zeta_sc, tol)
    return report, tol


@dataclass
class DriverResult:
    state: CollocationState
    history: list[IterationRecord]
    status: str
    report: EstimatorReport | None = None
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def scfe_driver(problem: ProblemSpec, config: AdaptiveConfig,
                on_record: Callable[[IterationRecord, CollocationState], None] | None = None
                ) -> DriverResult:
    """Alternate FE refinement and parameter enrichment until the total estimator < eps.

    Budget exhaustion returns ``status="budget"`` with the partial history.
    """
    t0 = time.perf_counter()
    history: list[IterationRecord] = []
    state = initial_state(problem, config)

    def push(rec: IterationRecord) -> None:
        history.append(rec)
        if on_record is not None:
            on_record(rec, state)

    report = _report(state)
    push(_record("init", 0, 0, state, report, fe_tolerance(report, state.index_set, config), t0=t0))
    for outer in range(config.max_outer):
        try:
            report, tol = refine_fe_spaces(state, config, report, outer, push, t0)
        except BudgetExceeded as err:
            return DriverResult(state, history, "budget", message=str(err))
        push(_record("outer", outer, 0, state, report, tol, t0=t0))
        log.info("outer %d: #I=%d #H=%d dofs=%d zeta=%.4e eta=%.4e",
                 outer, len(state.index_set), len(state.grid), state.dofs,
                 report.zeta_sc, report.eta_fe)
        if report.total < config.eps:
            return DriverResult(state, history, "converged", report)
        if state.dofs > config.max_dofs:
            return DriverResult(state, history, "budget", report,
                                message=f"dof budget {config.max_dofs} exhausted")
        state, chosen = refine_parameter_space(state, report.zeta, config.profit, config.workers)
        report = _report(state)
        push(_record("enrich", outer + 1, 0, state, report,
                     fe_tolerance(report, state.index_set, config), chosen, t0=t0))
    return DriverResult(state, history, "budget", report,
                        message=f"outer iteration cap {config.max_outer} reached")


class FineMeshSampler:
    """Stand-in for exact sampling of the solution: FE solves on one fine mesh.

    The mesh is the initial mesh refined uniformly ``extra_generations`` times,
    and gradient samples are cached per parameter point.
    """

    def __init__(self, problem: ProblemSpec, pi: SpatialSampleSet, extra_generations: int = 3):
        self.problem = problem
        self.pi = pi
        self.mesh = refine_uniform(problem.initial_mesh(), extra_generations)
        self._where = locate_points(self.mesh, pi.points)
        self._cache: dict[Point, np.ndarray] = {}

    def grads(self, y: Point) -> np.ndarray:
        g = self._cache.get(y)
        if g is None:
            sol = assemble_and_solve(self.mesh, self.problem.coefficient, y, self.problem.forcing)
            g = sol.gradients[self._where]
            self._cache[y] = g
        return g

    def stack(self, points: Iterable[Point]) -> np.ndarray:
        return np.stack([self.grads(p) for p in points])


@dataclass
class SCResult:
    index_sets: list[MultiIndexSet]
    selected: list[MultiIndex]
    zeta_sc: list[float]
    status: str


def sc_driver(problem: ProblemSpec, eps: float, kind: str = "workless", max_steps: int = 15,
              n_theta: int = 1000, theta_seed: int = 0, n_pi: int = 4096, pi_seed: int = 1,
              sampler: FineMeshSampler | None = None, check_rectangles: bool = True) -> SCResult:
    """Parameter-only adaptive loop against a fine-mesh sampler.

    Under workless profit every index set is checked to be a box ``R_i`` whose
    corner has ``|i|_1 = N + step``; a violation raises ``AssertionError``.
    """
    if kind not in PROFIT_KINDS:
        raise ValueError(f"unknown profit kind {kind!r}")
    N = problem.n_params
    pi = SpatialSampleSet.uniform(n_pi, pi_seed, problem.label_of)
    theta = ParamSampleSet.uniform(N, n_theta, theta_seed)
    sampler = sampler or FineMeshSampler(problem, pi)
    I = MultiIndexSet.unit_set(N)
    grid = SparseGrid(I)
    zeta, zsc = zeta_total(I, grid, sampler.stack(grid.points), problem.coefficient,
                           theta, pi.labels)
    sets, chosen, history = [I], [], [zsc]
    step = 0
    while zsc >= eps:
        if step >= max_steps:
            return SCResult(sets, chosen, history, "budget")
        step += 1
        i = select_index(I, zeta, kind)
        I = I.union(reduced_set(i, I))
        if kind == "workless" and check_rectangles:
            assert I.is_rectangle(), f"index set is not a box after step {step}"
            assert sum(i) == N + step, f"selected index {i} has the wrong 1-norm"
        grid = SparseGrid(I, previous=grid)
        zeta, zsc = zeta_total(I, grid, sampler.stack(grid.points), problem.coefficient,
                               theta, pi.labels)
        sets.append(I)
        chosen.append(i)
        history.append(zsc)
        log.info("sc step %d: selected %s, #I=%d, #H=%d, zeta=%.4e",
                 step, i, len(I), len(grid), zsc)
    return SCResult(sets, chosen, history, "converged")
