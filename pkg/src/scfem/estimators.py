"""Parametric and finite element a-posteriori estimators.

Both estimators work on gradient samples: for every collocation point ``y`` the
gradient of its FE solution evaluated at the fixed spatial sample set. The
L2(D) norm is the root mean square over those samples and the sup-norm over
the parameter box is a max over the parameter sample set.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fem import DiffusionCoefficient
from .multiindex import MultiIndex, MultiIndexSet, as_index, backward_neighbors, margin
from .sparse_grid import (ParamSampleSet, SparseGrid, lagrange_sup_norms, surplus_apply,
                          surplus_weights, tensor_points)


@dataclass(frozen=True, eq=False)
class SpatialSampleSet:
    """Monte Carlo points in the open unit square with their subdomain labels."""

    points: np.ndarray
    labels: np.ndarray
    seed: int | None = None

    @classmethod
    def uniform(cls, size: int, seed: int,
                label_of: Callable[[np.ndarray], np.ndarray]) -> "SpatialSampleSet":
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0.0, 1.0, size=(size, 2))
        pts = np.clip(pts, 1e-12, 1.0 - 1e-12)
        return cls(pts, np.asarray(label_of(pts), dtype=np.int64), seed)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class EstimatorReport:
    zeta: dict[MultiIndex, float]
    zeta_sc: float
    eta: np.ndarray
    weights: np.ndarray
    eta_fe: float
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.zeta_sc + self.eta_fe


def _surplus_norms(i: MultiIndex, values: np.ndarray, coeff: DiffusionCoefficient,
                   theta: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """RMS over the spatial samples of Delta^{m(i)}(a * values) at every theta point.

    ``values`` holds the vector field on the level-``i`` tensor grid, shape
    ``(n_tensor, P, 2)``. The coefficient is constant per label, so the product
    with ``a`` is a row scaling per label group.
    """
    T = tensor_points(i)
    K = surplus_weights(i, theta)
    alpha = coeff.values_many(T)
    P = values.shape[1]
    acc = np.zeros(theta.shape[0])
    for r in np.unique(labels):
        Hr = values[:, labels == r, :].reshape(T.shape[0], -1)
        if Hr.shape[1] > Hr.shape[0]:
            # H = R^T Q^T with orthonormal Q: row norms of B H equal those of B R^T
            Hr = np.linalg.qr(Hr.T, mode="r").T
        Y = (K * alpha[:, r][None, :]) @ Hr
        acc += np.einsum("ij,ij->i", Y, Y)
    return np.sqrt(acc / P)


def zeta_pointwise(i: Sequence[int], I: MultiIndexSet, grid: SparseGrid, grads: np.ndarray,
                   coeff: DiffusionCoefficient, theta: ParamSampleSet,
                   labels: np.ndarray) -> float:
    """Pointwise parametric estimator of margin index ``i``.

    Only the backward neighbours of ``i`` contribute, so the surplus is applied
    to ``a * sum_j Delta^{m(j)} grad U`` for ``j`` in that neighbour set.
    ``grads[p]`` is the gradient sample array (P, 2) of grid point ``p``.
    """
    i = as_index(i)
    T = tensor_points(i)
    H = np.zeros((T.shape[0],) + grads.shape[1:])
    for j in backward_neighbors(i, I):
        D = surplus_weights(j, T)
        H += np.tensordot(D, grads[grid.columns(j)], axes=(1, 0))
    return float(_surplus_norms(i, H, coeff, theta.points, labels).max())


def zeta_direct(i: Sequence[int], grid: SparseGrid, grads: np.ndarray,
                coeff: DiffusionCoefficient, theta: ParamSampleSet,
                labels: np.ndarray) -> float:
    """Reference evaluation of the same quantity straight from its definition.

    Evaluates the full interpolant S_I[grad U] (combination technique) at the
    needed parameter points, multiplies by ``a`` pointwise and applies the
    surplus as the signed sum of tensor interpolants, one theta point at a time.
    Slow; meant for checking ``zeta_pointwise``.
    """
    i = as_index(i)
    T = tensor_points(i)
    SI = np.tensordot(grid.lagrange_matrix(T), grads, axes=(1, 0))
    a_T = coeff.values_many(T)[:, labels]
    samples = {tuple(float(v) for v in t): a_T[k][:, None] * SI[k] for k, t in enumerate(T)}
    best = 0.0
    for z in theta.points:
        g = surplus_apply(i, samples, z)
        best = max(best, float(np.sqrt(np.mean(np.sum(g * g, axis=1)))))
    return best


def zeta_total(I: MultiIndexSet, grid: SparseGrid, grads: np.ndarray,
               coeff: DiffusionCoefficient, theta: ParamSampleSet,
               labels: np.ndarray) -> tuple[dict[MultiIndex, float], float]:
    M = margin(I)
    if not M:
        raise ValueError("empty margin")
    zeta = {i: zeta_pointwise(i, I, grid, grads, coeff, theta, labels) for i in M}
    total = 0.0
    for i in M:
        total += zeta[i]
    return zeta, total


def eta_total(eta: np.ndarray, weights: np.ndarray) -> float:
    """Weighted sum of per-point FE estimators, in grid order."""
    total = 0.0
    for e, w in zip(eta, weights):
        total += float(e) * float(w)
    return total


def estimate(grid: SparseGrid, grads: np.ndarray, eta: np.ndarray, coeff: DiffusionCoefficient,
             theta: ParamSampleSet, pi: SpatialSampleSet,
             weights: np.ndarray | None = None,
             zeta: dict[MultiIndex, float] | None = None) -> EstimatorReport:
    """Full estimator report; pass ``weights``/``zeta`` to reuse earlier values."""
    if weights is None:
        weights = lagrange_sup_norms(grid, theta)
    if zeta is None:
        zeta, zeta_sc = zeta_total(grid.index_set, grid, grads, coeff, theta, pi.labels)
    else:
        zeta_sc = 0.0
        for i in sorted(zeta):
            zeta_sc += zeta[i]
    eta = np.asarray(eta, dtype=float)
    return EstimatorReport(
        zeta=zeta, zeta_sc=zeta_sc, eta=eta, weights=weights,
        eta_fe=eta_total(eta, weights),
        meta={"n_theta": len(theta), "theta_seed": theta.seed,
              "n_pi": len(pi), "pi_seed": pi.seed,
              "grad_scale": float(np.sqrt((grads ** 2).sum(axis=2).mean(axis=1)).max())},
    )
