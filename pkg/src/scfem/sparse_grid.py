"""Clenshaw-Curtis sparse grids and the combination technique.

The building blocks are 1D barycentric Lagrange bases on nested CC nodes and
their tensor products. Everything that evaluates an interpolant goes through a
weight matrix ``W[k, t]`` (evaluation point ``k``, tensor node ``t``) so that
values of any shape (scalars, nodal vectors, gradient samples) can be
contracted against it with a single matmul.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Mapping, Sequence

import numpy as np

from .multiindex import MultiIndex, MultiIndexSet, as_index, doubling_m

Point = tuple[float, ...]


@lru_cache(maxsize=None)
def _cc_nodes_cached(m: int) -> np.ndarray:
    if m == 0:
        x = np.zeros(0)
    elif m == 1:
        x = np.zeros(1)
    else:
        if (m - 1) & (m - 2):
            raise ValueError(f"unsupported CC node count {m}; need 0, 1 or 2**k + 1")
        x = np.empty(m)
        half = (m - 1) // 2
        # angle is pi * j / 2**k: a power-of-two rescaling of the coarse angle, so
        # nested levels produce bitwise identical coordinates
        for j in range(half):
            x[j] = -np.cos(np.pi * j / (m - 1))
            x[m - 1 - j] = -x[j]
        x[half] = 0.0
    x.setflags(write=False)
    return x


def cc_nodes(m: int) -> np.ndarray:
    """Sorted Clenshaw-Curtis abscissae in [-1, 1] for ``m`` in {0, 1, 3, 5, 9, ...}.

    ``m = 1`` yields the midpoint ``{0}``.
    """
    if m < 0:
        raise ValueError("node count must be non-negative")
    return _cc_nodes_cached(int(m))


def level_nodes(level: int) -> np.ndarray:
    return cc_nodes(doubling_m(level))


@lru_cache(maxsize=None)
def _bary_weights(m: int) -> np.ndarray:
    x = cc_nodes(m)
    w = np.ones(m)
    for j in range(m):
        d = x[j] - np.delete(x, j)
        w[j] = 1.0 / np.prod(d)
    w.setflags(write=False)
    return w


def lagrange_basis_1d(m: int, z: np.ndarray) -> np.ndarray:
    """Values of the ``m`` CC Lagrange basis polynomials at ``z``.

    Returns an array of shape ``(len(z), m)``. Exact Kronecker delta at nodes.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if m == 0:
        return np.zeros((z.size, 0))
    if m == 1:
        return np.ones((z.size, 1))
    x = cc_nodes(m)
    w = _bary_weights(m)
    diff = z[:, None] - x[None, :]
    hit = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = w[None, :] / diff
        B = terms / terms.sum(axis=1, keepdims=True)
    rows = hit.any(axis=1)
    if rows.any():
        B[rows] = hit[rows].astype(float)
    return B


@lru_cache(maxsize=None)
def _coarse_positions(level: int) -> np.ndarray:
    """Positions of the level-1 nodes inside the level nodes."""
    fine = level_nodes(level)
    coarse = level_nodes(level - 1)
    pos = np.searchsorted(fine, coarse)
    assert np.array_equal(fine[pos], coarse), "CC nodes are not nested"
    return pos


def detail_basis_1d(level: int, z: np.ndarray) -> np.ndarray:
    """Basis of the 1D detail operator U^{m(l)} - U^{m(l-1)}, on the level-l nodes."""
    B = lagrange_basis_1d(doubling_m(level), z)
    if level > 1:
        B[:, _coarse_positions(level)] -= lagrange_basis_1d(doubling_m(level - 1), z)
    return B


def tensor_points(i: Sequence[int]) -> np.ndarray:
    """Full tensor grid of level ``i``, C-ordered, shape ``(prod m(i_n), N)``."""
    axes = [level_nodes(l) for l in i]
    if any(a.size == 0 for a in axes):
        return np.zeros((0, len(axes)))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def tensor_weights(bases: Sequence[np.ndarray]) -> np.ndarray:
    """Row-wise Kronecker product of per-direction bases, matching ``tensor_points``."""
    W = bases[0]
    for B in bases[1:]:
        W = (W[:, :, None] * B[:, None, :]).reshape(W.shape[0], -1)
    return W


def interpolation_weights(i: Sequence[int], Z: np.ndarray) -> np.ndarray:
    Z = np.atleast_2d(Z)
    return tensor_weights([lagrange_basis_1d(doubling_m(l), Z[:, n]) for n, l in enumerate(i)])


def surplus_weights(i: Sequence[int], Z: np.ndarray) -> np.ndarray:
    """Weights of the hierarchical surplus of level ``i`` on the level-``i`` tensor grid."""
    Z = np.atleast_2d(Z)
    return tensor_weights([detail_basis_1d(l, Z[:, n]) for n, l in enumerate(i)])


def combination_coefficients(I: MultiIndexSet) -> dict[MultiIndex, int]:
    if not I.is_downward_closed():
        raise ValueError("multi-index set is not downward-closed")
    coeffs = {}
    for i in I:
        c = 0
        for j in product((0, 1), repeat=I.dim):
            if tuple(a + b for a, b in zip(i, j)) in I:
                c += (-1) ** sum(j)
        coeffs[i] = c
    return coeffs


def _as_points(Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    return Z[None, :] if Z.ndim == 1 else Z


class SparseGrid:
    """Collocation points of a downward-closed index set.

    Points are kept in creation order: a grid built with ``previous`` lists the
    previous grid's points first, in the same order, then the new ones.
    """

    def __init__(self, index_set: MultiIndexSet, previous: "SparseGrid | None" = None):
        self.index_set = index_set
        self.dim = index_set.dim
        self.coefficients = combination_coefficients(index_set)
        points: list[Point] = list(previous.points) if previous is not None else []
        lookup: dict[Point, int] = {p: k for k, p in enumerate(points)}
        self._columns: dict[MultiIndex, np.ndarray] = {}
        for i in index_set:
            cols = []
            for row in tensor_points(i):
                p = tuple(float(v) for v in row)
                k = lookup.get(p)
                if k is None:
                    k = len(points)
                    lookup[p] = k
                    points.append(p)
                cols.append(k)
            self._columns[i] = np.asarray(cols, dtype=int)
        self.points: tuple[Point, ...] = tuple(points)
        self.lookup = lookup

    def __len__(self) -> int:
        return len(self.points)

    def columns(self, i: MultiIndex) -> np.ndarray:
        """Grid positions of the tensor points of level ``i`` (``i`` in the index set)."""
        return self._columns[i]

    def lagrange_matrix(self, Z) -> np.ndarray:
        """``L[k, p]``: the sparse-grid Lagrange basis of point ``p`` evaluated at ``Z[k]``."""
        Z = _as_points(Z)
        L = np.zeros((Z.shape[0], len(self.points)))
        for i, c in self.coefficients.items():
            if c == 0:
                continue
            # columns of one tensor grid are distinct, so fancy-index += is safe
            L[:, self._columns[i]] += c * interpolation_weights(i, Z)
        return L

    def stack(self, values: Mapping[Point, np.ndarray]) -> np.ndarray:
        try:
            return np.stack([np.asarray(values[p], dtype=float) for p in self.points])
        except KeyError as err:
            raise KeyError(f"missing value for collocation point {err.args[0]}") from None


def collocation_points(I: MultiIndexSet) -> SparseGrid:
    return SparseGrid(I)


def interpolate(grid: SparseGrid, values: Mapping[Point, np.ndarray], z) -> np.ndarray:
    """Evaluate the sparse-grid interpolant of ``values`` at ``z``.

    ``z`` may be a single point (result has the value shape) or an array of
    points (leading axis added).
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    V = grid.stack(values)
    L = grid.lagrange_matrix(z)
    out = np.tensordot(L, V, axes=(1, 0))
    return out[0] if single else out


def surplus_apply(i: Sequence[int], samples: Mapping[Point, np.ndarray], z) -> np.ndarray:
    """Hierarchical surplus of level ``i`` as the signed sum of 2^N tensor interpolants."""
    i = as_index(i)
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    Z = _as_points(z)
    total = None
    for alpha in product((0, 1), repeat=len(i)):
        lower = tuple(a - b for a, b in zip(i, alpha))
        if min(lower) == 0:
            continue
        pts = tensor_points(lower)
        try:
            V = np.stack([np.asarray(samples[tuple(float(v) for v in row)], dtype=float)
                          for row in pts])
        except KeyError as err:
            raise KeyError(f"missing sample at {err.args[0]}") from None
        term = np.tensordot(interpolation_weights(lower, Z), V, axes=(1, 0))
        term = term if sum(alpha) % 2 == 0 else -term
        total = term if total is None else total + term
    return total[0] if single else total


@dataclass(frozen=True)
class ParamSampleSet:
    """Finite sample set used for sup-norms over the parameter box [-1, 1]^N."""

    points: np.ndarray
    seed: int | None
    kind: str = "uniform"

    @classmethod
    def uniform(cls, dim: int, size: int, seed: int) -> "ParamSampleSet":
        rng = np.random.default_rng(seed)
        return cls(rng.uniform(-1.0, 1.0, size=(size, dim)), seed, "uniform")

    @classmethod
    def tensor_cc(cls, dim: int, level: int) -> "ParamSampleSet":
        return cls(tensor_points((level,) * dim), None, f"tensor_cc_{level}")

    def __len__(self) -> int:
        return self.points.shape[0]


def lagrange_sup_norms(grid: SparseGrid, theta: ParamSampleSet) -> np.ndarray:
    """Max over the sample set of ``|L_y|`` for every grid point, in grid order."""
    return np.abs(grid.lagrange_matrix(theta.points)).max(axis=0)


def lagrange_sup_norm(grid: SparseGrid, y: Sequence[float], theta: ParamSampleSet) -> float:
    y = tuple(float(v) for v in y)
    if y not in grid.lookup:
        raise KeyError(f"{y} is not a collocation point")
    L = grid.lagrange_matrix(theta.points)
    return float(np.abs(L[:, grid.lookup[y]]).max())
