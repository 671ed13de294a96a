"""P1 finite elements for -div(a(y) grad u) = f with homogeneous Dirichlet data."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import product
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Triangulation, locate_points

# 7-point, degree-5 rule on the reference triangle (barycentric coords, weights sum to 1)
_A, _B = 0.059715871789770, 0.470142064105115
_C, _D = 0.797426985353087, 0.101286507323456
QUAD_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A, _B, _B], [_B, _A, _B], [_B, _B, _A],
    [_C, _D, _D], [_D, _C, _D], [_D, _D, _C],
])
QUAD_W = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


class SingularSystemError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DiffusionCoefficient:
    """Affine coefficient a(y, x) = a_0(x) + sum_n a_n(x) * s * y_n, piecewise constant.

    ``base[r]`` and ``terms[n, r]`` are the values on subdomain label ``r``;
    ``param_scale`` is the factor ``s`` mapping reference parameters in
    [-1, 1] to the physical range.
    """

    base: np.ndarray
    terms: np.ndarray
    param_scale: float = 1.0

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        terms = np.asarray(self.terms, dtype=float).reshape(-1, base.size)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "terms", terms)
        if self.a_min <= 0.0:
            raise ValueError(f"coefficient is not uniformly elliptic (min {self.a_min})")

    @property
    def n_params(self) -> int:
        return self.terms.shape[0]

    @property
    def n_labels(self) -> int:
        return self.base.size

    def values(self, y: Sequence[float]) -> np.ndarray:
        """Coefficient value on every label at parameter ``y``."""
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {y.size}")
        return self.base + self.param_scale * (y @ self.terms)

    def values_many(self, Y: np.ndarray) -> np.ndarray:
        """Shape ``(len(Y), n_labels)``."""
        Y = np.asarray(Y, dtype=float)
        Y = Y.reshape(-1, self.n_params) if self.n_params else Y.reshape(max(len(Y), 1), 0)
        return self.base[None, :] + self.param_scale * (Y @ self.terms)

    def corner_values(self) -> np.ndarray:
        # affine in y, so extremes over the box sit at its 2^N corners
        corners = np.array(list(product((-1.0, 1.0), repeat=self.n_params)), dtype=float)
        corners = corners.reshape(-1, self.n_params) if self.n_params else np.zeros((1, 0))
        return self.values_many(corners)

    @cached_property
    def a_min(self) -> float:
        return float(self.corner_values().min())

    @cached_property
    def a_max(self) -> float:
        return float(self.corner_values().max())


@dataclass(frozen=True, eq=False)
class Forcing:
    """Right-hand side: either constant per label or a smooth function of x."""

    label_values: np.ndarray | None = None
    func: Callable[[np.ndarray], np.ndarray] | None = None

    @classmethod
    def piecewise(cls, values) -> "Forcing":
        return cls(label_values=np.asarray(values, dtype=float))

    @classmethod
    def function(cls, func) -> "Forcing":
        return cls(func=func)

    def _quad(self, mesh: Triangulation):
        P = mesh.vertices[mesh.triangles]
        X = np.einsum("qk,tkd->tqd", QUAD_BARY, P)
        return X, self.func(X.reshape(-1, 2)).reshape(X.shape[:2])

    def load_vector(self, mesh: Triangulation) -> np.ndarray:
        F = np.zeros(mesh.n_vertices)
        if self.label_values is not None:
            local = (self.label_values[mesh.labels] * mesh.areas / 3.0)[:, None].repeat(3, axis=1)
        else:
            _, fq = self._quad(mesh)
            local = mesh.areas[:, None] * np.einsum("q,tq,qk->tk", QUAD_W, fq, QUAD_BARY)
        np.add.at(F, mesh.triangles.ravel(), local.ravel())
        return F

    def l2_squared(self, mesh: Triangulation) -> np.ndarray:
        """``||f||^2_{L2(T)}`` per triangle."""
        if self.label_values is not None:
            return self.label_values[mesh.labels] ** 2 * mesh.areas
        _, fq = self._quad(mesh)
        return mesh.areas * (fq ** 2 @ QUAD_W)

    def is_zero(self) -> bool:
        return self.label_values is not None and not np.any(self.label_values)


def barycentric_gradients(mesh: Triangulation) -> np.ndarray:
    """Gradients of the three hat functions on each triangle, shape ``(nt, 3, 2)``."""
    P = mesh.vertices[mesh.triangles]
    twice_area = 2.0 * mesh.areas
    G = np.empty((mesh.n_triangles, 3, 2))
    for k in range(3):
        p1 = P[:, (k + 1) % 3]
        p2 = P[:, (k + 2) % 3]
        G[:, k, 0] = (p1[:, 1] - p2[:, 1]) / twice_area
        G[:, k, 1] = (p2[:, 0] - p1[:, 0]) / twice_area
    return G


def assemble_stiffness(mesh: Triangulation, a_elem: np.ndarray) -> sp.csr_matrix:
    G = barycentric_gradients(mesh)
    K = np.einsum("t,tid,tjd->tij", a_elem * mesh.areas, G, G)
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.coo_matrix((K.ravel(), (rows, cols)), shape=(n, n)).tocsr()


@dataclass(frozen=True, eq=False)
class FESolution:
    """Nodal P1 coefficients (boundary entries are exactly zero) at parameter ``y``."""

    mesh: Triangulation
    u: np.ndarray
    y: tuple[float, ...]

    @cached_property
    def gradients(self) -> np.ndarray:
        """Elementwise constant gradient, shape ``(nt, 2)``."""
        G = barycentric_gradients(self.mesh)
        return np.einsum("tk,tkd->td", self.u[self.mesh.triangles], G)

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_dofs


def assemble_and_solve(mesh: Triangulation, a: DiffusionCoefficient, y: Sequence[float],
                       f: Forcing, rtol: float = 1e-10) -> FESolution:
    y = tuple(float(v) for v in y)
    free = mesh.free_vertices
    if free.size == 0:
        raise SingularSystemError("mesh has no interior vertices")
    a_elem = a.values(y)[mesh.labels]
    if np.any(a_elem <= 0):
        raise SingularSystemError("coefficient is not positive at this parameter")
    u = np.zeros(mesh.n_vertices)
    F = f.load_vector(mesh)[free]
    if not np.any(F):
        return FESolution(mesh, u, y)
    A = assemble_stiffness(mesh, a_elem)[free][:, free].tocsc()
    # SPD system: symmetric ordering without off-diagonal pivoting keeps fill low
    lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                   options={"SymmetricMode": True})
    x = lu.solve(F)
    res = np.linalg.norm(A @ x - F) / np.linalg.norm(F)
    if not np.isfinite(res) or res > rtol:
        raise SingularSystemError(f"linear solve failed, relative residual {res:.3e}")
    u[free] = x
    return FESolution(mesh, u, y)


def residual_estimator(sol: FESolution, a: DiffusionCoefficient,
                       f: Forcing) -> tuple[np.ndarray, float]:
    """Squared residual indicators per triangle and the total ``eta``.

    With P1 and elementwise constant ``a`` the volume residual reduces to
    ``h_T^2 ||f||^2_T``. Each interior edge adds ``h_e ||[a grad U . n] / 2||^2_e``
    to both of its triangles.
    """
    mesh = sol.mesh
    if sol.u.shape != (mesh.n_vertices,):
        raise ValueError("solution does not match its mesh")
    eta2 = mesh.diameters ** 2 * f.l2_squared(mesh)

    flux = a.values(sol.y)[mesh.labels][:, None] * sol.gradients
    ee = mesh.edge_elements
    inner = np.flatnonzero(ee[:, 1] >= 0)
    t1, t2 = ee[inner, 0], ee[inner, 1]
    E = mesh.vertices[mesh.edges[inner]]
    tangent = E[:, 1] - E[:, 0]
    h_e = np.linalg.norm(tangent, axis=1)
    normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1) / h_e[:, None]
    jump = ((flux[t1] - flux[t2]) * normal).sum(axis=1)
    contrib = h_e * h_e * (0.5 * jump) ** 2
    eta2 = eta2 + np.bincount(t1, contrib, mesh.n_triangles) + np.bincount(t2, contrib, mesh.n_triangles)
    return eta2, float(np.sqrt(eta2.sum()))


def gradient_at_points(sol: FESolution, points: np.ndarray) -> np.ndarray:
    """The piecewise constant gradient of ``sol`` at each point, shape ``(P, 2)``."""
    return sol.gradients[locate_points(sol.mesh, points)]


def l2_error(sol: FESolution, exact: Callable[[np.ndarray], np.ndarray]) -> float:
    mesh = sol.mesh
    P = mesh.vertices[mesh.triangles]
    X = np.einsum("qk,tkd->tqd", QUAD_BARY, P)
    uh = np.einsum("qk,tk->tq", QUAD_BARY, sol.u[mesh.triangles])
    ue = exact(X.reshape(-1, 2)).reshape(uh.shape)
    return float(np.sqrt(np.sum(mesh.areas * ((uh - ue) ** 2 @ QUAD_W))))


def h1_seminorm_error(sol: FESolution, exact_grad: Callable[[np.ndarray], np.ndarray]) -> float:
    mesh = sol.mesh
    P = mesh.vertices[mesh.triangles]
    X = np.einsum("qk,tkd->tqd", QUAD_BARY, P)
    ge = exact_grad(X.reshape(-1, 2)).reshape(X.shape)
    d = ge - sol.gradients[:, None, :]
    return float(np.sqrt(np.sum(mesh.areas * ((d ** 2).sum(axis=2) @ QUAD_W))))
