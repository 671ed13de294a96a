"""Conforming triangle meshes with newest-vertex bisection.

Triangles are stored as vertex triples ``(a, b, c)`` ordered counterclockwise,
where ``c`` is the newest vertex and ``(a, b)`` is the refinement edge.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np


@dataclass(frozen=True, eq=False)
class Triangulation:
    """2D triangle mesh.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, refinement edge is ``triangles[:, :2]``
    labels : (nt,) int array of subdomain labels
    boundary : (nb, 2) int array of Dirichlet boundary edges
    parent : (nt,) int array, index of the parent triangle in the mesh this
        one was refined from (identity for an initial mesh)
    """

    vertices: np.ndarray
    triangles: np.ndarray
    labels: np.ndarray
    boundary: np.ndarray
    parent: np.ndarray | None = None

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @cached_property
    def _edge_data(self):
        t = self.triangles
        nv = self.n_vertices
        # local edge k of a triangle: 0 -> (a, b), 1 -> (b, c), 2 -> (c, a)
        local = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1)
        lo = local.min(axis=2).astype(np.int64)
        hi = local.max(axis=2).astype(np.int64)
        keys = lo * nv + hi
        uniq, inverse = np.unique(keys.ravel(), return_inverse=True)
        edges = np.stack([uniq // nv, uniq % nv], axis=1)
        return uniq, edges, inverse.reshape(-1, 3)

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs, shape ``(ne, 2)``."""
        return self._edge_data[1]

    @property
    def element_edges(self) -> np.ndarray:
        """Edge ids per triangle; column 0 is the refinement edge."""
        return self._edge_data[2]

    def edge_ids(self, pairs: np.ndarray) -> np.ndarray:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        keys = pairs.min(axis=1) * self.n_vertices + pairs.max(axis=1)
        uniq = self._edge_data[0]
        pos = np.searchsorted(uniq, keys)
        if np.any(pos >= uniq.size) or np.any(uniq[np.minimum(pos, uniq.size - 1)] != keys):
            raise KeyError("edge not in mesh")
        return pos

    @cached_property
    def edge_elements(self) -> np.ndarray:
        """Two incident triangles per edge, ``-1`` where there is only one.

        Raises if an edge has more than two incident triangles.
        """
        ee = self.element_edges.ravel()
        owner = np.repeat(np.arange(self.n_triangles), 3)
        order = np.argsort(ee, kind="stable")
        counts = np.bincount(ee, minlength=self.edges.shape[0])
        if counts.max(initial=0) > 2:
            raise ValueError("edge with more than two incident triangles")
        out = np.full((self.edges.shape[0], 2), -1, dtype=np.int64)
        start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        out[:, 0] = owner[order[start]]
        two = counts == 2
        out[two, 1] = owner[order[start[two] + 1]]
        return out

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        lengths = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
        return lengths.max(axis=1)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.vertices[self.edges]
        return np.linalg.norm(e[:, 1] - e[:, 0], axis=1)

    def min_angles(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        angles = []
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            v = p[:, (k + 2) % 3] - p[:, k]
            c = (u * v).sum(1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            angles.append(np.arccos(np.clip(c, -1.0, 1.0)))
        return np.min(angles, axis=0)

    @cached_property
    def free_vertices(self) -> np.ndarray:
        fixed = np.zeros(self.n_vertices, dtype=bool)
        fixed[self.boundary.ravel()] = True
        return np.flatnonzero(~fixed)

    @property
    def n_dofs(self) -> int:
        return self.free_vertices.size


def element_diameter(mesh: Triangulation, T: int) -> float:
    if not 0 <= T < mesh.n_triangles:
        raise IndexError(f"triangle id {T} out of range")
    return float(mesh.diameters[T])


def edge_length(mesh: Triangulation, e: int) -> float:
    if not 0 <= e < mesh.edges.shape[0]:
        raise IndexError(f"edge id {e} out of range")
    return float(mesh.edge_lengths[e])


def init_refinement_edges(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Reorder each triangle so its longest edge is the refinement edge.

    Ties go to the edge whose opposite vertex has the smallest id. The output is
    counterclockwise.
    """
    t = np.array(triangles, dtype=np.int64)
    p = vertices[t]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    cw = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    t[cw] = t[cw][:, [0, 2, 1]]
    out = np.empty_like(t)
    for k, tri in enumerate(t):
        # opposite vertex of edge (tri[j+1], tri[j+2]) is tri[j]
        best = None
        for j in range(3):
            a, b, c = tri[(j + 1) % 3], tri[(j + 2) % 3], tri[j]
            L = np.linalg.norm(vertices[a] - vertices[b])
            key = (-L, c)
            if best is None or key < best[0]:
                best = (key, (a, b, c))
        out[k] = best[1]
    return out


def unit_square_mesh(divisions: int,
                     label_of: Callable[[np.ndarray], np.ndarray] | None = None) -> Triangulation:
    """Structured mesh of [0, 1]^2 with ``2 * divisions**2`` right triangles.

    Every cell is cut along its lower-left to upper-right diagonal, which is the
    refinement edge of both halves. ``label_of`` maps triangle centroids to
    subdomain labels (default: all zero).
    """
    n = int(divisions)
    if n < 1:
        raise ValueError("divisions must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)
    vid = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)  # vid[row=y, col=x]
    v00 = vid[:-1, :-1].ravel()
    v10 = vid[:-1, 1:].ravel()
    v01 = vid[1:, :-1].ravel()
    v11 = vid[1:, 1:].ravel()
    lower = np.stack([v11, v00, v10], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    b = np.concatenate([
        np.stack([vid[0, :-1], vid[0, 1:]], axis=1),
        np.stack([vid[:-1, -1], vid[1:, -1]], axis=1),
        np.stack([vid[-1, 1:], vid[-1, :-1]], axis=1),
        np.stack([vid[1:, 0], vid[:-1, 0]], axis=1),
    ])
    centroids = vertices[triangles].mean(axis=1)
    labels = (np.zeros(len(triangles), dtype=np.int64) if label_of is None
              else np.asarray(label_of(centroids), dtype=np.int64))
    return Triangulation(vertices, triangles, labels, b, np.arange(len(triangles)))


def refine_nvb(mesh: Triangulation, marked) -> Triangulation:
    """Newest-vertex bisection of the marked triangles plus closure.

    Old vertices keep their ids; new midpoints are appended in edge order.
    Children are listed in parent order and ``parent`` maps each child to its
    parent. An empty marking returns ``mesh`` itself.
    """
    if mesh.n_triangles == 0:
        raise ValueError("cannot refine an empty mesh")
    marked = np.unique(np.asarray(marked, dtype=np.int64).ravel())
    if marked.size == 0:
        return mesh
    if marked[0] < 0 or marked[-1] >= mesh.n_triangles:
        raise IndexError("marked triangle id out of range")

    t = mesh.triangles
    e2e = mesh.element_edges
    flag = np.zeros(mesh.edges.shape[0], dtype=bool)
    flag[e2e[marked, 0]] = True
    while True:
        need = flag[e2e].any(axis=1) & ~flag[e2e[:, 0]]
        if not need.any():
            break
        flag[e2e[need, 0]] = True

    nv = mesh.n_vertices
    new_id = np.full(flag.size, -1, dtype=np.int64)
    new_id[flag] = nv + np.arange(flag.sum())
    mid = mesh.vertices[mesh.edges[flag]].mean(axis=1)
    vertices = np.vstack([mesh.vertices, mid])

    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    p0, p1, p2 = new_id[e2e[:, 0]], new_id[e2e[:, 1]], new_id[e2e[:, 2]]
    m0, m1, m2 = p0 >= 0, p1 >= 0, p2 >= 0

    pieces = []
    parents = []

    def emit(mask, *children):
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            return
        block = np.stack([np.stack(ch, axis=1)[idx] for ch in children], axis=1)
        pieces.append(block.reshape(-1, 3))
        parents.append(np.repeat(idx, len(children)))

    emit(~m0, (a, b, c))
    emit(m0 & ~m1 & ~m2, (c, a, p0), (b, c, p0))
    emit(m0 & m1 & ~m2, (c, a, p0), (p0, b, p1), (c, p0, p1))
    emit(m0 & ~m1 & m2, (p0, c, p2), (a, p0, p2), (b, c, p0))
    emit(m0 & m1 & m2, (p0, c, p2), (a, p0, p2), (p0, b, p1), (c, p0, p1))

    children = np.concatenate(pieces)
    parent = np.concatenate(parents)
    order = np.argsort(parent, kind="stable")
    children = children[order]
    parent = parent[order]

    bnd = mesh.boundary
    bid = mesh.edge_ids(bnd)
    split = new_id[bid]
    keep = split < 0
    boundary = np.concatenate([
        bnd[keep],
        np.stack([bnd[~keep, 0], split[~keep]], axis=1),
        np.stack([split[~keep], bnd[~keep, 1]], axis=1),
    ])
    return Triangulation(vertices, children, mesh.labels[parent], boundary, parent)


def refine_uniform(mesh: Triangulation, generations: int = 1) -> Triangulation:
    for _ in range(generations):
        mesh = refine_nvb(mesh, np.arange(mesh.n_triangles))
    return mesh


def is_conforming(mesh: Triangulation) -> bool:
    """Edge-incidence check: interior edges have two triangles, boundary edges one."""
    try:
        ee = mesh.edge_elements
    except ValueError:
        return False
    single = np.flatnonzero(ee[:, 1] < 0)
    try:
        bid = np.unique(mesh.edge_ids(mesh.boundary))
    except KeyError:
        return False
    return np.array_equal(np.sort(single), bid)


def locate_points(mesh: Triangulation, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Triangle id containing each point; points on shared edges go to the lower id.

    Uses a uniform bucket grid over the mesh bounding box.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    V = mesh.vertices
    P = V[mesh.triangles]
    lo = V.min(axis=0)
    span = np.maximum(V.max(axis=0) - lo, 1e-300)
    nb = max(1, int(np.sqrt(mesh.n_triangles / 2)))

    def cell(x):
        return np.clip(((x - lo) / span * nb).astype(np.int64), 0, nb - 1)

    tmin = cell(P.min(axis=1))
    tmax = cell(P.max(axis=1))
    nx = tmax[:, 0] - tmin[:, 0] + 1
    ny = tmax[:, 1] - tmin[:, 1] + 1
    cnt = nx * ny
    tri = np.repeat(np.arange(mesh.n_triangles), cnt)
    local = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    cx = tmin[tri, 0] + local % nx[tri]
    cy = tmin[tri, 1] + local // nx[tri]
    cid = cy * nb + cx
    order = np.lexsort((tri, cid))
    cid, tri = cid[order], tri[order]
    start = np.searchsorted(cid, np.arange(nb * nb))
    stop = np.searchsorted(cid, np.arange(nb * nb), side="right")

    pc = cell(pts)
    pcid = pc[:, 1] * nb + pc[:, 0]
    n_cand = stop[pcid] - start[pcid]
    which = np.repeat(np.arange(len(pts)), n_cand)
    off = np.arange(n_cand.sum()) - np.repeat(np.cumsum(n_cand) - n_cand, n_cand)
    cand = tri[start[pcid][which] + off]

    A = P[cand, 0]
    d1 = P[cand, 1] - A
    d2 = P[cand, 2] - A
    r = pts[which] - A
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    l1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
    l2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
    inside = (l1 >= -tol) & (l2 >= -tol) & (1.0 - l1 - l2 >= -tol)

    result = np.full(len(pts), np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(result, which[inside], cand[inside])
    if np.any(result == np.iinfo(np.int64).max):
        raise ValueError("point outside the mesh")
    return result


def write_snapshot(mesh: Triangulation, path) -> None:
    """Plain-text mesh dump: header, ``x y`` lines, then ``v1 v2 v3 label`` lines."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"vertices {mesh.n_vertices} triangles {mesh.n_triangles}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for (v1, v2, v3), lab in zip(mesh.triangles, mesh.labels):
            fh.write(f"{v1} {v2} {v3} {lab}\n")


def read_snapshot(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    nv, nt = int(head[1]), int(head[3])
    verts = np.array([[float(v) for v in ln.split()] for ln in lines[1:1 + nv]])
    rows = np.array([[int(v) for v in ln.split()] for ln in lines[1 + nv:1 + nv + nt]],
                    dtype=np.int64).reshape(-1, 4)
    return verts, rows[:, :3], rows[:, 3]
