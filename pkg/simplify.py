"""Quadric error metric edge-collapse simplification.

Greedy Garland-Heckbert decimation with an edge-length regularizer. Collapses
that would make an edge non-manifold, flip a face, pinch the boundary or
produce duplicate/degenerate faces are rejected.
"""

from __future__ import annotations

import heapq
import logging
import warnings

import numpy as np

from errors import DegenerateMeshError, SimplifyWarning
from geometry import triangle_normals_areas
from models import TriMesh

logger = logging.getLogger(__name__)

SINGULAR_DET = 1e-12


def face_quadrics(tris: np.ndarray) -> np.ndarray:
    """Area-weighted plane quadrics ``area * p p^T`` with ``p = (n, -n.x0)``."""
    normals, areas = triangle_normals_areas(tris)
    if np.any(areas <= 0):
        bad = int(np.flatnonzero(areas <= 0)[0])
        raise DegenerateMeshError(f"face {bad} has zero area")
    planes = np.concatenate([normals, -np.einsum("ij,ij->i", normals, tris[:, 0])[:, None]], axis=1)
    return areas[:, None, None] * planes[:, :, None] * planes[:, None, :]


def compute_vertex_quadrics(mesh: TriMesh) -> np.ndarray:
    """Sum of incident face quadrics per vertex, shape (V, 4, 4)."""
    fq = face_quadrics(mesh.triangles)
    q = np.zeros((mesh.n_vertices, 4, 4))
    for k in range(3):
        np.add.at(q, mesh.faces[:, k], fq)
    return q


def quadric_error(q: np.ndarray, x: np.ndarray) -> float:
    h = np.append(x, 1.0)
    return float(h @ q @ h)


def optimal_position(q: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimizer of the quadric; edge midpoint when the system is singular."""
    m = q[:3, :3]
    if abs(np.linalg.det(m)) < SINGULAR_DET:
        return (a + b) / 2.0
    return np.linalg.solve(m, -q[:3, 3])


def collapse_cost(
    mesh: TriMesh, quadrics: np.ndarray, edge: tuple[int, int], lambda_edge: float = 0.0
) -> tuple[float, np.ndarray]:
    """QEM error at the optimal position plus ``lambda_edge * length^2``."""
    u, v = edge
    return _edge_cost(quadrics[u] + quadrics[v], mesh.vertices[u], mesh.vertices[v], lambda_edge)


def _edge_cost(q: np.ndarray, a: np.ndarray, b: np.ndarray, lambda_edge: float):
    x = optimal_position(q, a, b)
    length2 = float(np.sum((a - b) ** 2))
    # clamp round-off below zero; the quadric is positive semi-definite
    return max(quadric_error(q, x), 0.0) + lambda_edge * length2, x


class _CollapseMesh:
    """Mutable face soup with vertex-to-face incidence for decimation."""

    def __init__(self, mesh: TriMesh):
        self.pos = mesh.vertices.copy()
        self.faces = mesh.faces.copy()
        self.alive = np.ones(len(self.faces), dtype=bool)
        self.vertex_faces: list[set[int]] = [set() for _ in range(mesh.n_vertices)]
        for f, tri in enumerate(self.faces.tolist()):
            for v in tri:
                self.vertex_faces[v].add(f)
        self.n_alive = len(self.faces)

    def neighbors(self, v: int) -> set[int]:
        out = set()
        for f in self.vertex_faces[v]:
            out.update(self.faces[f].tolist())
        out.discard(v)
        return out

    def edge_faces(self, u: int, v: int) -> set[int]:
        return self.vertex_faces[u] & self.vertex_faces[v]

    def is_boundary_edge(self, u: int, v: int) -> bool:
        return len(self.edge_faces(u, v)) == 1

    def is_boundary_vertex(self, v: int) -> bool:
        return any(self.is_boundary_edge(v, w) for w in self.neighbors(v))

    def can_collapse(self, u: int, v: int, x: np.ndarray) -> bool:
        shared = self.edge_faces(u, v)
        if len(shared) not in (1, 2):
            return False

        # link condition: common neighbors are exactly the opposite corners
        opposite = set()
        for f in shared:
            opposite.update(self.faces[f].tolist())
        opposite -= {u, v}
        if self.neighbors(u) & self.neighbors(v) != opposite:
            return False

        if len(shared) == 2 and self.is_boundary_vertex(u) and self.is_boundary_vertex(v):
            return False

        kept_u = {tuple(sorted(self.faces[f].tolist())) for f in self.vertex_faces[u] - shared}
        for f in (self.vertex_faces[u] | self.vertex_faces[v]) - shared:
            tri = self.faces[f]
            old = self.pos[tri]
            new = old.copy()
            new[tri == u] = x
            new[tri == v] = x
            n_old, _ = triangle_normals_areas(old[None])
            n_new, a_new = triangle_normals_areas(new[None])
            if a_new[0] <= 1e-14 or float(n_old[0] @ n_new[0]) < 0:
                return False
            if v in tri:
                moved = tuple(sorted(u if w == v else int(w) for w in tri))
                if moved in kept_u:
                    return False
        return True

    def collapse(self, u: int, v: int, x: np.ndarray) -> None:
        """Merge ``v`` into ``u`` placed at ``x``."""
        for f in self.edge_faces(u, v):
            self.alive[f] = False
            self.n_alive -= 1
            for w in self.faces[f].tolist():
                self.vertex_faces[w].discard(f)
        for f in self.vertex_faces[v]:
            self.faces[f][self.faces[f] == v] = u
            self.vertex_faces[u].add(f)
        self.vertex_faces[v] = set()
        self.pos[u] = x

    def to_mesh(self) -> TriMesh:
        faces = self.faces[self.alive]
        used = np.unique(faces)
        remap = np.full(len(self.pos), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        return TriMesh(self.pos[used], remap[faces])


def simplify(mesh: TriMesh, target_faces: int, lambda_edge: float = 0.0) -> TriMesh:
    """Collapse the cheapest valid edges until at most ``target_faces`` remain.

    When every remaining collapse is rejected the best-effort mesh is returned
    and a ``SimplifyWarning`` is emitted.
    """
    if mesh.n_faces <= target_faces:
        return mesh

    work = _CollapseMesh(mesh)
    quadrics = compute_vertex_quadrics(mesh)
    version = np.zeros(mesh.n_vertices, dtype=np.int64)
    heap: list = []

    def push(u: int, v: int) -> None:
        a, b = (u, v) if u < v else (v, u)
        cost, _ = _edge_cost(quadrics[a] + quadrics[b], work.pos[a], work.pos[b], lambda_edge)
        heapq.heappush(heap, (cost, a, b, int(version[a]), int(version[b])))

    for a, b in mesh.edges.tolist():
        push(a, b)

    rejected = 0
    while work.n_alive > target_faces and heap:
        cost, a, b, va, vb = heapq.heappop(heap)
        if va != version[a] or vb != version[b] or not work.vertex_faces[a] or not work.vertex_faces[b]:
            continue
        q = quadrics[a] + quadrics[b]
        _, x = _edge_cost(q, work.pos[a], work.pos[b], lambda_edge)
        if not work.can_collapse(a, b, x):
            rejected += 1
            continue
        work.collapse(a, b, x)
        quadrics[a] = q
        version[a] += 1
        version[b] += 1
        for w in work.neighbors(a):
            push(a, w)

    result = work.to_mesh()
    if result.n_faces > target_faces:
        msg = (
            f"simplification stopped at {result.n_faces} faces "
            f"(target {target_faces}); remaining collapses rejected"
        )
        logger.warning(msg)
        warnings.warn(msg, SimplifyWarning, stacklevel=2)
    logger.info(
        "simplified %d -> %d faces (%d collapses rejected)",
        mesh.n_faces,
        result.n_faces,
        rejected,
    )
    return result
