"""Topology queries and geometric utilities on triangle meshes."""

from __future__ import annotations

import logging
import weakref

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from errors import DegenerateMeshError
from models import TopologyReport, TriMesh, UnitCubeTransform

logger = logging.getLogger(__name__)

_fan_cache: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()


def _next_maps(mesh: TriMesh) -> list[dict[int, int]]:
    """Per vertex ``v``: for every incident face ``(v, b, c)``, ``b -> c``."""
    maps = _fan_cache.get(mesh)
    if maps is None:
        maps = [dict() for _ in range(mesh.n_vertices)]
        for a, b, c in mesh.faces.tolist():
            maps[a][b] = c
            maps[b][c] = a
            maps[c][a] = b
        _fan_cache[mesh] = maps
    return maps


def one_ring(mesh: TriMesh, v: int) -> list[int]:
    """Neighbors of ``v`` in counterclockwise fan order.

    At a boundary vertex the walk starts at the boundary edge and moves
    inward, so the order is deterministic.
    """
    nxt = _next_maps(mesh)[v]
    targets = set(nxt.values())
    starts = [b for b in nxt if b not in targets]

    order: list[int] = []
    seen: set[int] = set()
    for s in starts + list(nxt):
        u = s
        while u not in seen:
            seen.add(u)
            order.append(u)
            if u not in nxt:
                break
            u = nxt[u]
    return order


def vertex_degree(mesh: TriMesh, v: int) -> int:
    return len(one_ring(mesh, v))


def vertex_adjacency(mesh: TriMesh) -> sparse.csr_matrix:
    e = mesh.edges
    n = mesh.n_vertices
    data = np.ones(2 * len(e))
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))


def r_ring(mesh: TriMesh, v: int, r: int) -> set[int]:
    """Vertices within ``r`` edges of ``v``; ``v`` itself is at distance 0."""
    if r <= 0:
        return {v}
    dist = dijkstra(vertex_adjacency(mesh), unweighted=True, indices=v, limit=r)
    return set(np.flatnonzero(np.isfinite(dist)).tolist())


def topology_report(mesh: TriMesh) -> TopologyReport:
    counts = mesh.edge_face_counts
    return TopologyReport(
        boundary_edges=int(np.sum(counts == 1)),
        non_manifold_edges=int(np.sum(counts > 2)),
        euler_characteristic=int(mesh.n_vertices - len(mesh.edges) + mesh.n_faces),
    )


def normalize_unit_cube(mesh: TriMesh) -> tuple[TriMesh, UnitCubeTransform]:
    """Center the bounding box and scale its longest axis to [-1, 1], keeping the aspect."""
    transform = unit_cube_transform(mesh.vertices)
    return mesh.with_vertices(transform.apply(mesh.vertices)), transform


def unit_cube_transform(points: np.ndarray) -> UnitCubeTransform:
    points = np.asarray(points, dtype=np.float64)
    if len(points) == 0:
        raise DegenerateMeshError("cannot normalize an empty point set")
    lo, hi = points.min(axis=0), points.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0.0:
        raise DegenerateMeshError("zero-extent mesh: all vertices coincide")
    scale = 2.0 / extent
    return UnitCubeTransform(scale=scale, translation=-scale * (lo + hi) / 2.0)


def face_normals_areas(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    """Unit normals (zero for degenerate faces) and areas per face."""
    return triangle_normals_areas(mesh.triangles)


def triangle_normals_areas(tris: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cross = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    norm = np.linalg.norm(cross, axis=1)
    normals = np.zeros_like(cross)
    ok = norm > 0
    normals[ok] = cross[ok] / norm[ok, None]
    return normals, norm / 2.0


def sample_surface_barycentric(
    mesh: TriMesh, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Area-weighted face choice plus uniform barycentric coordinates."""
    _, areas = face_normals_areas(mesh)
    total = areas.sum()
    if not total > 0:
        raise DegenerateMeshError("cannot sample a zero-area mesh")
    face_ids = rng.choice(mesh.n_faces, size=n, p=areas / total)
    r1, r2 = rng.random((2, n))
    s = np.sqrt(r1)
    bary = np.stack([1.0 - s, s * (1.0 - r2), s * r2], axis=1)
    return face_ids, bary


def sample_surface(mesh: TriMesh, n: int, seed: int | np.random.Generator = 0) -> np.ndarray:
    """``n`` points uniformly distributed over the surface area."""
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    face_ids, bary = sample_surface_barycentric(mesh, n, rng)
    return np.einsum("nk,nkd->nd", bary, mesh.triangles[face_ids])


def closest_point_on_triangle(p: np.ndarray, tris: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closest points of ``p[k]`` on triangles ``tris[k]`` and their barycentric weights.

    Region tests follow Ericson, Real-Time Collision Detection, 5.1.5.
    """
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab, ac = b - a, c - a
    ap, bp, cp = p - a, p - b, p - c
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    bary = np.zeros((len(p), 3))
    done = np.zeros(len(p), dtype=bool)

    with np.errstate(divide="ignore", invalid="ignore"):
        m = (d1 <= 0) & (d2 <= 0)
        bary[m] = (1.0, 0.0, 0.0)
        done |= m

        m = ~done & (d3 >= 0) & (d4 <= d3)
        bary[m] = (0.0, 1.0, 0.0)
        done |= m

        m = ~done & (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        v = d1[m] / (d1[m] - d3[m])
        bary[m] = np.stack([1.0 - v, v, np.zeros_like(v)], axis=1)
        done |= m

        m = ~done & (d6 >= 0) & (d5 <= d6)
        bary[m] = (0.0, 0.0, 1.0)
        done |= m

        m = ~done & (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        w = d2[m] / (d2[m] - d6[m])
        bary[m] = np.stack([1.0 - w, np.zeros_like(w), w], axis=1)
        done |= m

        m = ~done & (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        w = (d4[m] - d3[m]) / ((d4[m] - d3[m]) + (d5[m] - d6[m]))
        bary[m] = np.stack([np.zeros_like(w), 1.0 - w, w], axis=1)
        done |= m

        m = ~done
        denom = va[m] + vb[m] + vc[m]
        v = vb[m] / denom
        w = vc[m] / denom
        bary[m] = np.stack([1.0 - v - w, v, w], axis=1)

    bary = np.clip(bary, 0.0, 1.0)
    bary /= bary.sum(axis=1, keepdims=True)
    closest = np.einsum("nk,nkd->nd", bary, tris)
    return closest, bary


def closest_points(
    mesh: TriMesh, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest surface point of every query point: (face ids, barycentric weights, points).

    Candidate faces come from a k-d tree over face centroids; any face whose
    centroid lies within (best distance + largest centroid-to-corner radius)
    is checked, so the result is exact. Ties go to the lowest face id.
    """
    points = np.asarray(points, dtype=np.float64)
    tris = mesh.triangles
    centroids = tris.mean(axis=1)
    radius = float(np.linalg.norm(tris - centroids[:, None], axis=2).max())
    tree = cKDTree(centroids)
    n_points = len(points)

    k = min(8, mesh.n_faces)
    _, cand = tree.query(points, k=k)
    cand = np.asarray(cand).reshape(n_points, -1)
    pi = np.repeat(np.arange(n_points), cand.shape[1])
    q, _ = closest_point_on_triangle(points[pi], tris[cand.ravel()])
    best = np.linalg.norm(points[pi] - q, axis=1).reshape(n_points, -1).min(axis=1)

    balls = tree.query_ball_point(points, best + radius + 1e-12)
    lengths = [len(b) for b in balls]
    pi = np.repeat(np.arange(n_points), lengths)
    fi = np.concatenate([np.asarray(b, dtype=np.int64) for b in balls])
    q, bary = closest_point_on_triangle(points[pi], tris[fi])
    d2 = np.sum((points[pi] - q) ** 2, axis=1)

    order = np.lexsort((fi, d2, pi))
    keep = np.ones(len(order), dtype=bool)
    keep[1:] = pi[order][1:] != pi[order][:-1]
    first = order[keep]
    logger.debug("closest_points: %d queries, %d candidate pairs", n_points, len(fi))
    return fi[first], bary[first], q[first]
