"""Reference solids and analytically deforming mesh sequences."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from mesh_io import save_mesh
from models import TriMesh
from remesh import subdivide


def _outward(mesh: TriMesh) -> TriMesh:
    """Flip all faces if the enclosed signed volume is negative."""
    if signed_volume(mesh) < 0:
        return TriMesh(mesh.vertices, mesh.faces[:, ::-1])
    return mesh


def signed_volume(mesh: TriMesh) -> float:
    t = mesh.triangles
    return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)


def tetrahedron() -> TriMesh:
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64)
    f = [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]
    return _outward(TriMesh(v, f))


def octahedron() -> TriMesh:
    v = np.array(
        [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.float64
    )
    f = [
        [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
        [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
    ]
    return _outward(TriMesh(v, f))


def icosahedron() -> TriMesh:
    """Regular icosahedron inscribed in the unit sphere."""
    p = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
            [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
            [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
        ],
        dtype=np.float64,
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    return _outward(TriMesh(v, f))


def icosphere(subdivisions: int) -> TriMesh:
    """Icosahedron split 1->4 ``subdivisions`` times, vertices pushed to the unit sphere."""
    base = icosahedron()
    if subdivisions == 0:
        return base
    fine = subdivide(base, subdivisions).fine_mesh()
    v = fine.vertices / np.linalg.norm(fine.vertices, axis=1, keepdims=True)
    return TriMesh(v, fine.faces)


def lattice_disk(radius: int) -> TriMesh:
    """Planar equilateral triangulation of all lattice points within hex distance ``radius``."""
    cells = [
        (i, j)
        for i in range(-radius, radius + 1)
        for j in range(-radius, radius + 1)
        if max(abs(i), abs(j), abs(i + j)) <= radius
    ]
    index = {c: k for k, c in enumerate(cells)}
    v = np.array([[i + j / 2.0, j * np.sqrt(3.0) / 2.0, 0.0] for i, j in cells])
    faces = []
    for i, j in cells:
        up = [(i, j), (i + 1, j), (i, j + 1)]
        down = [(i + 1, j), (i + 1, j + 1), (i, j + 1)]
        for tri in (up, down):
            if all(c in index for c in tri):
                faces.append([index[c] for c in tri])
    return TriMesh(v, faces)


def tube(radius: float = 0.3, length: float = 2.0, n_around: int = 24, n_along: int = 24) -> TriMesh:
    """Closed cylinder along +z from 0 to ``length`` with fan caps."""
    angles = 2.0 * np.pi * np.arange(n_around) / n_around
    z = np.linspace(0.0, length, n_along + 1)
    ring = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
    side = np.concatenate([np.column_stack([ring, np.full(n_around, zk)]) for zk in z])
    bottom, top = len(side), len(side) + 1
    v = np.vstack([side, [[0.0, 0.0, 0.0], [0.0, 0.0, length]]])

    def vid(k: int, m: int) -> int:
        return k * n_around + m % n_around

    faces = []
    for k in range(n_along):
        for m in range(n_around):
            faces.append([vid(k, m), vid(k, m + 1), vid(k + 1, m + 1)])
            faces.append([vid(k, m), vid(k + 1, m + 1), vid(k + 1, m)])
    for m in range(n_around):
        faces.append([bottom, vid(0, m + 1), vid(0, m)])
        faces.append([top, vid(n_along, m), vid(n_along, m + 1)])
    return _outward(TriMesh(v, faces))


def bend(points: np.ndarray, curvature: float) -> np.ndarray:
    """Bend the +z axis into a circular arc of the given curvature in the y-z plane.

    Arc length along the axis is preserved.
    """
    points = np.asarray(points, dtype=np.float64)
    if abs(curvature) < 1e-12:
        return points.copy()
    r = 1.0 / curvature
    theta = points[:, 2] * curvature
    out = points.copy()
    out[:, 1] = r - (r - points[:, 1]) * np.cos(theta)
    out[:, 2] = (r - points[:, 1]) * np.sin(theta)
    return out


def bent_cylinder_sequence(
    frames: int = 48, period: int = 16, max_curvature: float = 0.75, **tube_args
) -> list[TriMesh]:
    """Tube bending back and forth: curvature ``max_curvature * sin(2 pi t / period)``."""
    rest = tube(**tube_args)
    return [
        rest.with_vertices(bend(rest.vertices, max_curvature * np.sin(2.0 * np.pi * t / period)))
        for t in range(frames)
    ]


def torus_segment_sequence(
    frames: int = 48,
    period: int = 16,
    min_angle: float = np.pi / 2,
    max_angle: float = 3 * np.pi / 2,
    radius: float = 0.35,
    length: float = 3.0,
    n_around: int = 20,
    n_along: int = 30,
) -> list[TriMesh]:
    """Tube wrapped on a circle whose arc angle oscillates between the two bounds."""
    rest = tube(radius=radius, length=length, n_around=n_around, n_along=n_along)
    mid, amp = (max_angle + min_angle) / 2.0, (max_angle - min_angle) / 2.0
    out = []
    for t in range(frames):
        angle = mid + amp * np.sin(2.0 * np.pi * t / period)
        out.append(rest.with_vertices(bend(rest.vertices, angle / length)))
    return out


SEQUENCES = {
    "cylinder": bent_cylinder_sequence,
    "torus": torus_segment_sequence,
}


def write_sequence(meshes: list[TriMesh], out_dir: str | Path, stem: str = "frame") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return [save_mesh(m, out_dir / f"{stem}_{t:03d}.obj") for t, m in enumerate(meshes)]
