"""Data models for the semi-regular mesh autoencoder."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from errors import DegenerateMeshError, ShapeMismatchError


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangle surface mesh; faces are counterclockwise vertex-index triples."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise DegenerateMeshError(
                f"face index out of range (mesh has {len(v)} vertices)"
            )
        repeated = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        if np.any(repeated):
            bad = int(np.flatnonzero(repeated)[0])
            raise DegenerateMeshError(f"face {bad} repeats a vertex: {f[bad].tolist()}")
        v.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted (u, v) rows."""
        return np.unique(self._face_edges, axis=0) if self.n_faces else np.zeros((0, 2), np.int64)

    @cached_property
    def edge_face_counts(self) -> np.ndarray:
        """Number of faces adjacent to each row of ``edges``."""
        if not self.n_faces:
            return np.zeros(0, np.int64)
        _, counts = np.unique(self._face_edges, axis=0, return_counts=True)
        return counts

    @cached_property
    def _face_edges(self) -> np.ndarray:
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        return np.sort(e, axis=1)

    @property
    def triangles(self) -> np.ndarray:
        """Corner positions, shape (F, 3, 3)."""
        return self.vertices[self.faces]

    def with_vertices(self, vertices: np.ndarray) -> TriMesh:
        vertices = np.asarray(vertices, dtype=np.float64)
        if vertices.shape != self.vertices.shape:
            raise ShapeMismatchError(
                f"expected vertices of shape {self.vertices.shape}, got {vertices.shape}"
            )
        return TriMesh(vertices, self.faces)


@dataclass(frozen=True)
class UnitCubeTransform:
    """Uniform scale followed by a translation: ``p' = scale * p + translation``."""

    scale: float
    translation: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.scale + self.translation

    def invert(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.translation) / self.scale


@dataclass(frozen=True)
class TopologyReport:
    boundary_edges: int
    non_manifold_edges: int
    euler_characteristic: int

    @property
    def is_manifold(self) -> bool:
        return self.non_manifold_edges == 0

    def __str__(self) -> str:
        return (
            f"boundary edges {self.boundary_edges}, "
            f"non-manifold edges {self.non_manifold_edges}, "
            f"Euler characteristic {self.euler_characteristic}"
        )


@lru_cache(maxsize=None)
def lattice_triangles(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Lattice coordinates of the 1->4^L triangles of a face split into ``n`` per edge.

    Returns ``(i, j)`` index arrays of shape (n*n, 3); the corners of every
    small triangle are ``(i[t, c], j[t, c])`` in counterclockwise order.
    """
    tris = []
    for i in range(n):
        for j in range(n - i):
            tris.append(((i, j), (i + 1, j), (i, j + 1)))
            if i + j <= n - 2:
                tris.append(((i + 1, j), (i + 1, j + 1), (i, j + 1)))
    arr = np.array(tris, dtype=np.int64)
    return arr[:, :, 0], arr[:, :, 1]


@dataclass(frozen=True, eq=False)
class SemiRegularMesh:
    """Base mesh subdivided ``level`` times, with per-base-face vertex grids.

    ``patch_grids[f, i, j]`` is the fine vertex at barycentric lattice
    coordinates ``(i, j)`` of base face ``f = (v0, v1, v2)``, where ``(0, 0)``
    is ``v0``, ``(n, 0)`` is ``v1`` and ``(0, n)`` is ``v2``; entries with
    ``i + j > n`` are ``-1``. Fine vertex ``k < base.n_vertices`` is base
    vertex ``k``.
    """

    base: TriMesh
    level: int
    fine_positions: np.ndarray
    patch_grids: np.ndarray

    def __post_init__(self):
        pos = np.array(self.fine_positions, dtype=np.float64).reshape(-1, 3)
        grids = np.asarray(self.patch_grids, dtype=np.int64)
        n = 2**self.level
        if self.level < 1:
            raise ShapeMismatchError(f"level must be >= 1, got {self.level}")
        if grids.shape != (self.base.n_faces, n + 1, n + 1):
            raise ShapeMismatchError(
                f"patch grids of shape {grids.shape} do not match "
                f"{self.base.n_faces} base faces at level {self.level}"
            )
        object.__setattr__(self, "fine_positions", pos)
        object.__setattr__(self, "patch_grids", grids)

    @property
    def resolution(self) -> int:
        return 2**self.level

    @property
    def n_vertices(self) -> int:
        return len(self.fine_positions)

    @cached_property
    def fine_faces(self) -> np.ndarray:
        ti, tj = lattice_triangles(self.resolution)
        return self.patch_grids[:, ti, tj].reshape(-1, 3)

    def fine_mesh(self) -> TriMesh:
        return TriMesh(self.fine_positions, self.fine_faces)

    def with_positions(self, positions: np.ndarray) -> SemiRegularMesh:
        """Same connectivity, new fine positions; base vertices follow their fine copies."""
        positions = np.asarray(positions, dtype=np.float64)
        if positions.shape != self.fine_positions.shape:
            raise ShapeMismatchError(
                f"expected positions of shape {self.fine_positions.shape}, got {positions.shape}"
            )
        base = TriMesh(positions[: self.base.n_vertices], self.base.faces)
        return SemiRegularMesh(base, self.level, positions, self.patch_grids)


@dataclass(frozen=True, eq=False)
class BarycentricParam:
    """Per fine vertex: a template face and barycentric weights on it."""

    face_ids: np.ndarray
    bary: np.ndarray
    template_faces: np.ndarray
    template_vertex_count: int


@dataclass
class FitConfig:
    samples: int = 5000
    steps: int = 2000
    lr: float = 1.0
    momentum: float = 0.9
    w_chamfer: float = 1.0
    w_edge: float = 1.0
    w_normal: float = 0.01
    w_laplacian: float = 0.1
    seed: int = 0
    resample: bool = True
    eval_samples: int = 50000


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 100
    lr: float = 0.001
    augment: bool = True
    seed: int = 0
    train_fraction: float = 0.75


@dataclass
class PipelineConfig:
    target_base_faces: int = 110
    level: int = 3
    pad_width: int = 2
    lambda_edge: float = 1e-3
    seed: int = 0
    fit: FitConfig = field(default_factory=FitConfig)
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass
class EmbeddingMatrix:
    """Per-timestep concatenated patch latents and their PCA projection."""

    latents: np.ndarray
    projection: np.ndarray
    explained_variance_ratio: np.ndarray
    patch_count: int
    latent_dim: int = 8

    @property
    def n_timesteps(self) -> int:
        return len(self.latents)


@dataclass
class Reconstruction:
    """Decoded frame: mesh in input coordinates plus errors on normalized coordinates."""

    mesh: TriMesh
    vertex_errors: np.ndarray
    face_errors: np.ndarray
    mse: float


@dataclass
class ClassScore:
    name: str
    vertices: int
    frames: int
    mse_mean: float
    mse_std: float
