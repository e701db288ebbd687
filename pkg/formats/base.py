"""Abstract mesh file format with shared validation and writing."""

from __future__ import annotations

from abc import ABC, abstractmethod
from pathlib import Path
from typing import Iterable

import numpy as np

from errors import DegenerateMeshError, MeshFormatError
from models import TriMesh


class MeshFormat(ABC):
    """Base class for triangle mesh readers/writers."""

    @property
    @abstractmethod
    def name(self) -> str: ...

    @property
    @abstractmethod
    def suffixes(self) -> tuple[str, ...]: ...

    @abstractmethod
    def _parse(
        self, lines: Iterable[str], path: str
    ) -> tuple[list[list[float]], list[list[int]]]:
        """Return vertex rows and 0-based face rows from the file's lines."""
        ...

    @abstractmethod
    def _format(self, mesh: TriMesh) -> str:
        """Serialize a mesh to the file's text."""
        ...

    def read(self, path: str | Path) -> TriMesh:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Mesh not found: {path}")

        with open(path) as f:
            vertices, faces = self._parse(f, str(path))

        if not vertices:
            raise MeshFormatError("no vertices", path=str(path))
        return TriMesh(np.array(vertices, dtype=np.float64), np.array(faces, dtype=np.int64).reshape(-1, 3))

    def write(self, mesh: TriMesh, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self._format(mesh))
        return path


def check_triangle(face: list[int], n_vertices: int, path: str, line: int) -> list[int]:
    """Validate one 0-based face record."""
    if len(face) != 3:
        raise MeshFormatError(f"non-triangular face with {len(face)} vertices", path, line)
    for idx in face:
        if idx < 0 or idx >= n_vertices:
            raise MeshFormatError(f"face index {idx + 1} out of range", path, line)
    if len(set(face)) != 3:
        raise DegenerateMeshError("degenerate face repeats a vertex", path, line)
    return face


def format_vertex(prefix: str, p: np.ndarray) -> str:
    return f"{prefix}{p[0]:.6f} {p[1]:.6f} {p[2]:.6f}"
