"""Wavefront OBJ reader/writer (``v`` and ``f`` records only)."""

from __future__ import annotations

from typing import Iterable

from errors import MeshFormatError
from formats.base import MeshFormat, check_triangle, format_vertex
from models import TriMesh


class ObjFormat(MeshFormat):

    @property
    def name(self) -> str:
        return "obj"

    @property
    def suffixes(self) -> tuple[str, ...]:
        return (".obj",)

    def _parse(self, lines: Iterable[str], path: str):
        vertices: list[list[float]] = []
        faces: list[list[int]] = []
        # Faces are validated after all vertices are known; OBJ allows forward refs.
        pending: list[tuple[int, list[int]]] = []

        for lineno, line in enumerate(lines, 1):
            strip = line.strip()
            if not strip or strip[0] == "#":
                continue
            split = strip.split()

            if split[0] == "v":
                if len(split) < 4:
                    raise MeshFormatError("vertex needs 3 coordinates", path, lineno)
                try:
                    vertices.append([float(x) for x in split[1:4]])
                except ValueError:
                    raise MeshFormatError(f"bad vertex record: {strip!r}", path, lineno) from None
            elif split[0] == "f":
                try:
                    # "f 1/2/3 4//5 6": keep the position index
                    refs = [int(item.split("/")[0]) for item in split[1:]]
                except ValueError:
                    raise MeshFormatError(f"bad face record: {strip!r}", path, lineno) from None
                pending.append((lineno, refs))
            # normals, texture coordinates, groups, materials: ignored

        n = len(vertices)
        for lineno, refs in pending:
            face = [r - 1 if r > 0 else n + r for r in refs]
            faces.append(check_triangle(face, n, path, lineno))
        return vertices, faces

    def _format(self, mesh: TriMesh) -> str:
        lines = [format_vertex("v ", p) for p in mesh.vertices]
        lines.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces)
        return "\n".join(lines) + "\n"
