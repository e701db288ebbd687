"""Object File Format (OFF) reader/writer."""

from __future__ import annotations

from typing import Iterable

from errors import MeshFormatError
from formats.base import MeshFormat, check_triangle, format_vertex
from models import TriMesh


class OffFormat(MeshFormat):

    @property
    def name(self) -> str:
        return "off"

    @property
    def suffixes(self) -> tuple[str, ...]:
        return (".off",)

    def _parse(self, lines: Iterable[str], path: str):
        records = []
        for lineno, line in enumerate(lines, 1):
            strip = line.split("#", 1)[0].strip()
            if strip:
                records.append((lineno, strip))

        if not records or not records[0][1].startswith("OFF"):
            raise MeshFormatError("missing OFF header", path, records[0][0] if records else 1)

        # "OFF 12 20 30" puts the counts on the header line
        header = records[0][1][3:].split()
        rest = records[1:]
        if not header:
            if not rest:
                raise MeshFormatError("missing element counts", path, records[0][0])
            count_line, counts = rest[0][0], rest[0][1].split()
            rest = rest[1:]
        else:
            count_line, counts = records[0][0], header
        try:
            n_vertices, n_faces = int(counts[0]), int(counts[1])
        except (ValueError, IndexError):
            raise MeshFormatError("bad element counts", path, count_line) from None

        if len(rest) < n_vertices + n_faces:
            line = rest[-1][0] if rest else count_line
            raise MeshFormatError(
                f"expected {n_vertices} vertices and {n_faces} faces, file ends early",
                path,
                line,
            )

        vertices = []
        for lineno, text in rest[:n_vertices]:
            try:
                vertices.append([float(x) for x in text.split()[:3]])
            except ValueError:
                raise MeshFormatError(f"bad vertex record: {text!r}", path, lineno) from None
            if len(vertices[-1]) != 3:
                raise MeshFormatError("vertex needs 3 coordinates", path, lineno)

        faces = []
        for lineno, text in rest[n_vertices : n_vertices + n_faces]:
            try:
                items = [int(x) for x in text.split()]
            except ValueError:
                # trailing float colors
                items = [int(float(x)) for x in text.split()]
            k = items[0]
            faces.append(check_triangle(items[1 : 1 + k], n_vertices, path, lineno))
        return vertices, faces

    def _format(self, mesh: TriMesh) -> str:
        lines = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} {len(mesh.edges)}"]
        lines.extend(format_vertex("", p) for p in mesh.vertices)
        lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.faces)
        return "\n".join(lines) + "\n"
