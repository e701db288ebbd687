"""Mesh and semi-regular mesh file I/O."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from errors import MeshFormatError
from formats import get_format
from models import SemiRegularMesh, TriMesh

SRM_VERSION = 1


def load_mesh(path: str | Path) -> TriMesh:
    """Read an OBJ or OFF triangle mesh."""
    return get_format(path).read(path)


def save_mesh(mesh: TriMesh, path: str | Path) -> Path:
    """Write a mesh; vertices are stored with 6 decimals."""
    return get_format(path).write(mesh, path)


def save_srm(sr: SemiRegularMesh, path: str | Path) -> Path:
    """Write a semi-regular mesh as a ``.srm`` JSON document."""
    path = Path(path)
    n = sr.resolution
    rows = [
        [grid[i, : n + 1 - i].tolist() for i in range(n + 1)]
        for grid in sr.patch_grids
    ]
    data = {
        "version": SRM_VERSION,
        "level": sr.level,
        "base_vertices": sr.base.vertices.tolist(),
        "base_faces": sr.base.faces.tolist(),
        "fine_positions": sr.fine_positions.tolist(),
        "patch_grids": rows,
    }
    with open(path, "w") as f:
        json.dump(data, f)
    return path


def load_srm(path: str | Path) -> SemiRegularMesh:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Semi-regular mesh not found: {path}")

    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise MeshFormatError(f"invalid JSON: {e.msg}", str(path), e.lineno) from None

    missing = {"version", "level", "base_vertices", "base_faces", "fine_positions", "patch_grids"} - set(data)
    if missing:
        raise MeshFormatError(f"missing fields: {', '.join(sorted(missing))}", str(path))
    if data["version"] != SRM_VERSION:
        raise MeshFormatError(f"unsupported .srm version {data['version']}", str(path))

    level = int(data["level"])
    n = 2**level
    base = TriMesh(np.array(data["base_vertices"]), np.array(data["base_faces"]))
    if len(data["patch_grids"]) != base.n_faces:
        raise MeshFormatError(
            f"{len(data['patch_grids'])} patch grids for {base.n_faces} base faces", str(path)
        )
    grids = np.full((base.n_faces, n + 1, n + 1), -1, dtype=np.int64)
    for f, rows in enumerate(data["patch_grids"]):
        if len(rows) != n + 1:
            raise MeshFormatError(f"patch grid {f} has {len(rows)} rows, expected {n + 1}", str(path))
        for i, row in enumerate(rows):
            if len(row) != n + 1 - i:
                raise MeshFormatError(f"patch grid {f} row {i} has wrong length", str(path))
            grids[f, i, : n + 1 - i] = row
    return SemiRegularMesh(base, level, np.array(data["fine_positions"]), grids)
