"""Mesh file format factory."""

from __future__ import annotations

from pathlib import Path

from formats.base import MeshFormat
from formats.obj import ObjFormat
from formats.off import OffFormat

FORMATS: tuple[MeshFormat, ...] = (ObjFormat(), OffFormat())


def get_format(path: str | Path) -> MeshFormat:
    """Pick a reader/writer by file suffix."""
    suffix = Path(path).suffix.lower()
    for fmt in FORMATS:
        if suffix in fmt.suffixes:
            return fmt
    known = ", ".join(f"{fmt.name} ({', '.join(fmt.suffixes)})" for fmt in FORMATS)
    raise ValueError(f"Unknown mesh format: {suffix or path}. Use: {known}")
