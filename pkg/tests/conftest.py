from __future__ import annotations

import numpy as np
import pytest

from models import TriMesh
from remesh import subdivide
from shapes import icosahedron, octahedron, tetrahedron


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tetra():
    return tetrahedron()


@pytest.fixture
def octa():
    return octahedron()


@pytest.fixture
def ico():
    return icosahedron()


@pytest.fixture
def single_triangle():
    return TriMesh([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], [[0, 1, 2]])


@pytest.fixture
def ico_sr(ico):
    return subdivide(ico, 3)


@pytest.fixture
def octa_sr(octa):
    return subdivide(octa, 3)


@pytest.fixture
def write_file(tmp_path):
    def _write(name: str, text: str):
        path = tmp_path / name
        path.write_text(text)
        return path

    return _write
