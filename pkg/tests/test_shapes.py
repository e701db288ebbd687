from __future__ import annotations

import numpy as np
import pytest

from geometry import topology_report
from mesh_io import load_mesh
from shapes import (
    bend,
    bent_cylinder_sequence,
    icosahedron,
    icosphere,
    signed_volume,
    torus_segment_sequence,
    tube,
    write_sequence,
)


@pytest.mark.parametrize("mesh", [icosahedron(), icosphere(2), tube()], ids=["ico", "icosphere", "tube"])
def test_solids_are_closed_and_outward(mesh):
    report = topology_report(mesh)
    assert report.boundary_edges == 0
    assert report.non_manifold_edges == 0
    assert report.euler_characteristic == 2
    assert signed_volume(mesh) > 0


def test_icosphere_on_unit_sphere():
    mesh = icosphere(3)
    assert mesh.n_faces == 1280
    np.testing.assert_allclose(np.linalg.norm(mesh.vertices, axis=1), 1.0)


def test_bend_keeps_arc_length():
    z = np.linspace(0.0, 2.0, 50)
    axis = np.column_stack([np.zeros(50), np.zeros(50), z])
    bent = bend(axis, 0.75)
    steps = np.linalg.norm(np.diff(bent, axis=0), axis=1)
    assert steps.sum() == pytest.approx(2.0, rel=1e-3)
    np.testing.assert_array_equal(bend(axis, 0.0), axis)


@pytest.mark.parametrize("make", [bent_cylinder_sequence, torus_segment_sequence])
def test_sequences_share_topology(make):
    frames = make(frames=5, period=4)
    assert len(frames) == 5
    for frame in frames[1:]:
        np.testing.assert_array_equal(frame.faces, frames[0].faces)
    assert not np.allclose(frames[1].vertices, frames[0].vertices)
    assert all(topology_report(f).is_manifold for f in frames)


def test_sequence_is_periodic():
    frames = bent_cylinder_sequence(frames=9, period=4)
    np.testing.assert_allclose(frames[8].vertices, frames[0].vertices, atol=1e-12)


def test_write_sequence(tmp_path):
    paths = write_sequence(bent_cylinder_sequence(frames=2), tmp_path / "cyl")
    assert [p.name for p in paths] == ["frame_000.obj", "frame_001.obj"]
    assert load_mesh(paths[1]).n_faces == tube().n_faces
