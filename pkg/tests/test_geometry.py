from __future__ import annotations

import numpy as np
import pytest

from errors import DegenerateMeshError
from geometry import (
    closest_point_on_triangle,
    closest_points,
    face_normals_areas,
    normalize_unit_cube,
    one_ring,
    r_ring,
    sample_surface,
    topology_report,
    vertex_degree,
)
from models import TriMesh
from shapes import icosphere, lattice_disk


def test_one_ring_closed_fan_is_counterclockwise(octa):
    assert one_ring(octa, 4) == [0, 2, 1, 3]
    assert vertex_degree(octa, 4) == 4


def test_one_ring_boundary_vertex_starts_at_boundary(single_triangle):
    assert one_ring(single_triangle, 0) == [1, 2]


def test_r_ring_on_icosahedron(ico):
    assert r_ring(ico, 0, 0) == {0}
    assert len(r_ring(ico, 0, 1)) == 6
    # every vertex but the antipode is within two edges
    assert len(r_ring(ico, 0, 2)) == 11


def test_topology_report():
    report = topology_report(icosphere(2))
    assert report.boundary_edges == 0
    assert report.non_manifold_edges == 0
    assert report.euler_characteristic == 2
    assert report.is_manifold


def test_topology_report_counts_boundary_and_non_manifold(single_triangle):
    assert topology_report(single_triangle).boundary_edges == 3
    fan = TriMesh(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]],
        [[0, 1, 2], [1, 0, 3], [0, 1, 4]],
    )
    assert topology_report(fan).non_manifold_edges == 1


def test_normalize_unit_cube_keeps_aspect():
    mesh = TriMesh([[0, 0, 0], [4, 0, 0], [0, 2, 0], [0, 0, 1]], [[0, 1, 2], [0, 2, 3]])
    normalized, transform = normalize_unit_cube(mesh)
    lo, hi = normalized.vertices.min(axis=0), normalized.vertices.max(axis=0)
    np.testing.assert_allclose(hi - lo, [2.0, 1.0, 0.5])
    np.testing.assert_allclose((hi + lo) / 2, 0.0, atol=1e-15)
    np.testing.assert_allclose(transform.invert(normalized.vertices), mesh.vertices)


def test_normalize_zero_extent():
    mesh = TriMesh([[1, 1, 1]] * 3, [[0, 1, 2]])
    with pytest.raises(DegenerateMeshError):
        normalize_unit_cube(mesh)


def test_sample_surface_on_planar_triangle(single_triangle):
    pts = sample_surface(single_triangle, 500, seed=3)
    assert pts.shape == (500, 3)
    assert np.all(pts[:, 2] == 0)
    assert np.all(pts[:, :2] >= -1e-15)
    assert np.all(pts[:, 0] + pts[:, 1] <= 1 + 1e-12)
    np.testing.assert_array_equal(pts, sample_surface(single_triangle, 500, seed=3))


def test_closest_point_on_triangle_regions():
    tri = np.array([[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]])
    tris = np.repeat(tri, 4, axis=0)
    p = np.array([[0.2, 0.2, 1.0], [-1.0, -1.0, 0.0], [0.5, -2.0, 0.0], [1.0, 1.0, 0.0]])
    q, bary = closest_point_on_triangle(p, tris)
    np.testing.assert_allclose(q, [[0.2, 0.2, 0.0], [0, 0, 0], [0.5, 0, 0], [0.5, 0.5, 0]], atol=1e-12)
    np.testing.assert_allclose(bary.sum(axis=1), 1.0)


def test_closest_points_matches_brute_force(rng):
    mesh = icosphere(1)
    points = rng.normal(size=(200, 3)) * 0.8
    face_ids, bary, closest = closest_points(mesh, points)

    n_faces = mesh.n_faces
    pi = np.repeat(np.arange(len(points)), n_faces)
    q, _ = closest_point_on_triangle(points[pi], np.tile(mesh.triangles, (len(points), 1, 1)))
    brute = np.linalg.norm(points[pi] - q, axis=1).reshape(len(points), n_faces).min(axis=1)

    np.testing.assert_allclose(np.linalg.norm(points - closest, axis=1), brute, atol=1e-12)
    np.testing.assert_allclose(
        np.einsum("nk,nkd->nd", bary, mesh.triangles[face_ids]), closest, atol=1e-12
    )


def test_r_ring_of_regular_vertex():
    disk = lattice_disk(4)
    center = int(np.argmin(np.linalg.norm(disk.vertices, axis=1)))
    assert vertex_degree(disk, center) == 6
    assert len(r_ring(disk, center, 1) - {center}) == 6
    assert len(r_ring(disk, center, 2) - {center}) == 18


def test_right_triangle_normal_and_area(single_triangle):
    normals, areas = face_normals_areas(single_triangle)
    np.testing.assert_allclose(areas, [0.5])
    np.testing.assert_allclose(normals, [[0.0, 0.0, 1.0]])
    flipped, _ = face_normals_areas(TriMesh(single_triangle.vertices, single_triangle.faces[:, ::-1]))
    np.testing.assert_allclose(flipped, [[0.0, 0.0, -1.0]])


def test_sampling_is_area_weighted():
    # areas 1 and 3, far apart along x
    mesh = TriMesh(
        [[0, 0, 0], [2, 0, 0], [0, 1, 0], [10, 0, 0], [16, 0, 0], [10, 1, 0]],
        [[0, 1, 2], [3, 4, 5]],
    )
    points = sample_surface(mesh, 100_000, seed=0)
    assert np.mean(points[:, 0] > 5.0) == pytest.approx(0.75, abs=0.01)


def test_flipping_faces_reverses_one_ring():
    mesh = icosphere(1)
    flipped = TriMesh(mesh.vertices, mesh.faces[:, ::-1])
    for v in range(mesh.n_vertices):
        ring = one_ring(mesh, v)
        reversed_ring = one_ring(flipped, v)
        k = reversed_ring.index(ring[0])
        assert reversed_ring[k:] + reversed_ring[:k] == [ring[0]] + ring[:0:-1]
