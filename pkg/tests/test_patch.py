from __future__ import annotations

import numpy as np
import pytest
from scipy.spatial import cKDTree

from errors import LayoutError, MeshFormatError
from patch import (
    COPY,
    HEX_DIRECTIONS,
    INTERPOLATE,
    REPLICATE,
    assemble_positions,
    build_layout,
    extract_patch_array,
    extract_patches,
    hex_norm,
    patch_shape,
    read_patch_dataset,
    ring_offsets,
    rotate_features,
    rotate_patch,
    stack_patches,
    valid_cell_count,
    write_patch_dataset,
)
from remesh import subdivide
from shapes import lattice_disk


def bfs_cell_count(level, pad_width):
    n = 2**level
    frontier = {(i, j) for i in range(n + 1) for j in range(n + 1 - i)}
    seen = set(frontier)
    for _ in range(pad_width):
        frontier = {(i + di, j + dj) for i, j in frontier for di, dj in HEX_DIRECTIONS} - seen
        seen |= frontier
    return len(seen)


# -- lattice shape ---------------------------------------------------------------


@pytest.mark.parametrize("level", [1, 2, 3, 4])
@pytest.mark.parametrize("pad_width", [0, 1, 2])
def test_valid_cell_count_matches_flood_fill(level, pad_width):
    expected = bfs_cell_count(level, pad_width)
    assert valid_cell_count(level, pad_width) == expected
    assert patch_shape(level, pad_width).n_valid == expected


def test_known_cell_counts():
    assert patch_shape(3, 2).n_valid == 111
    assert patch_shape(2, 1).n_valid == 33
    assert patch_shape(1, 0).n_valid == 6
    assert patch_shape(3, 2).n_interior == 45


def test_ring_offsets_walk_counterclockwise():
    assert ring_offsets(0) == ((0, 0),)
    assert ring_offsets(1) == HEX_DIRECTIONS
    ring2 = ring_offsets(2)
    assert len(ring2) == 12
    assert ring2[0] == (2, 0)
    assert all(hex_norm(i, j) == 2 for i, j in ring2)
    assert len(set(ring2)) == 12


def test_storage_round_trip_keeps_invalid_cells_zero(rng):
    shape = patch_shape(2, 1)
    compact = rng.normal(size=(4, shape.n_valid, 3))
    storage = shape.to_storage(compact)
    assert storage.shape == (4, shape.side, shape.side, 3)
    assert np.all(storage[:, ~shape.valid_mask] == 0)
    np.testing.assert_array_equal(shape.from_storage(storage), compact)


def test_coarser_shape():
    assert patch_shape(3, 2).coarser() == patch_shape(2, 1)
    assert patch_shape(1, 0).coarser() == patch_shape(0, 0)


# -- layout ---------------------------------------------------------------------------


def test_icosahedron_layout_interpolates_degree_five_corners(ico_sr):
    layout = build_layout(ico_sr, 2)
    assert layout.kinds.shape == (20, 111)
    counts = layout.counts()
    assert counts["replicate"] == 0
    # three cells per degree-5 corner, three corners per patch
    assert counts["interpolate"] == 20 * 9
    assert np.all(layout.sources[layout.kinds != INTERPOLATE] >= 0)


def test_octahedron_layout_interpolates_more(octa_sr):
    layout = build_layout(octa_sr, 2)
    assert layout.counts()["interpolate"] == 8 * 18
    assert layout.fill_matrix.shape == (8 * 111, octa_sr.n_vertices)
    # interpolated cells are convex combinations
    np.testing.assert_allclose(np.asarray(layout.fill_matrix.sum(axis=1)).ravel(), 1.0)


def test_single_triangle_replicates_ring(single_triangle):
    sr = subdivide(single_triangle, 2)
    layout = build_layout(sr, 1)
    shape = layout.shape
    assert np.all(layout.kinds[0, shape.interior] == COPY)
    assert np.all(layout.kinds[0, ~shape.interior] == REPLICATE)
    assert np.sum(layout.kinds == REPLICATE) == 18
    ring = np.flatnonzero(~shape.interior)
    np.testing.assert_array_equal(
        layout.sources[0, ring], layout.sources[0, shape.nearest_interior[ring]]
    )


def test_flat_lattice_patch_continues_the_plane():
    disk = lattice_disk(3)
    centroids = disk.triangles.mean(axis=1)
    f = int(np.argmin(np.linalg.norm(centroids, axis=1)))
    sr = subdivide(disk, 2)
    layout = build_layout(sr, 2)
    assert np.all(layout.kinds[f] == COPY)

    shape = layout.shape
    cells, means = extract_patch_array(layout, sr.fine_positions)
    v0, v1, v2 = disk.triangles[f]
    i, j = shape.coords[:, 0:1], shape.coords[:, 1:2]
    expected = v0 + i / shape.n * (v1 - v0) + j / shape.n * (v2 - v0)
    np.testing.assert_allclose(cells[f] + means[f], expected, atol=1e-12)


def test_boundary_corners_copy_every_cell_inside_a_flat_disk():
    # on a convex planar lattice a padding cell lies inside the mesh exactly
    # when its plane position is a fine vertex; those must be copied
    disk = lattice_disk(2)
    sr = subdivide(disk, 2)
    layout = build_layout(sr, 2)
    shape = layout.shape
    tree = cKDTree(sr.fine_positions)
    i, j = shape.coords[:, 0:1], shape.coords[:, 1:2]
    weights = np.stack([shape.n - i[:, 0] - j[:, 0], i[:, 0], j[:, 0]], axis=1)
    corner = np.argmax(weights, axis=1)
    beyond_corner = weights.max(axis=1) > shape.n
    on_rim = np.linalg.norm(disk.vertices, axis=1) > 1.5

    rim_corner_copies = 0
    for f, (v0, v1, v2) in enumerate(disk.triangles):
        expected = v0 + i / shape.n * (v1 - v0) + j / shape.n * (v2 - v0)
        dist, _ = tree.query(expected)
        inside = dist < 1e-9
        kinds = layout.kinds[f]
        assert not np.any(kinds == INTERPOLATE)
        np.testing.assert_array_equal(kinds == COPY, inside)
        np.testing.assert_allclose(
            sr.fine_positions[layout.sources[f, inside]], expected[inside], atol=1e-12
        )
        rim_corner = beyond_corner & on_rim[disk.faces[f][corner]]
        rim_corner_copies += int(np.sum(inside & rim_corner))
    assert rim_corner_copies > 0


def test_pad_width_limit(octa):
    sr = subdivide(octa, 2)
    with pytest.raises(LayoutError, match="too large"):
        build_layout(sr, 3)
    layout = build_layout(sr, 0)
    assert layout.kinds.shape == (8, 15)
    assert np.all(layout.kinds == COPY)


# -- extraction and assembly ----------------------------------------------------------


def test_patch_interiors_have_zero_mean(ico_sr):
    grids = extract_patches(ico_sr, build_layout(ico_sr, 2))
    assert len(grids) == 20
    for grid in grids:
        compact = grid.compact()
        np.testing.assert_allclose(compact[grid.shape.interior].mean(axis=0), 0.0, atol=1e-12)
        assert np.all(grid.features[~grid.valid_mask] == 0)


def test_extract_then_assemble_is_identity(ico_sr):
    layout = build_layout(ico_sr, 2)
    cells, means = extract_patch_array(layout, ico_sr.fine_positions)
    np.testing.assert_allclose(assemble_positions(layout, cells, means), ico_sr.fine_positions, atol=1e-12)
    grids = extract_patches(ico_sr, layout)
    np.testing.assert_allclose(assemble_positions(layout, grids), ico_sr.fine_positions, atol=1e-12)


def test_assemble_rejects_wrong_patch_count(ico_sr):
    layout = build_layout(ico_sr, 2)
    with pytest.raises(LayoutError):
        assemble_positions(layout, np.zeros((3, 111, 3)), np.zeros((3, 3)))


# -- rotation -----------------------------------------------------------------------------


def test_three_rotations_are_identity(rng):
    shape = patch_shape(3, 2)
    x = rng.normal(size=(2, shape.n_valid, 3))
    once = rotate_features(x, shape, 1)
    assert not np.allclose(once, x)
    np.testing.assert_array_equal(rotate_features(rotate_features(once, shape, 1), shape, 1), x)
    np.testing.assert_array_equal(rotate_features(x, shape, 2), rotate_features(once, shape, 1))


def test_rotation_keeps_interior_and_mean(ico_sr):
    grid = extract_patches(ico_sr, build_layout(ico_sr, 2))[0]
    rotated = rotate_patch(grid, 1)
    shape = grid.shape
    flag = shape.interior[:, None].astype(float)
    np.testing.assert_array_equal(rotate_features(flag, shape, 1), flag)
    np.testing.assert_allclose(rotated.compact()[shape.interior].mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_array_equal(rotated.patch_mean, grid.patch_mean)


def test_rotation_cycles_corners():
    shape = patch_shape(2, 1)
    n = shape.n
    x = np.zeros((shape.n_valid, 1))
    x[shape.cell(0, 0)] = 1.0
    rotated = rotate_features(x, shape, 1)
    # (i, j) -> (n - i - j, i) sends corner v0 to v1
    assert rotated[shape.cell(n, 0), 0] == 1.0


# -- dataset container ----------------------------------------------------------------------


def test_dataset_write_read(tmp_path, octa):
    sr = subdivide(octa, 2)
    grids = extract_patches(sr, build_layout(sr, 1))
    path = write_patch_dataset(tmp_path / "octa.patches", grids)
    back = read_patch_dataset(path)
    assert len(back) == 8
    assert [g.base_face_id for g in back] == list(range(8))
    np.testing.assert_array_equal(stack_patches(back), stack_patches(grids).astype(np.float32))
    np.testing.assert_array_equal(back[3].patch_mean, grids[3].patch_mean)


def test_dataset_corruption(tmp_path, octa):
    sr = subdivide(octa, 2)
    path = write_patch_dataset(tmp_path / "octa.patches", extract_patches(sr, build_layout(sr, 1)))
    raw = path.read_bytes()

    path.write_bytes(raw[:-10])
    with pytest.raises(MeshFormatError, match="feature block"):
        read_patch_dataset(path)

    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(MeshFormatError, match="not a patch dataset"):
        read_patch_dataset(path)
