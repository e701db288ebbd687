"""Regional patches: padded hexagonal lattices cut from a semi-regular mesh.

A patch of level ``l`` and pad width ``w`` lives on a square axial array of
side ``2^l + 1 + 2w``. Cell ``(i, j)`` has barycentric weights
``(n - i - j, i, j)`` on the base face corners ``(v0, v1, v2)``; it is valid
when its hex distance to the triangle is at most ``w`` and interior when all
three weights are non-negative.
"""

from __future__ import annotations

import base64
import json
import logging
import struct
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
from scipy import sparse

from errors import LayoutError, MeshFormatError, ShapeMismatchError
from models import SemiRegularMesh

logger = logging.getLogger(__name__)

# counterclockwise in the embedding (i + j/2, j*sqrt(3)/2)
HEX_DIRECTIONS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))

COPY, INTERPOLATE, REPLICATE = 0, 1, 2

MAX_INTERPOLATION_SWEEPS = 10

DATASET_MAGIC = b"SRPD"
DATASET_VERSION = 1


@lru_cache(maxsize=None)
def ring_offsets(r: int) -> tuple[tuple[int, int], ...]:
    """Axial offsets at hex distance ``r``, starting at ``(r, 0)`` and turning counterclockwise."""
    if r == 0:
        return ((0, 0),)
    out = []
    i, j = r, 0
    for di, dj in HEX_DIRECTIONS[2:] + HEX_DIRECTIONS[:2]:
        for _ in range(r):
            out.append((i, j))
            i, j = i + di, j + dj
    return tuple(out)


def hex_norm(i: int, j: int) -> int:
    return max(abs(i), abs(j), abs(i + j))


def triangle_distance(i, j, n):
    """Hex distance from cell ``(i, j)`` to the lattice triangle of side ``n``."""
    c = n - np.asarray(i) - np.asarray(j)
    return np.maximum(0, -np.asarray(i)) + np.maximum(0, -np.asarray(j)) + np.maximum(0, -c)


def valid_cell_count(level: int, pad_width: int) -> int:
    n = 2**level
    m = n + 1
    return m * (m + 1) // 2 + sum(3 * (n + 2 * k) for k in range(1, pad_width + 1))


@dataclass(frozen=True)
class PatchShape:
    """Cell bookkeeping for one ``(level, pad_width)`` lattice.

    Valid cells are numbered in row-major storage order; this compact order
    is what the network layers work on.
    """

    level: int
    pad_width: int

    @property
    def n(self) -> int:
        return 2**self.level

    @property
    def side(self) -> int:
        return self.n + 1 + 2 * self.pad_width

    @cached_property
    def valid_mask(self) -> np.ndarray:
        w = self.pad_width
        i, j = np.meshgrid(np.arange(-w, self.n + w + 1), np.arange(-w, self.n + w + 1), indexing="ij")
        return triangle_distance(i, j, self.n) <= w

    @cached_property
    def coords(self) -> np.ndarray:
        """Axial ``(i, j)`` of every valid cell, shape (n_valid, 2)."""
        si, sj = np.nonzero(self.valid_mask)
        return np.stack([si - self.pad_width, sj - self.pad_width], axis=1)

    @cached_property
    def storage_index(self) -> np.ndarray:
        si, sj = np.nonzero(self.valid_mask)
        return si * self.side + sj

    @cached_property
    def index(self) -> np.ndarray:
        """Compact index of each storage cell, ``-1`` where invalid."""
        idx = np.full((self.side, self.side), -1, dtype=np.int64)
        idx[self.valid_mask] = np.arange(self.n_valid)
        return idx

    @property
    def n_valid(self) -> int:
        return int(self.valid_mask.sum())

    @cached_property
    def interior(self) -> np.ndarray:
        i, j = self.coords[:, 0], self.coords[:, 1]
        return (i >= 0) & (j >= 0) & (i + j <= self.n)

    @cached_property
    def interior_mask(self) -> np.ndarray:
        return self.to_storage(self.interior[:, None].astype(np.float64))[..., 0] > 0

    @property
    def n_interior(self) -> int:
        return int(self.interior.sum())

    def cell(self, i: int, j: int) -> int:
        """Compact index of ``(i, j)``, or ``-1`` outside the padded patch."""
        w = self.pad_width
        if not (-w <= i <= self.n + w and -w <= j <= self.n + w):
            return -1
        return int(self.index[i + w, j + w])

    def neighbor_table(self, offsets) -> np.ndarray:
        """Compact index of ``cell + offset`` per cell and offset; ``n_valid`` where missing."""
        table = np.full((self.n_valid, len(offsets)), self.n_valid, dtype=np.int64)
        for t, (di, dj) in enumerate(offsets):
            for c, (i, j) in enumerate(self.coords.tolist()):
                k = self.cell(i + di, j + dj)
                if k >= 0:
                    table[c, t] = k
        return table

    @cached_property
    def nearest_interior(self) -> np.ndarray:
        """For every cell, the closest interior cell in the planar embedding; ties to the lowest index."""
        inner = np.flatnonzero(self.interior)
        d = self.coords[:, None, :] - self.coords[None, inner, :]
        # squared euclidean distance of the embedding, scaled to integers
        d2 = d[..., 0] ** 2 + d[..., 0] * d[..., 1] + d[..., 1] ** 2
        return inner[np.argmin(d2, axis=1)]

    def rotation_source(self, k: int) -> np.ndarray:
        """``out = x[..., src, :]`` rotates compact features ``k`` times by 120 degrees."""
        k %= 3
        i, j = self.coords[:, 0].copy(), self.coords[:, 1].copy()
        for _ in range(k):
            i, j = self.n - i - j, i
        dest = self.index[i + self.pad_width, j + self.pad_width]
        src = np.empty_like(dest)
        src[dest] = np.arange(self.n_valid)
        return src

    def coarser(self) -> PatchShape:
        if self.level < 1:
            raise ShapeMismatchError("cannot pool a level-0 patch")
        return patch_shape(self.level - 1, max(self.pad_width - 1, 0))

    def to_storage(self, compact: np.ndarray) -> np.ndarray:
        """(..., n_valid, C) -> (..., side, side, C); invalid cells hold zeros."""
        compact = np.asarray(compact)
        lead, channels = compact.shape[:-2], compact.shape[-1]
        out = np.zeros(lead + (self.side * self.side, channels), dtype=compact.dtype)
        out[..., self.storage_index, :] = compact
        return out.reshape(lead + (self.side, self.side, channels))

    def from_storage(self, storage: np.ndarray) -> np.ndarray:
        storage = np.asarray(storage)
        if storage.shape[-3:-1] != (self.side, self.side):
            raise ShapeMismatchError(
                f"storage of shape {storage.shape} does not match side {self.side}"
            )
        lead, channels = storage.shape[:-3], storage.shape[-1]
        flat = storage.reshape(lead + (self.side * self.side, channels))
        return flat[..., self.storage_index, :]


@lru_cache(maxsize=None)
def patch_shape(level: int, pad_width: int) -> PatchShape:
    if level < 0 or pad_width < 0:
        raise ShapeMismatchError(f"invalid patch shape (level {level}, pad {pad_width})")
    return PatchShape(level, pad_width)


@dataclass
class PatchGrid:
    """One base face's padded feature lattice, translated to zero interior mean."""

    base_face_id: int
    level: int
    pad_width: int
    features: np.ndarray
    patch_mean: np.ndarray

    @property
    def shape(self) -> PatchShape:
        return patch_shape(self.level, self.pad_width)

    @property
    def channels(self) -> int:
        return self.features.shape[-1]

    @property
    def valid_mask(self) -> np.ndarray:
        return self.shape.valid_mask

    @property
    def interior_mask(self) -> np.ndarray:
        return self.shape.interior_mask

    def compact(self) -> np.ndarray:
        return self.shape.from_storage(self.features)


# ---------------------------------------------------------------------------
# Layout


@dataclass(frozen=True, eq=False)
class PatchLayout:
    """Per base face and valid cell: how the cell is filled.

    ``kinds`` holds COPY, INTERPOLATE or REPLICATE; ``sources`` the fine
    vertex id for copied and replicated cells and ``-1`` otherwise.
    """

    shape: PatchShape
    kinds: np.ndarray
    sources: np.ndarray
    n_vertices: int

    @property
    def n_patches(self) -> int:
        return len(self.kinds)

    @cached_property
    def fill_matrix(self) -> sparse.csr_matrix:
        """Sparse operator from fine positions to stacked compact patch cells."""
        shape = self.shape
        neighbors = shape.neighbor_table(HEX_DIRECTIONS)
        rows, cols, vals = [], [], []
        for f in range(self.n_patches):
            kinds, sources = self.kinds[f], self.sources[f]
            filled: dict[int, dict[int, float]] = {
                c: {int(sources[c]): 1.0} for c in np.flatnonzero(kinds != INTERPOLATE).tolist()
            }
            pending = set(np.flatnonzero(kinds == INTERPOLATE).tolist())
            for _ in range(MAX_INTERPOLATION_SWEEPS):
                if not pending:
                    break
                update = {}
                for c in sorted(pending):
                    known = [int(k) for k in neighbors[c] if k in filled]
                    if not known:
                        continue
                    row: dict[int, float] = {}
                    for k in known:
                        for v, wt in filled[k].items():
                            row[v] = row.get(v, 0.0) + wt / len(known)
                    update[c] = row
                filled.update(update)
                pending -= set(update)
            if pending:
                raise LayoutError(
                    f"patch {f}: {len(pending)} interpolated cells still empty after "
                    f"{MAX_INTERPOLATION_SWEEPS} sweeps"
                )
            offset = f * shape.n_valid
            for c, row in filled.items():
                for v, wt in row.items():
                    rows.append(offset + c)
                    cols.append(v)
                    vals.append(wt)
        return sparse.csr_matrix(
            (vals, (rows, cols)), shape=(self.n_patches * shape.n_valid, self.n_vertices)
        )

    @cached_property
    def assembly_matrix(self) -> sparse.csr_matrix:
        """Sparse operator averaging interior cells back onto fine vertices."""
        shape = self.shape
        inner = np.flatnonzero(shape.interior)
        cells = (np.arange(self.n_patches)[:, None] * shape.n_valid + inner[None, :]).ravel()
        verts = self.sources[:, inner].ravel()
        counts = np.bincount(verts, minlength=self.n_vertices)
        if np.any(counts == 0):
            raise LayoutError(f"{int(np.sum(counts == 0))} fine vertices lie in no patch interior")
        return sparse.csr_matrix(
            (1.0 / counts[verts], (verts, cells)),
            shape=(self.n_vertices, self.n_patches * shape.n_valid),
        )

    def counts(self) -> dict[str, int]:
        return {
            "copy": int(np.sum(self.kinds == COPY)),
            "interpolate": int(np.sum(self.kinds == INTERPOLATE)),
            "replicate": int(np.sum(self.kinds == REPLICATE)),
        }


def _grid_coords(n: int, corner: int, li: int, lj: int) -> tuple[int, int]:
    """Patch grid ``(i, j)`` of local coordinates in the frame anchored at ``corner``."""
    w = [0, 0, 0]
    w[corner] = n - li - lj
    w[(corner + 1) % 3] = li
    w[(corner + 2) % 3] = lj
    return w[1], w[2]


def _fan(faces: list[list[int]], directed: dict, f: int, k: int) -> list[tuple[int, int]] | None:
    """Faces around corner ``k`` of face ``f`` in counterclockwise order, or None for an open fan."""
    fan = [(f, k)]
    h, m = f, k
    for _ in range(len(faces)):
        v, y = faces[h][m], faces[h][(m + 2) % 3]
        nxt = directed.get((v, y))
        if nxt is None:
            return None
        h, m = nxt, faces[nxt].index(v)
        if (h, m) == (f, k):
            return fan
        fan.append((h, m))
    return None


def _open_fan(
    faces: list[list[int]], directed: dict, f: int, k: int
) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """Faces around corner ``k`` of face ``f`` walked to the mesh boundary on each side.

    Both walks start at ``(f, k)``; the first turns counterclockwise, the
    second clockwise.
    """
    walks = []
    for turn in (2, 1):
        walk = [(f, k)]
        h, m = f, k
        for _ in range(len(faces)):
            v, y = faces[h][m], faces[h][(m + turn) % 3]
            nxt = directed.get((v, y) if turn == 2 else (y, v))
            if nxt is None or (nxt, faces[nxt].index(v)) == (f, k):
                break
            h, m = nxt, faces[nxt].index(v)
            walk.append((h, m))
        walks.append(walk)
    return walks[0], walks[1]


def build_layout(sr: SemiRegularMesh, pad_width: int) -> PatchLayout:
    """Fill rule of every valid cell of every patch; depends on connectivity only.

    Cells across a base edge copy the mirrored lattice vertex of the
    neighboring patch. Cells around a base corner copy the fan vertex at the
    same ring position, counting from both fan sides; around corners of
    degree below 6 the surplus cells are interpolated. Around a boundary
    corner the open fan is walked from both sides, and only cells past the
    boundary replicate the nearest patch vertex, as do cells across a
    boundary edge.
    """
    level = sr.level
    if pad_width < 0 or pad_width > 2 ** (level - 1):
        raise LayoutError(f"pad width {pad_width} too large for level {level} (max {2 ** (level - 1)})")
    n = sr.resolution
    shape = patch_shape(level, pad_width)
    faces = sr.base.faces.tolist()
    grids = sr.patch_grids
    directed = {}
    for g, (a, b, c) in enumerate(faces):
        directed[(a, b)] = g
        directed[(b, c)] = g
        directed[(c, a)] = g

    fans = {}
    kinds = np.full((len(faces), shape.n_valid), COPY, dtype=np.int8)
    sources = np.full((len(faces), shape.n_valid), -1, dtype=np.int64)
    ring_pos = {r: {off: p for p, off in enumerate(ring_offsets(r))} for r in range(1, pad_width + 1)}

    for f, face in enumerate(faces):
        for c, (i, j) in enumerate(shape.coords.tolist()):
            weights = (n - i - j, i, j)
            if min(weights) >= 0:
                sources[f, c] = grids[f, i, j]
                continue

            if max(weights) > n:
                k = weights.index(max(weights))
            else:
                k = (weights.index(min(weights)) - 1) % 3
            li, lj = weights[(k + 1) % 3], weights[(k + 2) % 3]

            if li + lj >= 0:
                # across the base edge face[k] -> face[k + 2]
                g = directed.get((face[k], face[(k + 2) % 3]))
                if g is None:
                    kinds[f, c] = REPLICATE
                    continue
                m = faces[g].index(face[k])
                gi, gj = _grid_coords(n, m, li + lj, -li)
                sources[f, c] = grids[g, gi, gj]
                continue

            if (f, k) not in fans:
                fans[(f, k)] = _fan(faces, directed, f, k) or _open_fan(faces, directed, f, k)
            fan = fans[(f, k)]
            r = hex_norm(li, lj)
            p = ring_pos[r][(li, lj)]
            if isinstance(fan, tuple):
                found = _open_corner_vertex(len(fan[0]), len(fan[1]), r, p)
                if found is None:
                    kinds[f, c] = REPLICATE
                    continue
                side, s, t = found
                h, m = fan[side][s]
            else:
                q = _corner_ring_vertex(len(fan), r, p)
                if q is None:
                    kinds[f, c] = INTERPOLATE
                    continue
                h, m = fan[q // r]
                t = q % r
            gi, gj = _grid_coords(n, m, r - t, t)
            sources[f, c] = grids[h, gi, gj]

        replicate = kinds[f] == REPLICATE
        sources[f, replicate] = sources[f, shape.nearest_interior[replicate]]

    layout = PatchLayout(shape, kinds, sources, sr.n_vertices)
    logger.debug("layout for %d patches: %s", layout.n_patches, layout.counts())
    return layout


def _corner_ring_vertex(degree: int, r: int, p: int) -> int | None:
    """Fan ring index of the vertex filling corner cell at ring ``r``, position ``p``.

    Positions up to ``2r`` and from ``5r`` on belong to the patch and its two
    edge neighbors. The remaining cells are matched to the ``(degree-3)r - 1``
    fan vertices strictly between those neighbors, nearest-first from both
    ends; cells left over are interpolated.
    """
    available = max((degree - 3) * r - 1, 0)
    from_ccw, from_cw = (available + 1) // 2, available // 2
    kccw, kcw = p - 2 * r, 5 * r - p
    if kccw <= kcw:
        return 2 * r + kccw if kccw <= from_ccw else None
    return (degree - 1) * r - kcw if kcw <= from_cw else None


def _open_corner_vertex(n_ccw: int, n_cw: int, r: int, p: int) -> tuple[int, int, int] | None:
    """Walk, face and offset ``t`` of the open-fan vertex filling corner cell ``(r, p)``.

    The cell takes the vertex at the same angle from the patch, counted along
    the nearer walk first and along the other one when the nearer walk ends
    short of it. Returns None when neither walk reaches that far.
    """
    kccw, kcw = p - 2 * r, 5 * r - p
    sides = ((0, kccw), (1, kcw)) if kccw <= kcw else ((1, kcw), (0, kccw))
    for side, dist in sides:
        if side == 0:
            q = 2 * r + dist
            s = min(q // r, n_ccw - 1)
            t = q - s * r
            if t <= r:
                return side, s, t
        else:
            q = r + dist
            s = -(-q // r)
            if s < n_cw:
                return side, s, s * r - q
    return None


# ---------------------------------------------------------------------------
# Extraction, rotation and assembly


def extract_patch_array(layout: PatchLayout, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Compact patch features (P, n_valid, C) and interior means (P, C)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[:, None]
    if len(features) != layout.n_vertices:
        raise ShapeMismatchError(
            f"{len(features)} vertex features for a layout over {layout.n_vertices} vertices"
        )
    shape = layout.shape
    cells = np.asarray(layout.fill_matrix @ features).reshape(layout.n_patches, shape.n_valid, -1)
    means = cells[:, shape.interior].mean(axis=1)
    return cells - means[:, None, :], means


def extract_patches(
    sr: SemiRegularMesh, layout: PatchLayout, features: np.ndarray | None = None
) -> list[PatchGrid]:
    """One zero-mean PatchGrid per base face; features default to the fine positions."""
    if layout.n_vertices != sr.n_vertices or layout.n_patches != sr.base.n_faces:
        raise LayoutError("layout was built for a different mesh")
    features = sr.fine_positions if features is None else features
    cells, means = extract_patch_array(layout, features)
    shape = layout.shape
    storage = shape.to_storage(cells)
    return [
        PatchGrid(f, shape.level, shape.pad_width, storage[f], means[f])
        for f in range(layout.n_patches)
    ]


def rotate_features(compact: np.ndarray, shape: PatchShape, k: int) -> np.ndarray:
    """Rotate compact features (..., n_valid, C) by ``k`` * 120 degrees."""
    return np.asarray(compact)[..., shape.rotation_source(k), :]


def rotate_patch(grid: PatchGrid, k: int) -> PatchGrid:
    """Barycentric index permutation ``(i, j, c) -> (c, i, j)`` applied ``k`` times."""
    shape = grid.shape
    rotated = shape.to_storage(rotate_features(grid.compact(), shape, k))
    return PatchGrid(grid.base_face_id, grid.level, grid.pad_width, rotated, grid.patch_mean.copy())


def assemble_positions(
    layout: PatchLayout, decoded: np.ndarray | list[PatchGrid], means: np.ndarray | None = None
) -> np.ndarray:
    """Per fine vertex: mean over containing patch interiors of decoded value plus patch mean."""
    if isinstance(decoded, list):
        if means is None:
            means = np.stack([g.patch_mean for g in decoded])
        decoded = np.stack([g.compact() for g in decoded])
    decoded = np.asarray(decoded, dtype=np.float64)
    if means is None:
        raise ShapeMismatchError("patch means are required to assemble compact features")
    if decoded.shape[:2] != (layout.n_patches, layout.shape.n_valid):
        raise LayoutError(
            f"expected {layout.n_patches} patches of {layout.shape.n_valid} cells, "
            f"got array of shape {decoded.shape}"
        )
    shifted = decoded + np.asarray(means, dtype=np.float64)[:, None, :]
    return np.asarray(layout.assembly_matrix @ shifted.reshape(-1, shifted.shape[-1]))


# ---------------------------------------------------------------------------
# Patch dataset container


def _pack_mask(mask: np.ndarray) -> str:
    return base64.b64encode(np.packbits(mask.ravel()).tobytes()).decode("ascii")


def _unpack_mask(text: str, side: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(base64.b64decode(text), dtype=np.uint8))
    return bits[: side * side].reshape(side, side).astype(bool)


def write_patch_dataset(path: str | Path, grids: list[PatchGrid]) -> Path:
    """Binary container: magic, uint32 header length, JSON header, float32 LE features."""
    path = Path(path)
    if not grids:
        raise ShapeMismatchError("cannot write an empty patch dataset")
    shape, channels = grids[0].shape, grids[0].channels
    for g in grids:
        if g.shape != shape or g.channels != channels:
            raise ShapeMismatchError("all patches of a dataset must share level, pad width and channels")
    header = {
        "format": "patch-dataset",
        "version": DATASET_VERSION,
        "level": shape.level,
        "pad_width": shape.pad_width,
        "patch_count": len(grids),
        "channels": channels,
        "mask": _pack_mask(shape.valid_mask),
        "interior": _pack_mask(shape.interior_mask),
        "base_face_ids": [int(g.base_face_id) for g in grids],
        "patch_means": [np.asarray(g.patch_mean, dtype=np.float64).tolist() for g in grids],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    data = np.stack([g.features for g in grids]).astype("<f4")
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(data.tobytes())
    return path


def read_patch_dataset(path: str | Path) -> list[PatchGrid]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Patch dataset not found: {path}")
    raw = path.read_bytes()
    if raw[:4] != DATASET_MAGIC or len(raw) < 8:
        raise MeshFormatError("not a patch dataset", str(path))
    (length,) = struct.unpack("<I", raw[4:8])
    try:
        header = json.loads(raw[8 : 8 + length])
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise MeshFormatError("corrupt patch dataset header", str(path)) from None
    if header.get("version") != DATASET_VERSION:
        raise MeshFormatError(f"unsupported patch dataset version {header.get('version')}", str(path))

    shape = patch_shape(int(header["level"]), int(header["pad_width"]))
    if not np.array_equal(_unpack_mask(header["mask"], shape.side), shape.valid_mask):
        raise MeshFormatError("validity mask does not match the lattice shape", str(path))
    count, channels = int(header["patch_count"]), int(header["channels"])
    expected = count * shape.side * shape.side * channels * 4
    body = raw[8 + length :]
    if len(body) != expected:
        raise MeshFormatError(f"feature block has {len(body)} bytes, expected {expected}", str(path))
    data = np.frombuffer(body, dtype="<f4").reshape(count, shape.side, shape.side, channels)
    return [
        PatchGrid(
            base_face_id=header["base_face_ids"][k],
            level=shape.level,
            pad_width=shape.pad_width,
            features=data[k].astype(np.float32),
            patch_mean=np.asarray(header["patch_means"][k], dtype=np.float64),
        )
        for k in range(count)
    ]


def stack_patches(grids: list[PatchGrid]) -> np.ndarray:
    """Compact features of same-shape patches, shape (P, n_valid, C)."""
    if not grids:
        raise ShapeMismatchError("no patches to stack")
    shape = grids[0].shape
    if any(g.shape != shape for g in grids):
        raise ShapeMismatchError("patches have different lattice shapes")
    return np.stack([g.compact() for g in grids])
