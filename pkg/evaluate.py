"""Reconstruction, latent embedding and per-class error evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from autoencoder import Autoencoder
from errors import ShapeMismatchError, TopologyMismatchError
from geometry import unit_cube_transform
from models import ClassScore, EmbeddingMatrix, Reconstruction, SemiRegularMesh, TriMesh
from patch import PatchGrid, PatchLayout, assemble_positions, build_layout, extract_patch_array

logger = logging.getLogger(__name__)


@dataclass
class SequencePatches:
    """Normalized patches of every frame of one topology-constant sequence."""

    layout: PatchLayout
    patches: np.ndarray
    means: np.ndarray

    @property
    def n_frames(self) -> int:
        return len(self.patches)

    def grids(self) -> list[PatchGrid]:
        """Every frame's patches as PatchGrids, frame by frame."""
        shape = self.layout.shape
        storage = shape.to_storage(self.patches)
        return [
            PatchGrid(f, shape.level, shape.pad_width, storage[t, f], self.means[t, f])
            for t in range(self.n_frames)
            for f in range(self.layout.n_patches)
        ]


def check_same_topology(frames: list[SemiRegularMesh]) -> None:
    first = frames[0]
    for k, sr in enumerate(frames[1:], start=1):
        if (
            sr.level != first.level
            or sr.n_vertices != first.n_vertices
            or not np.array_equal(sr.base.faces, first.base.faces)
            or not np.array_equal(sr.patch_grids, first.patch_grids)
        ):
            raise TopologyMismatchError(f"frame {k} does not share the first frame's connectivity")


def sequence_patches(frames: list[SemiRegularMesh], pad_width: int) -> SequencePatches:
    """One layout for the whole sequence; each frame normalized by its own bounding box."""
    if not frames:
        raise ShapeMismatchError("empty sequence")
    check_same_topology(frames)
    layout = build_layout(frames[0], pad_width)
    patches, means = [], []
    for sr in frames:
        transform = unit_cube_transform(sr.fine_positions)
        cells, mu = extract_patch_array(layout, transform.apply(sr.fine_positions))
        patches.append(cells)
        means.append(mu)
    return SequencePatches(layout, np.stack(patches), np.stack(means))


def training_patches(sequences: list[list[SemiRegularMesh]], pad_width: int) -> np.ndarray:
    """All patches of all frames of all sequences, stacked (N, n_valid, 3)."""
    blocks = []
    for frames in sequences:
        seq = sequence_patches(frames, pad_width)
        blocks.append(seq.patches.reshape(-1, *seq.patches.shape[2:]))
    return np.concatenate(blocks)


def _check_model_shape(model: Autoencoder, sr: SemiRegularMesh, pad_width: int) -> None:
    spec = model.spec
    if sr.level != spec.input_level or pad_width != spec.input_pad:
        raise ShapeMismatchError(
            f"model expects level {spec.input_level} / pad {spec.input_pad}, "
            f"got level {sr.level} / pad {pad_width}"
        )


def reconstruct_sequence(
    model: Autoencoder,
    frames: list[SemiRegularMesh],
    pad_width: int = 2,
    progress: bool = False,
) -> list[Reconstruction]:
    """Extract, encode, decode and assemble every frame.

    Errors are measured on the normalized coordinates; the returned meshes
    are mapped back to each frame's input coordinates.
    """
    if not frames:
        return []
    _check_model_shape(model, frames[0], pad_width)
    check_same_topology(frames)
    layout = build_layout(frames[0], pad_width)
    faces = frames[0].fine_faces
    out = []
    for sr in tqdm(frames, desc="  Reconstructing", unit="frame", disable=not progress):
        transform = unit_cube_transform(sr.fine_positions)
        target = transform.apply(sr.fine_positions)
        cells, means = extract_patch_array(layout, target)
        decoded = model.decode(model.encode(cells.astype(np.float32)))
        pred = assemble_positions(layout, decoded.astype(np.float64), means)
        vertex_errors = np.mean((pred - target) ** 2, axis=1)
        face_errors = vertex_errors[faces].mean(axis=1)
        out.append(
            Reconstruction(
                mesh=TriMesh(transform.invert(pred), faces),
                vertex_errors=vertex_errors,
                face_errors=face_errors,
                mse=float(vertex_errors.mean()),
            )
        )
    return out


def concat_latents(model: Autoencoder, frames: list[SemiRegularMesh], pad_width: int = 2) -> np.ndarray:
    """Per frame, the latents of all patches in base-face order, shape (T, F * 8)."""
    _check_model_shape(model, frames[0], pad_width)
    seq = sequence_patches(frames, pad_width)
    t, f = seq.patches.shape[:2]
    flat = seq.patches.reshape(t * f, *seq.patches.shape[2:]).astype(np.float32)
    return model.encode(flat).astype(np.float64).reshape(t, f * model.spec.latent_dim)


def pca_project(matrix: np.ndarray, k: int = 2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Projection (T, k), explained variance ratios (k,) and components (D, k).

    Components come from the eigendecomposition of the column-centered
    covariance, in descending eigenvalue order, each flipped so its
    largest-magnitude entry is positive.
    """
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2 or len(x) < max(k, 2):
        raise ShapeMismatchError(f"PCA to {k} components needs at least {max(k, 2)} rows, got {len(x)}")
    if x.shape[1] < k:
        raise ShapeMismatchError(f"cannot take {k} components of {x.shape[1]} columns")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (len(x) - 1)
    values, vectors = np.linalg.eigh(cov)
    order = np.argsort(values)[::-1]
    values = np.clip(values[order], 0.0, None)
    vectors = vectors[:, order[:k]]
    pivot = np.argmax(np.abs(vectors), axis=0)
    vectors = vectors * np.sign(vectors[pivot, np.arange(k)])
    total = values.sum()
    ratios = values[:k] / total if total > 0 else np.zeros(k)
    return centered @ vectors, ratios, vectors


def embed_sequence(
    model: Autoencoder, frames: list[SemiRegularMesh], pad_width: int = 2, k: int = 2
) -> EmbeddingMatrix:
    latents = concat_latents(model, frames, pad_width)
    projection, ratios, _ = pca_project(latents, k)
    return EmbeddingMatrix(
        latents=latents,
        projection=projection,
        explained_variance_ratio=ratios,
        patch_count=frames[0].base.n_faces,
        latent_dim=model.spec.latent_dim,
    )


def evaluate_classes(
    model: Autoencoder,
    classes: dict[str, list[SemiRegularMesh]],
    pad_width: int = 2,
    progress: bool = False,
) -> list[ClassScore]:
    """Reconstruction MSE mean and standard deviation per mesh class."""
    scores = []
    for name, frames in classes.items():
        recs = reconstruct_sequence(model, frames, pad_width, progress=progress)
        mses = np.array([r.mse for r in recs])
        scores.append(
            ClassScore(
                name=name,
                vertices=frames[0].n_vertices,
                frames=len(frames),
                mse_mean=float(mses.mean()),
                mse_std=float(mses.std()),
            )
        )
        logger.info("%s: %d frames, MSE %.6g", name, len(frames), scores[-1].mse_mean)
    return scores
