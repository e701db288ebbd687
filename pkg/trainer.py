"""Minibatch Adam training of the patch autoencoder."""

from __future__ import annotations

import logging
from dataclasses import asdict

import numpy as np
from tqdm import tqdm

from autoencoder import Autoencoder
from checkpoint import Checkpoint
from config import derive_rng
from errors import ShapeMismatchError, TrainingDivergedError
from hexnn import AdamState, adam_step, mse_interior
from models import TrainConfig
from patch import PatchGrid, rotate_features, stack_patches

logger = logging.getLogger(__name__)


def augment_rotations(patches: np.ndarray, model: Autoencoder) -> np.ndarray:
    """Each patch under rotations by 0, 120 and 240 degrees, as separate entries."""
    shape = model.spec.input_shape
    return np.concatenate([rotate_features(patches, shape, k) for k in range(3)])


def batch_count(n_patches: int, batch_size: int) -> int:
    return -(-n_patches // batch_size)


def train(
    dataset: np.ndarray | list[PatchGrid],
    cfg: TrainConfig,
    progress: bool = False,
) -> tuple[Checkpoint, list[float]]:
    """Fit a freshly initialized autoencoder; returns the checkpoint and per-epoch mean interior MSE."""
    patches = stack_patches(dataset) if isinstance(dataset, list) else np.asarray(dataset)
    if len(patches) == 0:
        raise ShapeMismatchError("training needs at least one patch")

    model = Autoencoder.build(seed=cfg.seed)
    shape = model.spec.input_shape
    if patches.shape[1:] != (shape.n_valid, model.spec.channels):
        raise ShapeMismatchError(
            f"training patches have shape {patches.shape[1:]}, "
            f"expected ({shape.n_valid}, {model.spec.channels})"
        )
    patches = patches.astype(np.float32)
    if cfg.augment:
        patches = augment_rotations(patches, model)

    rng = derive_rng(cfg.seed, "shuffle")
    state = AdamState.for_params(model.params, lr=cfg.lr)
    n = len(patches)
    n_batches = batch_count(n, cfg.batch_size)
    history: list[float] = []
    logger.info("training on %d patches, %d batches per epoch", n, n_batches)

    bar = tqdm(range(1, cfg.epochs + 1), desc="  Training", unit="epoch", disable=not progress)
    for epoch in bar:
        order = rng.permutation(n)
        total = 0.0
        for b in range(n_batches):
            batch = patches[order[b * cfg.batch_size : (b + 1) * cfg.batch_size]]
            pred, trace = model.forward(batch)
            loss, grad = mse_interior(pred, batch, shape)
            if not np.isfinite(loss):
                norms = [float(np.linalg.norm(p)) for p in model.params]
                raise TrainingDivergedError(epoch, b, norms)
            record = model.backward(grad, trace)
            adam_step(model.params, record.params, state)
            total += loss * len(batch)
        history.append(total / n)
        bar.set_postfix(loss=f"{history[-1]:.3g}")
        if progress and epoch % 50 == 0:
            tqdm.write(f"  epoch {epoch}: loss {history[-1]:.6g}")
        logger.debug("epoch %d: loss %.6g", epoch, history[-1])

    metadata = {
        "epoch": cfg.epochs,
        "loss_history": history,
        "patches": n,
        "batches_per_epoch": n_batches,
        "train_config": asdict(cfg),
    }
    return Checkpoint.from_model(model, state, metadata), history
