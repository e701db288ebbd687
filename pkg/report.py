"""CSV artifacts and the Jinja2-rendered reconstruction error table."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from jinja2 import Environment, FileSystemLoader

from models import ClassScore, EmbeddingMatrix

TEMPLATE_DIR = Path(__file__).parent / "templates"


def write_loss_history(path: str | Path, history: list[float]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(history, start=1):
            writer.writerow([epoch, repr(float(loss))])
    return path


def embedding_header(patch_count: int, latent_dim: int, components: int) -> list[str]:
    cols = [f"z{p}_{k}" for p in range(patch_count) for k in range(latent_dim)]
    return cols + [f"pc{k + 1}" for k in range(components)]


def write_embedding(path: str | Path, emb: EmbeddingMatrix) -> Path:
    """One row per frame: all patch latents, then the PCA coordinates."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(embedding_header(emb.patch_count, emb.latent_dim, emb.projection.shape[1]))
        for z, pc in zip(emb.latents, emb.projection):
            writer.writerow([repr(float(v)) for v in np.concatenate([z, pc])])
    return path


def write_face_errors(path: str | Path, face_errors: np.ndarray) -> Path:
    """Sidecar of per-face squared reconstruction error, in the OBJ's face order."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["face", "squared_error"])
        for k, e in enumerate(face_errors):
            writer.writerow([k, repr(float(e))])
    return path


def render_mse_table(scores: list[ClassScore], checkpoint: str = "") -> str:
    env = Environment(loader=FileSystemLoader(str(TEMPLATE_DIR)), autoescape=False, trim_blocks=True)
    template = env.get_template("mse_table.txt.j2")
    width = max([len(s.name) for s in scores] + [5])
    return template.render(
        scores=scores,
        width=width,
        checkpoint=checkpoint,
    )


def generate_report(
    scores: list[ClassScore], checkpoint: str = "", output_path: str | Path | None = None
) -> str:
    """Render the error table and optionally write it to ``output_path``."""
    text = render_mse_table(scores, checkpoint)
    if output_path is not None:
        Path(output_path).write_text(text)
    return text
