from __future__ import annotations

import csv

import numpy as np

from models import ClassScore, EmbeddingMatrix
from report import (
    embedding_header,
    generate_report,
    render_mse_table,
    write_embedding,
    write_face_errors,
    write_loss_history,
)


def test_loss_history_csv(tmp_path):
    path = write_loss_history(tmp_path / "loss.csv", [0.5, 0.25])
    rows = list(csv.reader(path.read_text().splitlines()))
    assert rows == [["epoch", "loss"], ["1", "0.5"], ["2", "0.25"]]


def test_embedding_header():
    assert embedding_header(2, 2, 2) == ["z0_0", "z0_1", "z1_0", "z1_1", "pc1", "pc2"]


def test_embedding_csv(tmp_path):
    emb = EmbeddingMatrix(
        latents=np.arange(12, dtype=float).reshape(3, 4),
        projection=np.zeros((3, 2)),
        explained_variance_ratio=np.array([0.9, 0.1]),
        patch_count=2,
        latent_dim=2,
    )
    rows = list(csv.reader(write_embedding(tmp_path / "emb.csv", emb).read_text().splitlines()))
    assert len(rows) == 4
    assert len(rows[0]) == 6
    assert [float(v) for v in rows[2]] == [4.0, 5.0, 6.0, 7.0, 0.0, 0.0]


def test_face_error_sidecar(tmp_path):
    path = write_face_errors(tmp_path / "e.csv", np.array([0.1, 0.2]))
    rows = list(csv.reader(path.read_text().splitlines()))
    assert rows[0] == ["face", "squared_error"]
    assert rows[2] == ["1", "0.2"]


def test_mse_table():
    scores = [
        ClassScore("horse", 7200, 12, 0.0002, 0.00005),
        ClassScore("cylinder", 642, 12, 0.001234567, 0.0),
    ]
    text = render_mse_table(scores, checkpoint="model.ckpt")
    lines = text.splitlines()
    assert lines[0] == "Mean squared errors of reconstructed unseen meshes"
    assert "model: model.ckpt" in text
    assert "horse" in text and "0.000200" in text
    assert "0.001235" in text
    header = next(line for line in lines if line.startswith("Class"))
    assert header.split() == ["Class", "Vertices", "Frames", "MSE", "Std"]


def test_generate_report_writes_file(tmp_path):
    scores = [ClassScore("a", 10, 2, 0.5, 0.1)]
    out = tmp_path / "table.txt"
    text = generate_report(scores, output_path=out)
    assert out.read_text() == text
    assert "model:" not in text
