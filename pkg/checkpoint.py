"""Checkpoint files: JSON manifest followed by little-endian float32 blobs.

Byte layout::

    b"SRAE" | uint32 LE manifest length | manifest (UTF-8 JSON, sorted keys)
    | parameters (param_count float32 LE) | [Adam m | Adam v] (same length each)

Parameters are stored layer by layer in C order, so convolution weights
vary fastest over taps.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from autoencoder import Autoencoder, AutoencoderSpec, default_spec
from errors import CheckpointError
from hexnn import AdamState

MAGIC = b"SRAE"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    params: np.ndarray
    fingerprint: str
    optimizer: dict[str, Any] | None = None
    adam_m: np.ndarray | None = None
    adam_v: np.ndarray | None = None
    metadata: dict[str, Any] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    @classmethod
    def from_model(
        cls, model: Autoencoder, state: AdamState | None = None, metadata: dict | None = None
    ) -> Checkpoint:
        ckpt = cls(
            params=model.flat_params().astype(np.float32),
            fingerprint=model.spec.fingerprint,
            metadata=dict(metadata or {}),
        )
        if state is not None:
            ckpt.optimizer = {
                "step": state.step,
                "lr": state.lr,
                "beta1": state.beta1,
                "beta2": state.beta2,
                "eps": state.eps,
            }
            ckpt.adam_m = np.concatenate([m.ravel() for m in state.m]).astype(np.float32)
            ckpt.adam_v = np.concatenate([v.ravel() for v in state.v]).astype(np.float32)
        return ckpt

    def model(self, spec: AutoencoderSpec | None = None) -> Autoencoder:
        spec = spec or default_spec()
        if spec.fingerprint != self.fingerprint:
            raise CheckpointError("checkpoint was written for a different architecture")
        model = Autoencoder(spec, [np.zeros(s, dtype=np.float32) for s in spec.param_shapes()])
        model.load_flat(self.params)
        return model

    @property
    def loss_history(self) -> list[float]:
        return list(self.metadata.get("loss_history", []))


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    path = Path(path)
    manifest = {
        "format_version": ckpt.version,
        "fingerprint": ckpt.fingerprint,
        "param_count": int(ckpt.params.size),
        "optimizer": ckpt.optimizer,
        "metadata": ckpt.metadata,
    }
    blob = json.dumps(manifest, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(np.asarray(ckpt.params, dtype="<f4").tobytes())
        if ckpt.optimizer is not None:
            f.write(np.asarray(ckpt.adam_m, dtype="<f4").tobytes())
            f.write(np.asarray(ckpt.adam_v, dtype="<f4").tobytes())
    return path


def load_checkpoint(path: str | Path, spec: AutoencoderSpec | None = None) -> Checkpoint:
    """Read a checkpoint and verify it matches ``spec`` (the default architecture)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (length,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + length:
        raise CheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[8 : 8 + length])
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise CheckpointError(f"{path}: corrupt manifest") from None

    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {manifest.get('format_version')}")
    spec = spec or default_spec()
    if manifest.get("fingerprint") != spec.fingerprint:
        raise CheckpointError(f"{path}: architecture fingerprint mismatch")
    count = spec.param_count()
    if manifest.get("param_count") != count:
        raise CheckpointError(f"{path}: expected {count} parameters, manifest says {manifest.get('param_count')}")

    blobs = 3 if manifest.get("optimizer") is not None else 1
    body = raw[8 + length :]
    if len(body) != blobs * count * 4:
        raise CheckpointError(
            f"{path}: parameter data has {len(body)} bytes, expected {blobs * count * 4} (corrupt or truncated)"
        )
    data = np.frombuffer(body, dtype="<f4").astype(np.float32)
    ckpt = Checkpoint(
        params=data[:count].copy(),
        fingerprint=manifest["fingerprint"],
        optimizer=manifest.get("optimizer"),
        metadata=manifest.get("metadata") or {},
    )
    if blobs == 3:
        ckpt.adam_m = data[count : 2 * count].copy()
        ckpt.adam_v = data[2 * count :].copy()
    return ckpt
