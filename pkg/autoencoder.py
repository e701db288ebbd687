"""Patch autoencoder: fixed hexagonal-convolution encoder/decoder stack."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from config import derive_rng
from errors import ShapeMismatchError
from hexnn import (
    avg_pool_backward,
    avg_pool_forward,
    avg_unpool_backward,
    avg_unpool_forward,
    dense_backward,
    dense_forward,
    glorot_uniform,
    hexconv_backward,
    hexconv_forward,
    relu_backward,
    relu_forward,
    tap_count,
)
from patch import PatchShape, patch_shape

LATENT_DIM = 8


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    level: int
    pad_width: int
    in_channels: int = 0
    out_channels: int = 0
    radius: int = 0

    @property
    def shape(self) -> PatchShape:
        return patch_shape(self.level, self.pad_width)

    @property
    def param_shapes(self) -> list[tuple[int, ...]]:
        if self.kind == "conv":
            return [(self.out_channels, self.in_channels, tap_count(self.radius))]
        if self.kind == "dense":
            return [(self.in_channels, self.out_channels), (self.out_channels,)]
        return []

    @property
    def param_count(self) -> int:
        return int(sum(np.prod(s) for s in self.param_shapes))


@dataclass(frozen=True)
class AutoencoderSpec:
    layers: tuple[LayerSpec, ...]
    input_level: int = 3
    input_pad: int = 2
    channels: int = 3
    latent_dim: int = LATENT_DIM

    @property
    def input_shape(self) -> PatchShape:
        return patch_shape(self.input_level, self.input_pad)

    @property
    def parametric(self) -> list[LayerSpec]:
        return [layer for layer in self.layers if layer.param_shapes]

    def layer_param_counts(self) -> list[int]:
        return [layer.param_count for layer in self.parametric]

    def param_count(self) -> int:
        return sum(self.layer_param_counts())

    def param_shapes(self) -> list[tuple[int, ...]]:
        return [s for layer in self.parametric for s in layer.param_shapes]

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(
            {
                "layers": [asdict(layer) for layer in self.layers],
                "input": [self.input_level, self.input_pad, self.channels],
                "latent_dim": self.latent_dim,
            },
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()


def default_spec() -> AutoencoderSpec:
    """Encoder 111 -> 33 -> 6 cells -> 8 latents, decoder mirrored back to 111."""
    return AutoencoderSpec(
        layers=(
            LayerSpec("conv", 3, 2, 3, 16, radius=2),
            LayerSpec("relu", 3, 2),
            LayerSpec("pool", 3, 2),
            LayerSpec("conv", 2, 1, 16, 32, radius=1),
            LayerSpec("relu", 2, 1),
            LayerSpec("pool", 2, 1),
            LayerSpec("dense", 1, 0, 288, LATENT_DIM),
            LayerSpec("dense", 1, 0, LATENT_DIM, 288),
            LayerSpec("unpool", 1, 0),
            LayerSpec("conv", 2, 1, 32, 16, radius=1),
            LayerSpec("relu", 2, 1),
            LayerSpec("unpool", 2, 1),
            LayerSpec("conv", 3, 2, 16, 16, radius=2),
            LayerSpec("relu", 3, 2),
            LayerSpec("conv", 3, 2, 16, 3, radius=1),
        )
    )


def init_params(spec: AutoencoderSpec, seed: int = 0, dtype=np.float32) -> list[np.ndarray]:
    """Glorot-uniform weights, zero biases; identical for identical seeds."""
    rng = derive_rng(seed, "init")
    params = []
    for layer in spec.parametric:
        if layer.kind == "conv":
            taps = tap_count(layer.radius)
            (w_shape,) = layer.param_shapes
            w = glorot_uniform(rng, w_shape, layer.in_channels * taps, layer.out_channels * taps)
            params.append(w.astype(dtype))
        else:
            w_shape, b_shape = layer.param_shapes
            params.append(glorot_uniform(rng, w_shape, layer.in_channels, layer.out_channels).astype(dtype))
            params.append(np.zeros(b_shape, dtype=dtype))
    return params


@dataclass
class GradientRecord:
    params: list[np.ndarray]
    inputs: np.ndarray


@dataclass
class _Trace:
    """Activations kept by the forward pass for the backward pass."""

    inputs: list = field(default_factory=list)
    extras: list = field(default_factory=list)


class Autoencoder:
    def __init__(self, spec: AutoencoderSpec, params: list[np.ndarray]):
        shapes = spec.param_shapes()
        if [p.shape for p in params] != shapes:
            raise ShapeMismatchError(
                f"parameter shapes {[p.shape for p in params]} do not match the architecture {shapes}"
            )
        self.spec = spec
        self.params = params
        self._bottleneck = spec.layers.index(next(l for l in spec.layers if l.kind == "dense"))
        # the second dense layer starts the decoder
        self._split = self._bottleneck + 1

    @classmethod
    def build(cls, seed: int = 0, dtype=np.float32) -> Autoencoder:
        spec = default_spec()
        return cls(spec, init_params(spec, seed, dtype))

    @property
    def param_count(self) -> int:
        return sum(p.size for p in self.params)

    def layer_param_counts(self) -> list[int]:
        return self.spec.layer_param_counts()

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def load_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat)
        if flat.size != sum(int(np.prod(s)) for s in self.spec.param_shapes()):
            raise ShapeMismatchError(f"flat parameter vector of length {flat.size} does not fit")
        offset = 0
        for k, p in enumerate(self.params):
            self.params[k] = flat[offset : offset + p.size].reshape(p.shape).astype(p.dtype)
            offset += p.size

    # -- forward ---------------------------------------------------------

    def _run(self, x: np.ndarray, layers, param_index: int, trace: _Trace | None):
        for layer in layers:
            if trace is not None:
                trace.inputs.append(x)
            extra = None
            if layer.kind == "conv":
                x, extra = hexconv_forward(x, self.params[param_index], layer.shape)
                param_index += 1
            elif layer.kind == "relu":
                x = relu_forward(x)
            elif layer.kind == "pool":
                x = avg_pool_forward(x, layer.shape)
            elif layer.kind == "unpool":
                x = avg_unpool_forward(x, layer.shape, self._unpool_target(layer))
            elif layer.kind == "dense":
                if x.ndim == 3:
                    # the full level-1 storage, invalid cells zero, is the dense input
                    x = layer.shape.to_storage(x).reshape(len(x), -1)
                x = dense_forward(x, self.params[param_index], self.params[param_index + 1])
                param_index += 2
                if layer.out_channels != self.spec.latent_dim:
                    side = layer.shape.side
                    x = layer.shape.from_storage(x.reshape(len(x), side, side, -1))
            if trace is not None:
                trace.extras.append(extra)
        return x

    def _unpool_target(self, layer: LayerSpec) -> PatchShape:
        k = self.spec.layers.index(layer)
        nxt = next(l for l in self.spec.layers[k + 1 :] if l.kind != "unpool")
        return nxt.shape

    def _check_input(self, x: np.ndarray) -> None:
        shape = self.spec.input_shape
        if x.ndim != 3 or x.shape[1:] != (shape.n_valid, self.spec.channels):
            raise ShapeMismatchError(
                f"expected patches of shape (B, {shape.n_valid}, {self.spec.channels}), got {x.shape}"
            )

    def encode(self, x: np.ndarray) -> np.ndarray:
        """Latent codes (B, 8) of compact patches (B, 111, 3)."""
        self._check_input(x)
        return self._run(x, self.spec.layers[: self._split], 0, None)

    def decode(self, z: np.ndarray) -> np.ndarray:
        """Compact patches (B, 111, 3) from latent codes (B, 8)."""
        z = np.asarray(z)
        if z.ndim != 2 or z.shape[1] != self.spec.latent_dim:
            raise ShapeMismatchError(f"expected latents (B, {self.spec.latent_dim}), got {z.shape}")
        return self._run(z, self.spec.layers[self._split :], self._decoder_param_index(), None)

    def _decoder_param_index(self) -> int:
        return sum(len(l.param_shapes) for l in self.spec.layers[: self._split])

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, _Trace]:
        self._check_input(x)
        trace = _Trace()
        return self._run(x, self.spec.layers, 0, trace), trace

    # -- backward --------------------------------------------------------

    def backward(self, dy: np.ndarray, trace: _Trace) -> GradientRecord:
        grads: list[np.ndarray | None] = [None] * len(self.params)
        param_index = len(self.params)
        for layer, x, extra in reversed(list(zip(self.spec.layers, trace.inputs, trace.extras))):
            if layer.kind == "conv":
                param_index -= 1
                dy, grads[param_index] = hexconv_backward(dy, extra, self.params[param_index], layer.shape)
            elif layer.kind == "relu":
                dy = relu_backward(dy, x)
            elif layer.kind == "pool":
                dy = avg_pool_backward(dy, layer.shape)
            elif layer.kind == "unpool":
                dy = avg_unpool_backward(dy, layer.shape, self._unpool_target(layer))
            elif layer.kind == "dense":
                param_index -= 2
                shape = layer.shape
                if dy.ndim == 3:
                    dy = shape.to_storage(dy).reshape(len(dy), -1)
                flat_x = shape.to_storage(x).reshape(len(x), -1) if x.ndim == 3 else x
                dx, dw, db = dense_backward(dy, flat_x, self.params[param_index])
                grads[param_index], grads[param_index + 1] = dw, db
                if x.ndim == 3:
                    side = shape.side
                    dx = shape.from_storage(dx.reshape(len(dx), side, side, -1))
                dy = dx
        return GradientRecord(params=grads, inputs=dy)
