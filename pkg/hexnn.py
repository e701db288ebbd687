"""Hexagonal-lattice network layers with explicit forward and backward passes.

Activations are compact channel-last arrays of shape ``(B, n_valid, C)`` over
the valid cells of a :class:`patch.PatchShape`. Missing neighbors contribute
zero, so convolutions keep the cell count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import sparse

from errors import ShapeMismatchError
from patch import HEX_DIRECTIONS, PatchShape, patch_shape, ring_offsets


def tap_offsets(radius: int) -> tuple[tuple[int, int], ...]:
    """Frozen tap order: center, then each ring from ``(r, 0)`` counterclockwise."""
    taps: list[tuple[int, int]] = []
    for r in range(radius + 1):
        taps.extend(ring_offsets(r))
    return tuple(taps)


def tap_count(radius: int) -> int:
    return 1 + 3 * radius * (radius + 1)


@lru_cache(maxsize=None)
def conv_table(level: int, pad_width: int, radius: int) -> np.ndarray:
    return patch_shape(level, pad_width).neighbor_table(tap_offsets(radius))


@lru_cache(maxsize=None)
def conv_transpose_table(level: int, pad_width: int, radius: int) -> np.ndarray:
    """Per cell and tap, the cell whose tap lands here; ``n_valid`` where none does.

    Taps are translations, so at most one cell maps onto each cell per tap.
    """
    table = conv_table(level, pad_width, radius)
    n, taps = table.shape
    src = np.full((n + 1, taps), n, dtype=np.int64)
    src[table, np.arange(taps)] = np.arange(n)[:, None]
    return src[:n]


def _check(x: np.ndarray, shape: PatchShape, channels: int | None = None) -> None:
    if x.ndim != 3 or x.shape[1] != shape.n_valid:
        raise ShapeMismatchError(
            f"expected activations (B, {shape.n_valid}, C), got {x.shape}"
        )
    if channels is not None and x.shape[2] != channels:
        raise ShapeMismatchError(f"expected {channels} channels, got {x.shape[2]}")


# ---------------------------------------------------------------------------
# Convolution


def _gather(x: np.ndarray, table: np.ndarray) -> np.ndarray:
    """(B, n, C) -> (B, n, taps, C); index ``n`` reads a zero row."""
    b, n, c = x.shape
    padded = np.empty((b, n + 1, c), dtype=x.dtype)
    padded[:, :n] = x
    padded[:, n] = 0
    return padded[:, table, :]


def hexconv_forward(
    x: np.ndarray, weights: np.ndarray, shape: PatchShape
) -> tuple[np.ndarray, np.ndarray]:
    """Returns the output and the gathered neighborhoods needed by the backward pass.

    ``weights`` has shape (out_channels, in_channels, taps).
    """
    c_out, c_in, taps = weights.shape
    _check(x, shape, c_in)
    table = conv_table(shape.level, shape.pad_width, _radius(taps))
    b, n = x.shape[:2]
    gathered = _gather(x, table)
    wmat = weights.transpose(2, 1, 0).reshape(taps * c_in, c_out)
    y = gathered.reshape(b * n, taps * c_in) @ wmat
    return y.reshape(b, n, c_out), gathered


def hexconv_backward(
    dy: np.ndarray, gathered: np.ndarray, weights: np.ndarray, shape: PatchShape
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients with respect to the input and the weights.

    The input gradient is the convolution of ``dy`` over the transposed taps,
    so it is a gather and one matrix product like the forward pass.
    """
    c_out, c_in, taps = weights.shape
    b, n = gathered.shape[:2]
    if dy.shape != (b, n, c_out):
        raise ShapeMismatchError(f"upstream gradient {dy.shape} does not match output {(b, n, c_out)}")
    flat_dy = dy.reshape(b * n, c_out)
    dw = (gathered.reshape(b * n, taps * c_in).T @ flat_dy).reshape(taps, c_in, c_out).transpose(2, 1, 0)

    src = conv_transpose_table(shape.level, shape.pad_width, _radius(taps))
    wmat_t = weights.transpose(2, 0, 1).reshape(taps * c_out, c_in)
    dx = _gather(dy, src).reshape(b * n, taps * c_out) @ wmat_t
    return dx.reshape(b, n, c_in), np.ascontiguousarray(dw)


def _radius(taps: int) -> int:
    for r in range(4):
        if tap_count(r) == taps:
            return r
    raise ShapeMismatchError(f"{taps} taps is not a hexagonal kernel")


# ---------------------------------------------------------------------------
# Pooling


@lru_cache(maxsize=None)
def pool_matrix(level: int, pad_width: int) -> sparse.csr_matrix:
    """Coarse cell = mean of its fine cell and the valid fine cells around it."""
    fine = patch_shape(level, pad_width)
    coarse = fine.coarser()
    rows, cols, vals = [], [], []
    for c, (i, j) in enumerate(coarse.coords.tolist()):
        members = [fine.cell(2 * i, 2 * j)]
        members += [k for di, dj in HEX_DIRECTIONS if (k := fine.cell(2 * i + di, 2 * j + dj)) >= 0]
        for k in members:
            rows.append(c)
            cols.append(k)
            vals.append(1.0 / len(members))
    return sparse.csr_matrix((vals, (rows, cols)), shape=(coarse.n_valid, fine.n_valid))


@lru_cache(maxsize=None)
def unpool_matrix(level: int, pad_width: int, target_pad: int) -> sparse.csr_matrix:
    """Coarse ``(level, pad_width)`` to fine ``(level + 1, target_pad)``.

    Even cells copy their parent, edge midpoints average two valid coarse
    endpoints, and all other cells stay zero.
    """
    coarse = patch_shape(level, pad_width)
    fine = patch_shape(level + 1, target_pad)
    rows, cols, vals = [], [], []
    for c, (i, j) in enumerate(fine.coords.tolist()):
        if i % 2 == 0 and j % 2 == 0:
            ends = [(i, j)]
        elif i % 2 and j % 2:
            ends = [(i - 1, j + 1), (i + 1, j - 1)]
        elif i % 2:
            ends = [(i - 1, j), (i + 1, j)]
        else:
            ends = [(i, j - 1), (i, j + 1)]
        parents = [coarse.cell(a // 2, b // 2) for a, b in ends]
        if min(parents) < 0:
            continue
        for k in parents:
            rows.append(c)
            cols.append(k)
            vals.append(1.0 / len(parents))
    return sparse.csr_matrix((vals, (rows, cols)), shape=(fine.n_valid, coarse.n_valid))


@lru_cache(maxsize=None)
def _dense_operator(kind: str, level: int, pad_width: int, target_pad: int, transpose: bool) -> np.ndarray:
    mat = pool_matrix(level, pad_width) if kind == "pool" else unpool_matrix(level, pad_width, target_pad)
    dense = mat.toarray()
    return np.ascontiguousarray(dense.T if transpose else dense)


def _apply(op: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(m, n) operator on (B, n, C) activations, broadcast over the batch."""
    if x.ndim != 3 or x.shape[1] != op.shape[1]:
        raise ShapeMismatchError(f"operator expects {op.shape[1]} cells, got {x.shape}")
    return np.matmul(op.astype(x.dtype, copy=False), x)


def avg_pool_forward(x: np.ndarray, shape: PatchShape) -> np.ndarray:
    if shape.level < 1:
        raise ShapeMismatchError("cannot pool a level-0 patch")
    return _apply(_dense_operator("pool", shape.level, shape.pad_width, 0, False), x)


def avg_pool_backward(dy: np.ndarray, shape: PatchShape) -> np.ndarray:
    return _apply(_dense_operator("pool", shape.level, shape.pad_width, 0, True), dy)


def avg_unpool_forward(x: np.ndarray, shape: PatchShape, target: PatchShape) -> np.ndarray:
    if target.level != shape.level + 1:
        raise ShapeMismatchError(f"cannot unpool level {shape.level} into level {target.level}")
    return _apply(_dense_operator("unpool", shape.level, shape.pad_width, target.pad_width, False), x)


def avg_unpool_backward(dy: np.ndarray, shape: PatchShape, target: PatchShape) -> np.ndarray:
    return _apply(_dense_operator("unpool", shape.level, shape.pad_width, target.pad_width, True), dy)


# ---------------------------------------------------------------------------
# Dense, activation, loss


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ShapeMismatchError(f"dense layer expects (B, {weights.shape[0]}), got {x.shape}")
    return x @ weights + bias


def dense_backward(
    dy: np.ndarray, x: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dweights, dbias)."""
    return dy @ weights.T, x.T @ dy, dy.sum(axis=0)


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dy * (x > 0)


def mse_interior(
    pred: np.ndarray, target: np.ndarray, shape: PatchShape
) -> tuple[float, np.ndarray]:
    """Mean squared channel difference over interior cells; padding is ignored."""
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"prediction {pred.shape} and target {target.shape} differ")
    _check(pred, shape)
    inner = shape.interior
    diff = (pred - target)[:, inner, :]
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    grad = np.zeros_like(pred)
    grad[:, inner, :] = 2.0 * diff / diff.size
    return loss, grad


# ---------------------------------------------------------------------------
# Optimizer and initialization


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float = 0.001) -> AdamState:
        return cls(lr=lr, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> list[np.ndarray]:
    """Bias-corrected Adam update applied in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatchError("parameters, gradients and optimizer moments do not line up")
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeMismatchError(f"gradient {g.shape} does not match parameter {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
    return params


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)
