from __future__ import annotations

import numpy as np
import pytest

from errors import ShapeMismatchError
from hexnn import (
    AdamState,
    adam_step,
    avg_pool_backward,
    avg_pool_forward,
    avg_unpool_backward,
    avg_unpool_forward,
    dense_backward,
    dense_forward,
    hexconv_backward,
    hexconv_forward,
    mse_interior,
    relu_backward,
    relu_forward,
    tap_count,
    tap_offsets,
)
from patch import patch_shape, rotate_features


SEEDS = range(20)


def projected_check(forward, backward, x, rng, h=1e-5):
    """Compare backward(g) against central differences of <forward(x), g>."""
    g = rng.normal(size=np.shape(forward(x)))
    analytic = backward(g)
    numeric = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = np.sum(forward(x) * g)
        x[idx] = old - h
        fm = np.sum(forward(x) * g)
        x[idx] = old
        numeric[idx] = (fp - fm) / (2 * h)
    scale = max(np.max(np.abs(numeric)), 1e-12)
    assert np.max(np.abs(analytic - numeric)) / scale < 1e-4


# -- convolution ----------------------------------------------------------------


def test_tap_order():
    taps = tap_offsets(2)
    assert len(taps) == tap_count(2) == 19
    assert taps[0] == (0, 0)
    assert taps[1:7] == ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))
    assert taps[7] == (2, 0)


def test_identity_kernel(rng):
    shape = patch_shape(3, 2)
    x = rng.normal(size=(2, shape.n_valid, 3))
    w = np.zeros((3, 3, 7))
    w[:, :, 0] = np.eye(3)
    y, _ = hexconv_forward(x, w, shape)
    np.testing.assert_array_equal(y, x)


def test_constant_input_sums_taps():
    shape = patch_shape(3, 2)
    x = np.full((1, shape.n_valid, 1), 2.0)
    y, _ = hexconv_forward(x, np.ones((1, 1, 7)), shape)
    full = np.array([all(shape.cell(i + di, j + dj) >= 0 for di, dj in tap_offsets(1)) for i, j in shape.coords])
    np.testing.assert_allclose(y[0, full, 0], 14.0)
    assert np.all(y[0, ~full, 0] < 14.0)


def test_conv_matches_dense_loops(rng):
    shape = patch_shape(2, 1)
    x = rng.normal(size=(2, shape.n_valid, 3))
    w = rng.normal(size=(4, 3, 19))
    y, _ = hexconv_forward(x, w, shape)
    expected = np.zeros((2, shape.n_valid, 4))
    for c, (i, j) in enumerate(shape.coords.tolist()):
        for t, (di, dj) in enumerate(tap_offsets(2)):
            k = shape.cell(i + di, j + dj)
            if k >= 0:
                expected[:, c, :] += x[:, k, :] @ w[:, :, t].T
    np.testing.assert_allclose(y, expected, atol=1e-12)


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("radius", [1, 2])
def test_conv_gradients(seed, radius):
    rng = np.random.default_rng(seed)
    shape = patch_shape(2, 1)
    x = rng.normal(size=(2, shape.n_valid, 2))
    w = rng.normal(size=(3, 2, tap_count(radius)))

    def backward_x(g):
        _, gathered = hexconv_forward(x, w, shape)
        return hexconv_backward(g, gathered, w, shape)[0]

    def backward_w(g):
        _, gathered = hexconv_forward(x, w, shape)
        return hexconv_backward(g, gathered, w, shape)[1]

    projected_check(lambda v: hexconv_forward(v, w, shape)[0], backward_x, x, rng)
    projected_check(lambda v: hexconv_forward(x, v, shape)[0], backward_w, w, rng)


def test_conv_rejects_wrong_channels(rng):
    shape = patch_shape(2, 1)
    with pytest.raises(ShapeMismatchError):
        hexconv_forward(np.zeros((1, shape.n_valid, 2)), np.zeros((3, 4, 7)), shape)


@pytest.mark.parametrize("radius", [1, 2])
def test_rotation_equivariance(rng, radius):
    shape = patch_shape(3, 2)
    x = rng.normal(size=(1, shape.n_valid, 2))
    w = rng.normal(size=(2, 2, tap_count(radius)))
    rotated_w = w.copy()
    start = 1
    for r in range(1, radius + 1):
        ring = slice(start, start + 6 * r)
        rotated_w[:, :, ring] = np.roll(w[:, :, ring], r * 2, axis=-1)
        start += 6 * r

    y, _ = hexconv_forward(x, w, shape)
    y_rot, _ = hexconv_forward(rotate_features(x, shape, 1), rotated_w, shape)
    np.testing.assert_allclose(y_rot, rotate_features(y, shape, 1), atol=1e-12)


# -- pooling ---------------------------------------------------------------------------


def test_pool_preserves_constants():
    shape = patch_shape(3, 2)
    y = avg_pool_forward(np.full((2, shape.n_valid, 3), 5.0), shape)
    assert y.shape == (2, 33, 3)
    np.testing.assert_allclose(y, 5.0)


def test_unpool_leaves_uncovered_ring_zero():
    coarse, fine = patch_shape(1, 0), patch_shape(2, 1)
    y = avg_unpool_forward(np.ones((1, 6, 1)), coarse, fine)
    assert y.shape == (1, 33, 1)
    np.testing.assert_allclose(y[0, fine.interior, 0], 1.0)
    assert np.count_nonzero(y[0, :, 0] == 0) == 18


def test_unpool_into_padded_level():
    coarse, fine = patch_shape(2, 1), patch_shape(3, 2)
    y = avg_unpool_forward(np.full((1, 33, 1), 3.0), coarse, fine)
    np.testing.assert_allclose(y[0, fine.interior, 0], 3.0)


def test_pool_is_rotation_equivariant(rng):
    shape = patch_shape(3, 2)
    x = rng.normal(size=(1, shape.n_valid, 2))
    coarse = shape.coarser()
    np.testing.assert_allclose(
        avg_pool_forward(rotate_features(x, shape, 1), shape),
        rotate_features(avg_pool_forward(x, shape), coarse, 1),
        atol=1e-12,
    )


@pytest.mark.parametrize("seed", SEEDS)
def test_pool_and_unpool_gradients(seed):
    rng = np.random.default_rng(seed)
    fine, coarse = patch_shape(2, 1), patch_shape(1, 0)
    x = rng.normal(size=(2, fine.n_valid, 2))
    projected_check(lambda v: avg_pool_forward(v, fine), lambda g: avg_pool_backward(g, fine), x, rng)
    z = rng.normal(size=(2, coarse.n_valid, 2))
    projected_check(
        lambda v: avg_unpool_forward(v, coarse, fine),
        lambda g: avg_unpool_backward(g, coarse, fine),
        z,
        rng,
    )


def test_unpool_rejects_level_jump():
    with pytest.raises(ShapeMismatchError):
        avg_unpool_forward(np.zeros((1, 6, 1)), patch_shape(1, 0), patch_shape(3, 2))


# -- dense, relu, loss ---------------------------------------------------------------------


@pytest.mark.parametrize("seed", SEEDS)
def test_dense_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 5))
    w = rng.normal(size=(5, 3))
    b = rng.normal(size=3)
    projected_check(lambda v: dense_forward(v, w, b), lambda g: dense_backward(g, x, w)[0], x, rng)
    projected_check(lambda v: dense_forward(x, v, b), lambda g: dense_backward(g, x, w)[1], w, rng)
    projected_check(lambda v: dense_forward(x, w, v), lambda g: dense_backward(g, x, w)[2], b, rng)


@pytest.mark.parametrize("seed", SEEDS)
def test_relu_gradient(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 10))
    x[np.abs(x) < 0.01] = 0.5
    projected_check(relu_forward, lambda g: relu_backward(g, x), x, rng)
    np.testing.assert_array_equal(relu_forward(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])


def test_mse_ignores_padding(rng):
    shape = patch_shape(2, 1)
    pred = rng.normal(size=(2, shape.n_valid, 3))
    target = pred.copy()
    target[:, ~shape.interior, :] += 10.0
    loss, grad = mse_interior(pred, target, shape)
    assert loss == 0.0
    assert np.all(grad == 0)


@pytest.mark.parametrize("seed", SEEDS)
def test_mse_gradient(seed):
    rng = np.random.default_rng(seed)
    shape = patch_shape(2, 1)
    pred = rng.normal(size=(2, shape.n_valid, 3))
    target = rng.normal(size=pred.shape)
    loss, grad = mse_interior(pred, target, shape)
    inner = shape.interior
    assert loss == pytest.approx(np.mean((pred - target)[:, inner, :] ** 2))
    projected_check(lambda v: mse_interior(v, target, shape)[0], lambda g: g * grad, pred, rng)


@pytest.mark.parametrize("k", [1, 2])
def test_mse_is_rotation_invariant(rng, k):
    shape = patch_shape(3, 2)
    pred = rng.normal(size=(3, shape.n_valid, 3))
    target = rng.normal(size=pred.shape)
    loss, _ = mse_interior(pred, target, shape)
    rotated, _ = mse_interior(rotate_features(pred, shape, k), rotate_features(target, shape, k), shape)
    assert rotated == pytest.approx(loss, rel=1e-12)


# -- adam ------------------------------------------------------------------------------


def test_adam_zero_gradient_is_identity():
    p = [np.array([1.0, -2.0])]
    state = AdamState.for_params(p)
    adam_step(p, [np.zeros(2)], state)
    np.testing.assert_array_equal(p[0], [1.0, -2.0])
    assert state.step == 1


def test_adam_first_step_moves_by_lr():
    p = [np.array([1.0, 1.0])]
    state = AdamState.for_params(p, lr=0.01)
    adam_step(p, [np.array([3.0, -0.2])], state)
    np.testing.assert_allclose(p[0], [0.99, 1.01], atol=1e-8)


def test_adam_quadratic_bowl():
    x = [np.array([1.0])]
    state = AdamState.for_params(x, lr=0.001)
    history = []
    for _ in range(500):
        adam_step(x, [2.0 * x[0]], state)
        history.append(float(x[0][0]))
    assert np.all(np.diff(history) < 0)
    # a bias-corrected step never exceeds lr on this bowl
    assert 1.0 - history[-1] <= 500 * 0.001 + 1e-9
    assert abs(history[-1]) < 0.65


def test_adam_rejects_mismatched_shapes():
    p = [np.zeros(3)]
    with pytest.raises(ShapeMismatchError):
        adam_step(p, [np.zeros(4)], AdamState.for_params(p))


def test_pool_cell_is_mean_of_seven(rng):
    shape = patch_shape(3, 2)
    x = rng.normal(size=(1, shape.n_valid, 2))
    y = avg_pool_forward(x, shape)
    coarse = shape.coarser()
    members = [shape.cell(2, 2)] + [shape.cell(2 + di, 2 + dj) for di, dj in tap_offsets(1)[1:]]
    assert min(members) >= 0
    np.testing.assert_allclose(y[0, coarse.cell(1, 1)], x[0, members].mean(axis=0))


@pytest.mark.parametrize("radius", [1, 2])
def test_conv_input_gradient_matches_scatter(rng, radius):
    shape = patch_shape(3, 2)
    x = rng.normal(size=(4, shape.n_valid, 3))
    w = rng.normal(size=(5, 3, tap_count(radius)))
    dy = rng.normal(size=(4, shape.n_valid, 5))
    _, gathered = hexconv_forward(x, w, shape)
    dx, _ = hexconv_backward(dy, gathered, w, shape)

    expected = np.zeros_like(x)
    for c, (i, j) in enumerate(shape.coords.tolist()):
        for t, (di, dj) in enumerate(tap_offsets(radius)):
            k = shape.cell(i + di, j + dj)
            if k >= 0:
                expected[:, k, :] += dy[:, c, :] @ w[:, :, t]
    np.testing.assert_allclose(dx, expected, atol=1e-10)


def test_pool_operators_keep_float32():
    shape = patch_shape(3, 2)
    x = np.ones((2, shape.n_valid, 4), dtype=np.float32)
    y = avg_pool_forward(x, shape)
    assert y.dtype == np.float32
    assert avg_pool_backward(y, shape).dtype == np.float32
