"""Network layers with explicit forward/backward passes.

All activations carry a leading batch dimension and are float64; analytic
gradients are checked against central finite differences in the test
suite. Convolution is valid-padding, stride 1, done as im2col + matmul.
"""

from __future__ import annotations

import numpy as np


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Cross-correlate x (N,C,H,W) with w (F,C,k,k) plus bias b (F,).

    Returns (y, cache) with y of shape (N, F, H-k+1, W-k+1).
    """
    n, c, h, ww = x.shape
    f, cw, k, k2 = w.shape
    if cw != c or k != k2:
        raise ValueError(f"weight shape {w.shape} does not fit input {x.shape}")
    if h < k or ww < k:
        raise ValueError(f"input {h}x{ww} smaller than kernel {k}")
    ho, wo = h - k + 1, ww - k + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, ho * wo, c * k * k)
    y = cols @ w.reshape(f, -1).T + b
    y = y.transpose(0, 2, 1).reshape(n, f, ho, wo)
    return y, (x.shape, w, cols)


def conv2d_backward(dy: np.ndarray, cache, need_dx: bool = True):
    """Gradients of conv2d_forward. Returns (dx, dw, db); dx is None when
    need_dx is False (saves the col2im fold on the input layer)."""
    x_shape, w, cols = cache
    n, c, h, ww = x_shape
    f, _, k, _ = w.shape
    ho, wo = h - k + 1, ww - k + 1
    dy_flat = dy.reshape(n, f, ho * wo).transpose(0, 2, 1)
    dw = (
        dy_flat.reshape(n * ho * wo, f).T @ cols.reshape(n * ho * wo, -1)
    ).reshape(w.shape)
    db = dy.sum(axis=(0, 2, 3))
    if not need_dx:
        return None, dw, db
    dcols = (dy_flat @ w.reshape(f, -1)).reshape(n, ho, wo, c, k, k)
    dx = np.zeros(x_shape)
    for i in range(k):
        for j in range(k):
            dx[:, :, i : i + ho, j : j + wo] += dcols[:, :, :, :, i, j].transpose(
                0, 3, 1, 2
            )
    return dx, dw, db


def maxpool2_forward(x: np.ndarray):
    """Max over disjoint 2x2 windows; odd trailing row/column dropped.

    Ties go to the first element in row-major window order, which is where
    the backward pass routes the gradient.
    """
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ValueError(f"input {h}x{w} too small to pool")
    h2, w2 = h // 2, w // 2
    t = x[:, :, : h2 * 2, : w2 * 2].reshape(n, c, h2, 2, w2, 2)
    windows = t.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    idx = windows.argmax(axis=-1)
    y = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return y, (x.shape, idx)


def maxpool2_backward(dy: np.ndarray, cache):
    x_shape, idx = cache
    n, c, h, w = x_shape
    h2, w2 = h // 2, w // 2
    dwin = np.zeros((n, c, h2, w2, 4))
    np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
    dx = np.zeros(x_shape)
    dx[:, :, : h2 * 2, : w2 * 2] = (
        dwin.reshape(n, c, h2, w2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h2 * 2, w2 * 2)
    )
    return dx


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """y = x W^T + b for x (N, n_in), w (m, n_in), b (m,)."""
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"input width {x.shape[1]} != weight width {w.shape[1]}")
    return x @ w.T + b, (x, w)


def dense_backward(dy: np.ndarray, cache):
    x, w = cache
    return dy @ w, dy.T @ x, dy.sum(axis=0)


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0.0), x > 0


def relu_backward(dy: np.ndarray, mask: np.ndarray):
    return dy * mask


def dropout_forward(x: np.ndarray, p: float, training: bool, rng=None):
    """Inverted dropout: zero with probability p, scale survivors by
    1/(1-p). Identity when not training or p == 0."""
    if not 0 <= p < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x, None
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


def dropout_backward(dy: np.ndarray, mask):
    return dy if mask is None else dy * mask


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stabilized softmax over the last axis."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_ce(logits: np.ndarray, labels):
    """Softmax cross-entropy against integer class labels.

    For 1-D logits and a scalar label returns (loss, grad). For a batch
    (N, K) and labels (N,) returns per-example (losses, grads); the grad of
    a mean loss is grads / N.
    """
    single = logits.ndim == 1
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(labels).astype(int)
    n, k = logits.shape
    if labels.shape != (n,) or labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels do not fit logits of shape {logits.shape}")
    p = softmax(logits)
    rows = np.arange(n)
    losses = -np.log(p[rows, labels])
    grads = p
    grads[rows, labels] -= 1.0
    if single:
        return float(losses[0]), grads[0]
    return losses, grads
