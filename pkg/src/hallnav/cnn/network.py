"""The driving network: conv-pool-conv-pool-dense-dropout-dense.

Architecture: conv1 -> relu -> maxpool -> conv2 -> relu -> maxpool ->
flatten -> dense(d) -> relu -> dropout(p) -> dense(9). Training is plain
minibatch gradient descent with Adam, fully deterministic for a fixed
seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hallnav.cnn import layers
from hallnav.cnn.optim import AdamState, adam_step
from hallnav.datapipe import Dataset

N_CLASSES = 9

# Serialization and optimizer traversal order.
PARAM_ORDER = (
    "conv1_w",
    "conv1_b",
    "conv2_w",
    "conv2_b",
    "fc1_w",
    "fc1_b",
    "fc2_w",
    "fc2_b",
)

EVAL_BATCH = 256


@dataclass(frozen=True)
class ModelConfig:
    """Network hyperparameters. Defaults fit 48x64 corridor frames and
    train in minutes on a desktop CPU."""

    in_shape: tuple[int, int, int] = (1, 48, 64)
    conv1_filters: int = 16
    conv2_filters: int = 32
    kernel: int = 3
    dense_units: int = 128
    dropout: float = 0.5
    classes: int = N_CLASSES

    def __post_init__(self):
        c, h, w = self.in_shape
        if min(c, h, w) < 1:
            raise ValueError(f"bad input shape {self.in_shape}")
        if self.conv1_filters < 1 or self.conv2_filters < 1 or self.dense_units < 1:
            raise ValueError("layer widths must be at least 1")
        if not 0 <= self.dropout < 1:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.kernel % 2 != 1:
            raise ValueError(f"kernel size must be odd, got {self.kernel}")
        feature_shapes(self)  # raises if the input is too small


def feature_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    """Activation shapes per stage, and the flattened feature width."""
    c, h, w = cfg.in_shape
    k = cfg.kernel
    h1, w1 = h - k + 1, w - k + 1
    hp1, wp1 = h1 // 2, w1 // 2
    h2, w2 = hp1 - k + 1, wp1 - k + 1
    hp2, wp2 = h2 // 2, w2 // 2
    if min(h1, w1, h2, w2) < 2 or min(hp2, wp2) < 1:
        raise ValueError(f"input {h}x{w} too small for two conv+pool stages")
    flat = cfg.conv2_filters * hp2 * wp2
    return {
        "conv1": (cfg.conv1_filters, h1, w1),
        "pool1": (cfg.conv1_filters, hp1, wp1),
        "conv2": (cfg.conv2_filters, h2, w2),
        "pool2": (cfg.conv2_filters, hp2, wp2),
        "flat": (flat,),
    }


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(cfg: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Seeded Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    c, _, _ = cfg.in_shape
    k = cfg.kernel
    f1, f2, d = cfg.conv1_filters, cfg.conv2_filters, cfg.dense_units
    flat = feature_shapes(cfg)["flat"][0]
    return {
        "conv1_w": _glorot(rng, (f1, c, k, k), c * k * k, f1 * k * k),
        "conv1_b": np.zeros(f1),
        "conv2_w": _glorot(rng, (f2, f1, k, k), f1 * k * k, f2 * k * k),
        "conv2_b": np.zeros(f2),
        "fc1_w": _glorot(rng, (d, flat), flat, d),
        "fc1_b": np.zeros(d),
        "fc2_w": _glorot(rng, (cfg.classes, d), d, cfg.classes),
        "fc2_b": np.zeros(cfg.classes),
    }


def forward(
    params: dict,
    cfg: ModelConfig,
    x: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
):
    """Batched forward pass; x is (N, C, H, W). Returns (logits, caches)."""
    if x.shape[1:] != cfg.in_shape:
        raise ValueError(f"input shape {x.shape[1:]} != model input {cfg.in_shape}")
    caches = {}
    a, caches["conv1"] = layers.conv2d_forward(x, params["conv1_w"], params["conv1_b"])
    a, caches["relu1"] = layers.relu_forward(a)
    a, caches["pool1"] = layers.maxpool2_forward(a)
    a, caches["conv2"] = layers.conv2d_forward(a, params["conv2_w"], params["conv2_b"])
    a, caches["relu2"] = layers.relu_forward(a)
    a, caches["pool2"] = layers.maxpool2_forward(a)
    caches["flat_shape"] = a.shape
    a = a.reshape(a.shape[0], -1)
    a, caches["fc1"] = layers.dense_forward(a, params["fc1_w"], params["fc1_b"])
    a, caches["relu3"] = layers.relu_forward(a)
    a, caches["drop"] = layers.dropout_forward(a, cfg.dropout, training, rng)
    logits, caches["fc2"] = layers.dense_forward(a, params["fc2_w"], params["fc2_b"])
    return logits, caches


def backward(dlogits: np.ndarray, caches: dict) -> dict[str, np.ndarray]:
    """Gradients of all parameters given d(loss)/d(logits)."""
    grads = {}
    da, grads["fc2_w"], grads["fc2_b"] = layers.dense_backward(dlogits, caches["fc2"])
    da = layers.dropout_backward(da, caches["drop"])
    da = layers.relu_backward(da, caches["relu3"])
    da, grads["fc1_w"], grads["fc1_b"] = layers.dense_backward(da, caches["fc1"])
    da = da.reshape(caches["flat_shape"])
    da = layers.maxpool2_backward(da, caches["pool2"])
    da = layers.relu_backward(da, caches["relu2"])
    da, grads["conv2_w"], grads["conv2_b"] = layers.conv2d_backward(
        da, caches["conv2"]
    )
    da = layers.maxpool2_backward(da, caches["pool1"])
    da = layers.relu_backward(da, caches["relu1"])
    _, grads["conv1_w"], grads["conv1_b"] = layers.conv2d_backward(
        da, caches["conv1"], need_dx=False
    )
    return grads


def _dataset_arrays(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([ex.tensor for ex in dataset.examples])
    y = np.array([int(ex.label) for ex in dataset.examples], dtype=int)
    return x, y


def train(
    cfg: ModelConfig,
    dataset: Dataset,
    epochs: int = 15,
    batch_size: int = 64,
    seed: int = 0,
    lr: float = 0.001,
) -> tuple[dict, list[dict]]:
    """Train from scratch; returns (params, per-epoch history).

    History rows are {"epoch", "loss", "accuracy"} with the mean training
    loss and the accuracy of the (dropout-active) training forward passes.
    """
    if not dataset.examples:
        raise ValueError("cannot train on an empty dataset")
    if not 1 <= epochs <= 100:
        raise ValueError(f"epochs must be in 1..100, got {epochs}")
    x, y = _dataset_arrays(dataset)
    if x.shape[1:] != cfg.in_shape:
        raise ValueError(f"dataset shape {x.shape[1:]} != model input {cfg.in_shape}")
    rng = np.random.default_rng(seed)
    params = init_params(cfg, seed)
    state = AdamState(lr=lr)
    n = len(y)
    history = []
    for epoch in range(epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for lo in range(0, n, batch_size):
            idx = perm[lo : lo + batch_size]
            xb, yb = x[idx], y[idx]
            logits, caches = forward(params, cfg, xb, training=True, rng=rng)
            losses, grads_logits = layers.softmax_ce(logits, yb)
            loss_sum += float(losses.sum())
            correct += int((logits.argmax(axis=1) == yb).sum())
            grads = backward(grads_logits / len(yb), caches)
            params, state = adam_step(params, grads, state)
        history.append(
            {"epoch": epoch + 1, "loss": loss_sum / n, "accuracy": correct / n}
        )
    return params, history


def _forward_eval(params: dict, cfg: ModelConfig, x: np.ndarray) -> np.ndarray:
    logits = []
    for lo in range(0, len(x), EVAL_BATCH):
        batch_logits, _ = forward(params, cfg, x[lo : lo + EVAL_BATCH])
        logits.append(batch_logits)
    return np.concatenate(logits)


def evaluate(
    params: dict, cfg: ModelConfig, dataset: Dataset
) -> tuple[float, np.ndarray]:
    """Accuracy plus the 9x9 confusion matrix (rows true, cols predicted).

    Dropout is disabled; argmax ties resolve to the lowest class index.
    """
    if not dataset.examples:
        raise ValueError("cannot evaluate an empty dataset")
    x, y = _dataset_arrays(dataset)
    pred = _forward_eval(params, cfg, x).argmax(axis=1)
    confusion = np.zeros((cfg.classes, cfg.classes), dtype=int)
    np.add.at(confusion, (y, pred), 1)
    accuracy = float(np.trace(confusion)) / float(confusion.sum())
    return accuracy, confusion


def predict(params: dict, cfg: ModelConfig, tensor: np.ndarray) -> np.ndarray:
    """Confidence values for one (C, H, W) input; softmax over 9 classes."""
    if tensor.shape != cfg.in_shape:
        raise ValueError(f"input shape {tensor.shape} != model input {cfg.in_shape}")
    logits, _ = forward(params, cfg, tensor[None])
    return layers.softmax(logits[0])
