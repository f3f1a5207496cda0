"""From-scratch CNN: tensor layers, Adam, training loop, serialization."""

from hallnav.cnn.layers import (
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    maxpool2_backward,
    maxpool2_forward,
    relu_backward,
    relu_forward,
    softmax,
    softmax_ce,
)
from hallnav.cnn.network import (
    ModelConfig,
    backward,
    evaluate,
    feature_shapes,
    forward,
    init_params,
    predict,
    train,
)
from hallnav.cnn.optim import AdamState, adam_step
from hallnav.cnn.serialize import ModelFileError, load_model, save_model

__all__ = [
    "AdamState",
    "ModelConfig",
    "ModelFileError",
    "adam_step",
    "backward",
    "conv2d_backward",
    "conv2d_forward",
    "dense_backward",
    "dense_forward",
    "dropout_backward",
    "dropout_forward",
    "evaluate",
    "feature_shapes",
    "forward",
    "init_params",
    "load_model",
    "maxpool2_backward",
    "maxpool2_forward",
    "predict",
    "relu_backward",
    "relu_forward",
    "save_model",
    "softmax",
    "softmax_ce",
    "train",
]
