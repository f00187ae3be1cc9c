from .layers import (
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    LRN,
    MaxPool,
    ReLU,
    Softmax,
    conv2d_forward,
    dense_forward,
    dropout_forward,
    lrn_forward,
    maxpool_forward,
    relu,
    softmax,
    softmax_cross_entropy,
)
from .network import (
    LayerSpec,
    Network,
    NetworkSpec,
    count_parameters,
    default_network,
    infer_shapes,
    sgd_step,
)
from . import kernels, serialize

__all__ = [
    "Conv2D", "Dense", "Dropout", "Flatten", "LRN", "MaxPool", "ReLU", "Softmax",
    "conv2d_forward", "dense_forward", "dropout_forward", "lrn_forward",
    "maxpool_forward", "relu", "softmax", "softmax_cross_entropy",
    "LayerSpec", "Network", "NetworkSpec", "count_parameters", "default_network",
    "infer_shapes", "sgd_step", "kernels", "serialize",
]
