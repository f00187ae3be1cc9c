"""Layer forward/backward passes.

Each layer caches what its backward needs during forward (training mode)
and raises if backward runs without a matching forward. Batched activations
are (B, H, W, C) or (B, N); the module-level functions mirror the
single-sample contracts and accept unbatched arrays too.
"""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError, PipelineError, ShapeError
from ..rng import Rng
from . import kernels


class Layer:
    name = ""
    trainable = False

    def forward(self, x: np.ndarray, training: bool = False, rng: Rng | None = None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _need(self, cache, what: str):
        if cache is None:
            raise PipelineError(f"{self.name or type(self).__name__}: backward without cached {what}")
        return cache


class Conv2D(Layer):
    """Valid (no padding) convolution, stride 1, NHWC."""

    trainable = True

    def __init__(self, kernel: int, in_channels: int, filters: int, dtype=np.float64):
        if kernel < 1 or filters < 1 or in_channels < 1:
            raise ParameterError("conv kernel, channels and filters must be >= 1")
        self.kernel = kernel
        self.in_channels = in_channels
        self.filters = filters
        self.dtype = np.dtype(dtype)
        self.w = np.zeros((kernel, kernel, in_channels, filters), self.dtype)
        self.b = np.zeros(filters, self.dtype)
        self.dw = None
        self.db = None
        self.skip_input_grad = False  # set on the stack's first layer
        self._cols = None
        self._in_shape = None

    def forward(self, x, training=False, rng=None):
        B, H, W, C = x.shape
        k = self.kernel
        if C != self.in_channels:
            raise ShapeError(f"{self.name}: expected {self.in_channels} channels, got {C}")
        if H < k or W < k:
            raise ShapeError(f"{self.name}: input {H}x{W} smaller than kernel {k}")
        x = np.ascontiguousarray(x, dtype=self.dtype)
        Ho, Wo = H - k + 1, W - k + 1
        kk = k * k * C
        cols = np.empty((B, Ho, Wo, kk + 1), self.dtype)
        kernels.im2col_bias(x, k, cols)
        wmat = np.concatenate([self.w.reshape(kk, self.filters), self.b[None, :]], axis=0)
        y = cols.reshape(-1, kk + 1) @ wmat
        self._cols = cols if training else None
        self._in_shape = x.shape
        return y.reshape(B, Ho, Wo, self.filters)

    def backward(self, dy):
        cols = self._need(self._cols, "patches")
        B, H, W, C = self._in_shape
        k = self.kernel
        kk = k * k * C
        F = self.filters
        dyf = np.ascontiguousarray(dy, dtype=self.dtype).reshape(-1, F)
        dwmat = cols.reshape(-1, kk + 1).T @ dyf
        self.dw = dwmat[:kk].reshape(k, k, C, F)
        self.db = dwmat[kk]
        if self.skip_input_grad:
            return None
        g = (dyf @ self.w.reshape(kk, F).T).reshape(B, H - k + 1, W - k + 1, k, k, C)
        dx = np.empty((B, H, W, C), self.dtype)
        kernels.col2im_add(g, k, dx)
        return dx


class ReLU(Layer):
    def __init__(self, inplace: bool = False):
        self.inplace = inplace
        self._mask = None

    def forward(self, x, training=False, rng=None):
        y = x if (self.inplace and x.flags.c_contiguous) else x.copy(order="C")
        mask = np.empty(y.shape, np.bool_)
        kernels.relu_fwd(y.reshape(-1), mask)
        self._mask = mask if training else None
        return y

    def backward(self, dy):
        mask = self._need(self._mask, "mask")
        return dy * mask


class MaxPool(Layer):
    def __init__(self, window: int = 3, stride: int = 2):
        if not 1 <= stride <= window:
            raise ParameterError(f"need window >= stride >= 1, got {window}/{stride}")
        self.window = window
        self.stride = stride
        self._am = None
        self._in_shape = None

    def out_hw(self, H: int, W: int) -> tuple[int, int]:
        if H < self.window or W < self.window:
            raise ShapeError(f"{self.name}: input {H}x{W} smaller than window {self.window}")
        return (H - self.window) // self.stride + 1, (W - self.window) // self.stride + 1

    def forward(self, x, training=False, rng=None):
        B, H, W, C = x.shape
        Ho, Wo = self.out_hw(H, W)
        x = np.ascontiguousarray(x)
        out = np.empty((B, Ho, Wo, C), x.dtype)
        am = np.empty((B, Ho, Wo, C), np.int8)
        kernels.maxpool_fwd(x, self.window, self.stride, out, am)
        self._am = am if training else None
        self._in_shape = x.shape
        return out

    def backward(self, dy):
        am = self._need(self._am, "argmax")
        dx = np.empty(self._in_shape, dy.dtype)
        kernels.maxpool_bwd(np.ascontiguousarray(dy), am, self.window, self.stride, dx)
        return dx


class LRN(Layer):
    """Across-channel local response normalization (divisive)."""

    def __init__(self, k: float = 2.0, n: int = 5, alpha: float = 1e-4, beta: float = 0.75):
        if n < 1 or n % 2 == 0:
            raise ParameterError(f"LRN span must be odd and >= 1, got {n}")
        if k <= 0:
            raise ParameterError(f"LRN k must be > 0, got {k}")
        self.k = k
        self.n = n
        self.alpha = alpha
        self.beta = beta
        self._cache = None

    def forward(self, x, training=False, rng=None):
        x = np.ascontiguousarray(x)
        out = np.empty_like(x)
        den = np.empty_like(x)
        scale = np.empty_like(x)
        kernels.lrn_fwd(x, self.k, self.n, self.alpha, self.beta, out, den, scale)
        self._cache = (x, den, scale) if training else None
        return out

    def backward(self, dy):
        x, den, scale = self._need(self._cache, "normalizers")
        dx = np.empty_like(x)
        g = np.empty_like(x)
        kernels.lrn_bwd(
            x, np.ascontiguousarray(dy, dtype=x.dtype), self.n, self.alpha, self.beta,
            den, scale, dx, g,
        )
        return dx


class Flatten(Layer):
    def __init__(self):
        self._in_shape = None

    def forward(self, x, training=False, rng=None):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        shape = self._need(self._in_shape, "shape")
        return dy.reshape(shape)


class Dense(Layer):
    trainable = True

    def __init__(self, in_features: int, units: int, dtype=np.float64):
        if units < 1 or in_features < 1:
            raise ParameterError("dense sizes must be >= 1")
        self.in_features = in_features
        self.units = units
        self.dtype = np.dtype(dtype)
        self.w = np.zeros((in_features, units), self.dtype)
        self.b = np.zeros(units, self.dtype)
        self.dw = None
        self.db = None
        self._x = None

    def forward(self, x, training=False, rng=None):
        if x.shape[1] != self.in_features:
            raise ShapeError(f"{self.name}: expected {self.in_features} features, got {x.shape[1]}")
        x = np.ascontiguousarray(x, dtype=self.dtype)
        self._x = x if training else None
        return x @ self.w + self.b

    def backward(self, dy):
        x = self._need(self._x, "input")
        dy = np.ascontiguousarray(dy, dtype=self.dtype)
        self.dw = x.T @ dy
        self.db = dy.sum(axis=0)
        return dy @ self.w.T


class Dropout(Layer):
    """Inverted dropout; identity at inference. Each sample in the batch
    draws from its own child stream so execution order cannot matter."""

    def __init__(self, keep: float = 0.5):
        if not 0 < keep <= 1:
            raise ParameterError(f"keep probability must be in (0,1], got {keep}")
        self.keep = keep
        self._mask = None

    def forward(self, x, training=False, rng=None):
        if not training or self.keep == 1.0:
            self._mask = None
            return x
        if rng is None:
            raise ParameterError(f"{self.name}: training-mode dropout needs an rng")
        B = x.shape[0]
        n = int(np.prod(x.shape[1:]))
        mask = np.empty((B, n), x.dtype)
        for s in range(B):
            mask[s] = (rng.child(s).uniform(n) < self.keep).astype(x.dtype)
        mask /= self.keep
        mask = mask.reshape(x.shape)
        self._mask = mask
        return x * mask

    def backward(self, dy):
        if self._mask is None:
            return dy
        return dy * self._mask


class Softmax(Layer):
    """Output layer: stable softmax over the last axis. Its backward is fused
    with the cross-entropy loss (see softmax_cross_entropy)."""

    def forward(self, x, training=False, rng=None):
        return softmax(x)

    def backward(self, dy):
        raise PipelineError("softmax backward is fused with the cross-entropy loss")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax along the last axis."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, label) -> tuple[float | np.ndarray, np.ndarray]:
    """Loss and probabilities; batched input returns the mean loss.

    For a single logits vector, ``label`` is one class index; for a (B, K)
    batch it is a length-B integer array.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim == 1:
        K = logits.shape[0]
        if K < 2:
            raise ShapeError("need at least two classes")
        label = int(label)
        if not 0 <= label < K:
            raise ShapeError(f"label {label} out of range for {K} classes")
        if not np.all(np.isfinite(logits)):
            raise ParameterError("logits must be finite")
        probs = softmax(logits)
        return float(-np.log(probs[label])), probs
    B, K = logits.shape
    labels = np.asarray(label, dtype=np.int64)
    if labels.shape != (B,):
        raise ShapeError(f"labels shape {labels.shape} != ({B},)")
    if labels.min() < 0 or labels.max() >= K:
        raise ShapeError("label out of range")
    probs = softmax(logits)
    losses = -np.log(probs[np.arange(B), labels])
    return float(losses.mean()), probs


# -- functional forms (single sample or batched) --


def _batched(x: np.ndarray, rank: int) -> tuple[np.ndarray, bool]:
    if x.ndim == rank:
        return x[None, ...], True
    if x.ndim == rank + 1:
        return x, False
    raise ShapeError(f"expected rank {rank} or {rank + 1}, got {x.ndim}")


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Valid convolution: out[i,j,f] = b[f] + sum x[i+u,j+v,c] * w[u,v,c,f]."""
    xb, squeeze = _batched(np.asarray(x, dtype=np.float64), 3)
    k, k2, cin, f = w.shape
    if k != k2:
        raise ShapeError("kernel must be square")
    if b.shape != (f,):
        raise ShapeError(f"bias shape {b.shape} != ({f},)")
    layer = Conv2D(k, cin, f)
    layer.w = np.asarray(w, dtype=np.float64)
    layer.b = np.asarray(b, dtype=np.float64)
    y = layer.forward(xb)
    return y[0] if squeeze else y


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(x, 0)


def maxpool_forward(x: np.ndarray, window: int = 3, stride: int = 2):
    """(pooled, argmax mask); mask holds in-window offsets u*window+v."""
    xb, squeeze = _batched(np.asarray(x), 3)
    layer = MaxPool(window, stride)
    layer.name = "maxpool"
    y = layer.forward(xb, training=True)
    am = layer._am
    return (y[0], am[0]) if squeeze else (y, am)


def lrn_forward(x: np.ndarray, k: float = 2.0, n: int = 5, alpha: float = 1e-4, beta: float = 0.75) -> np.ndarray:
    xb, squeeze = _batched(np.asarray(x, dtype=np.float64), 3)
    y = LRN(k, n, alpha, beta).forward(xb)
    return y[0] if squeeze else y


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """out = x^T w + b."""
    xb, squeeze = _batched(np.asarray(x, dtype=np.float64), 1)
    layer = Dense(w.shape[0], w.shape[1])
    layer.w = np.asarray(w, dtype=np.float64)
    layer.b = np.asarray(b, dtype=np.float64)
    y = layer.forward(xb)
    return y[0] if squeeze else y


def dropout_forward(x: np.ndarray, keep: float, rng: Rng, training: bool = True):
    """(output, mask); inverted dropout in training, identity otherwise."""
    xb, squeeze = _batched(np.asarray(x, dtype=np.float64), 1)
    layer = Dropout(keep)
    y = layer.forward(xb, training=training, rng=rng)
    mask = layer._mask if layer._mask is not None else np.ones_like(xb)
    return (y[0], mask[0]) if squeeze else (y, mask)
