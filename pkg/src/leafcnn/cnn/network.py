"""Network description, shape inference, parameter arithmetic, and the
assembled model with its fused softmax/cross-entropy training step."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DivergenceError, ParameterError, ShapeError
from ..rng import Rng
from . import layers as L

LAYER_KINDS = ("conv", "relu", "maxpool", "lrn", "flatten", "dense", "dropout", "softmax")


@dataclass
class LayerSpec:
    kind: str
    kernel: int = 0
    filters: int = 0
    window: int = 0
    stride: int = 0
    lrn_k: float = 2.0
    lrn_n: int = 5
    lrn_alpha: float = 1e-4
    lrn_beta: float = 0.75
    units: int = 0
    keep: float = 1.0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ParameterError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv" and (self.kernel < 1 or self.filters < 1):
            raise ParameterError("conv needs kernel >= 1 and filters >= 1")
        if self.kind == "maxpool" and not 1 <= self.stride <= self.window:
            raise ParameterError("maxpool needs window >= stride >= 1")
        if self.kind == "dense" and self.units < 1:
            raise ParameterError("dense needs units >= 1")
        if self.kind == "dropout" and not 0 < self.keep <= 1:
            raise ParameterError("dropout needs keep in (0,1]")


@dataclass
class NetworkSpec:
    input_shape: tuple[int, int, int]  # (H, W, C)
    layers: list[LayerSpec] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {"input_shape": list(self.input_shape), "layers": [asdict(s) for s in self.layers]}
        return json.dumps(doc, indent=2)

    @staticmethod
    def from_json(text: str) -> "NetworkSpec":
        doc = json.loads(text)
        return NetworkSpec(
            input_shape=tuple(doc["input_shape"]),
            layers=[LayerSpec(**item) for item in doc["layers"]],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "NetworkSpec":
        return NetworkSpec.from_json(Path(path).read_text(encoding="utf-8"))


def default_network(
    classes: int,
    conv2_filters: int = 32,
    dense_units: tuple[int, int] = (128, 64),
    dropout_keep: float = 0.5,
    lrn_before_pool: bool = False,
) -> NetworkSpec:
    """The 9-layer architecture: two conv/pool/normalization blocks, two
    fully connected layers with dropout, and a softmax output over the
    class count. Input is a 188 x 188 grayscale plane."""
    if classes < 2:
        raise ParameterError(f"need at least 2 classes, got {classes}")

    def block(filters):
        conv = [LayerSpec("conv", kernel=3, filters=filters), LayerSpec("relu")]
        pool = LayerSpec("maxpool", window=3, stride=2)
        lrn = LayerSpec("lrn")
        return conv + ([lrn, pool] if lrn_before_pool else [pool, lrn])

    specs = (
        block(16)
        + block(conv2_filters)
        + [
            LayerSpec("flatten"),
            LayerSpec("dense", units=dense_units[0]),
            LayerSpec("relu"),
            LayerSpec("dense", units=dense_units[1]),
            LayerSpec("relu"),
            LayerSpec("dropout", keep=dropout_keep),
            LayerSpec("dense", units=classes),
            LayerSpec("softmax"),
        ]
    )
    return NetworkSpec(input_shape=(188, 188, 1), layers=specs)


def infer_shapes(spec: NetworkSpec) -> list[tuple]:
    """Per-layer output shapes; raises ShapeError if the stack is inconsistent."""
    shape = tuple(spec.input_shape)
    out = []
    for s in spec.layers:
        if s.kind == "conv":
            H, W, C = _need_rank3(shape, s.kind)
            if H < s.kernel or W < s.kernel:
                raise ShapeError(f"conv kernel {s.kernel} exceeds input {H}x{W}")
            shape = (H - s.kernel + 1, W - s.kernel + 1, s.filters)
        elif s.kind == "maxpool":
            H, W, C = _need_rank3(shape, s.kind)
            if H < s.window or W < s.window:
                raise ShapeError(f"pool window {s.window} exceeds input {H}x{W}")
            shape = ((H - s.window) // s.stride + 1, (W - s.window) // s.stride + 1, C)
        elif s.kind == "flatten":
            shape = (int(np.prod(shape)),)
        elif s.kind == "dense":
            if len(shape) != 1:
                raise ShapeError("dense after non-flat shape")
            shape = (s.units,)
        # relu, lrn, dropout, softmax preserve shape
        out.append(shape)
    if not spec.layers or spec.layers[-1].kind != "softmax":
        raise ShapeError("network must end in a softmax layer")
    if len(out[-1]) != 1 or out[-1][0] < 2:
        raise ShapeError("softmax output must be a vector over >= 2 classes")
    return out


def _need_rank3(shape, kind):
    if len(shape) != 3:
        raise ShapeError(f"{kind} needs (H, W, C) input, got {shape}")
    return shape


def count_parameters(spec: NetworkSpec) -> list[dict]:
    """Per-layer parameter and connection arithmetic plus a total row.

    ``params`` counts every allocated weight, (k*k*Cin + 1)*F for conv.
    ``params_per_map`` is the per-feature-map convention (k*k + 1)*F that
    folds the input fan-in, and ``connections`` multiplies it by the
    output positions; for dense layers all three coincide at
    (fan_in + 1)*units.
    """
    shapes = infer_shapes(spec)
    in_shape = tuple(spec.input_shape)
    rows = []
    for s, out_shape in zip(spec.layers, shapes):
        params = params_map = connections = 0
        if s.kind == "conv":
            cin = in_shape[2]
            params = (s.kernel * s.kernel * cin + 1) * s.filters
            params_map = (s.kernel * s.kernel + 1) * s.filters
            connections = params_map * out_shape[0] * out_shape[1]
        elif s.kind == "dense":
            fan_in = in_shape[0]
            params = params_map = connections = (fan_in + 1) * s.units
        rows.append(
            {
                "kind": s.kind,
                "params": params,
                "params_per_map": params_map,
                "connections": connections,
                "out_shape": out_shape,
            }
        )
        in_shape = out_shape
    rows.append(
        {
            "kind": "total",
            "params": sum(r["params"] for r in rows),
            "params_per_map": sum(r["params_per_map"] for r in rows),
            "connections": sum(r["connections"] for r in rows),
            "out_shape": shapes[-1],
        }
    )
    return rows


class Network:
    """A NetworkSpec instantiated with parameters, ready to train."""

    def __init__(self, spec: NetworkSpec, rng: Rng, dtype=np.float64):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.shapes = infer_shapes(spec)
        self.layers: list[L.Layer] = []
        in_shape = tuple(spec.input_shape)
        counts: dict[str, int] = {}
        for idx, s in enumerate(spec.layers):
            layer = self._build(s, in_shape, rng.child(idx))
            counts[s.kind] = counts.get(s.kind, 0) + 1
            layer.name = f"{s.kind}{counts[s.kind]}"
            self.layers.append(layer)
            in_shape = self.shapes[idx]
        if isinstance(self.layers[0], L.Conv2D):
            self.layers[0].skip_input_grad = True  # nothing upstream needs dx
        self.classes = self.shapes[-1][0]

    def _build(self, s: LayerSpec, in_shape, rng: Rng) -> L.Layer:
        if s.kind == "conv":
            cin = in_shape[2]
            layer = L.Conv2D(s.kernel, cin, s.filters, self.dtype)
            fan_in = s.kernel * s.kernel * cin
            layer.w = rng.normal(0.0, np.sqrt(2.0 / fan_in), layer.w.size).reshape(
                layer.w.shape
            ).astype(self.dtype)
            return layer
        if s.kind == "relu":
            # activations are always freshly allocated by the upstream layer
            return L.ReLU(inplace=True)
        if s.kind == "maxpool":
            return L.MaxPool(s.window, s.stride)
        if s.kind == "lrn":
            return L.LRN(s.lrn_k, s.lrn_n, s.lrn_alpha, s.lrn_beta)
        if s.kind == "flatten":
            return L.Flatten()
        if s.kind == "dense":
            fan_in = in_shape[0]
            layer = L.Dense(fan_in, s.units, self.dtype)
            layer.w = rng.normal(0.0, np.sqrt(2.0 / fan_in), layer.w.size).reshape(
                layer.w.shape
            ).astype(self.dtype)
            return layer
        if s.kind == "dropout":
            return L.Dropout(s.keep)
        if s.kind == "softmax":
            return L.Softmax()
        raise ParameterError(f"unknown layer kind {s.kind!r}")

    def trainable_layers(self) -> list[L.Layer]:
        return [l for l in self.layers if l.trainable]

    def logits(self, x: np.ndarray, training: bool = False, rng: Rng | None = None) -> np.ndarray:
        """Forward pass up to (excluding) the softmax layer."""
        a = np.ascontiguousarray(x, dtype=self.dtype)
        for i, layer in enumerate(self.layers[:-1]):
            a = layer.forward(a, training=training, rng=rng.child(i) if rng else None)
        return a

    def forward(self, x: np.ndarray, training: bool = False, rng: Rng | None = None) -> np.ndarray:
        """Class probabilities for a batch (B, H, W, C)."""
        return L.softmax(self.logits(x, training=training, rng=rng))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    def loss_and_grads(self, x: np.ndarray, labels: np.ndarray, rng: Rng | None = None) -> float:
        """Training forward + backward; leaves gradients on the layers."""
        logits = self.logits(x, training=True, rng=rng)
        loss, probs = L.softmax_cross_entropy(logits, labels)
        B, K = probs.shape
        dlogits = probs.astype(self.dtype)
        dlogits[np.arange(B), labels] -= 1.0
        dlogits /= B
        d = dlogits
        for layer in reversed(self.layers[:-1]):
            d = layer.backward(d)
        return loss

    def sgd_step(self, lr: float) -> None:
        sgd_step(self, lr)


def sgd_step(net: Network, lr: float) -> None:
    """In-place params -= lr * grads; rejects non-finite gradients."""
    if lr <= 0:
        raise ParameterError(f"learning rate must be > 0, got {lr}")
    for layer in net.trainable_layers():
        if layer.dw is None or layer.db is None:
            raise ParameterError(f"{layer.name}: no gradients (call loss_and_grads first)")
        gsum = float(layer.dw.sum()) + float(layer.db.sum())
        if not np.isfinite(gsum):
            raise DivergenceError(f"non-finite gradient in layer {layer.name}", layer=layer.name)
        layer.w -= lr * layer.dw
        layer.b -= lr * layer.db
