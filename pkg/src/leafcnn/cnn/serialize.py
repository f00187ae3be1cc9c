"""Versioned binary container for trained parameters.

Layout (all little-endian):
  magic "CAML" | u32 version | u32 model kind | u32 entry count
  then per entry:
  u32 layer kind tag | u16 name length | name utf-8 | u32 rank |
  u32 extents[rank] | float64 data[prod(extents)]
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import PipelineError

MAGIC = b"CAML"
VERSION = 1

MODEL_CNN = 1
MODEL_SVM = 2
MODEL_MLP = 3

KIND_TAGS = {
    "conv": 1,
    "dense": 2,
    "weights": 10,
    "bias": 11,
}


def save_entries(path: str | Path, model_kind: int, entries: list[tuple[int, str, np.ndarray]]) -> None:
    """Write (kind_tag, name, array) entries to the container."""
    buf = [MAGIC, struct.pack("<III", VERSION, model_kind, len(entries))]
    for tag, name, arr in entries:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        nb = name.encode("utf-8")
        buf.append(struct.pack("<IH", tag, len(nb)))
        buf.append(nb)
        buf.append(struct.pack("<I", arr.ndim))
        buf.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.append(arr.tobytes())
    Path(path).write_bytes(b"".join(buf))


def load_entries(path: str | Path) -> tuple[int, list[tuple[int, str, np.ndarray]]]:
    """Read (model_kind, entries) back; validates magic and version."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise PipelineError(f"{path}: not a parameter container (bad magic)")
    version, model_kind, count = struct.unpack_from("<III", data, 4)
    if version != VERSION:
        raise PipelineError(f"{path}: unsupported container version {version}")
    off = 16
    entries = []
    for _ in range(count):
        tag, nlen = struct.unpack_from("<IH", data, off)
        off += 6
        name = data[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{rank}I", data, off)
        off += 4 * rank
        n = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(shape).copy()
        off += 8 * n
        entries.append((tag, name, arr))
    return model_kind, entries


def save_network(path: str | Path, net) -> None:
    """Persist every trainable layer's weights and bias."""
    entries = []
    for layer in net.trainable_layers():
        tag = KIND_TAGS["conv" if layer.name.startswith("conv") else "dense"]
        entries.append((tag, f"{layer.name}.w", layer.w))
        entries.append((tag, f"{layer.name}.b", layer.b))
    save_entries(path, MODEL_CNN, entries)


def load_network(path: str | Path, net) -> None:
    """Load parameters into a Network built from the matching spec."""
    model_kind, entries = load_entries(path)
    if model_kind != MODEL_CNN:
        raise PipelineError(f"{path}: container holds model kind {model_kind}, expected CNN")
    by_name = {name: arr for _, name, arr in entries}
    for layer in net.trainable_layers():
        for attr in ("w", "b"):
            key = f"{layer.name}.{attr}"
            if key not in by_name:
                raise PipelineError(f"{path}: missing entry {key}")
            arr = by_name[key]
            target = getattr(layer, attr)
            if tuple(arr.shape) != tuple(target.shape):
                raise PipelineError(
                    f"{path}: {key} shape {arr.shape} != expected {target.shape}"
                )
            setattr(layer, attr, arr.astype(net.dtype))
