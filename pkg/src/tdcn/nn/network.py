"""A sequential network instantiated from an :class:`Architecture`."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..arch import Architecture, InvalidArchitecture, LayerKind, forward_shape, validate
from .layers import (DTYPE, AvgPool, BatchNorm, Conv2D, Dense, Dropout, Flatten,
                     Layer, MaxPool, softmax)

MAGIC = b"TDCNW"
VERSION = 1
# parameter order inside the weight file, per layer
_ORDER = ("W", "b", "gamma", "beta", "mean", "var")


class WeightFileError(ValueError):
    pass


def build_layer(spec, in_shape, rng, terminal: bool) -> Layer:
    kind = spec.kind
    if kind is LayerKind.C2D:
        return Conv2D(in_shape[-1], spec.filters, spec.kernel, rng)
    if kind is LayerKind.MP:
        return MaxPool(spec.pool)
    if kind is LayerKind.AP:
        return AvgPool(spec.pool)
    if kind is LayerKind.BN:
        return BatchNorm(in_shape[-1])
    if kind is LayerKind.DO:
        return Dropout(spec.rate)
    if kind is LayerKind.F:
        return Flatten()
    if kind is LayerKind.DE:
        return Dense(in_shape[0], spec.units, rng, relu=not terminal)
    raise AssertionError(kind)


class Network:
    """Layers, their parameters and BN running statistics.

    ReLU follows every C2D and every DE except the last DE, whose output
    is the logit vector (possibly followed by BN or DO).
    """

    def __init__(self, arch: Architecture, rng: np.random.Generator | int | None = None):
        violations = validate(arch)
        if violations:
            raise InvalidArchitecture(violations)
        rng = np.random.default_rng(rng)
        self.arch = arch
        self.shapes = forward_shape(arch)
        last_de = max(i for i, l in enumerate(arch.layers) if l.kind is LayerKind.DE)
        self.layers: list[Layer] = []
        prev = arch.input_shape
        for i, spec in enumerate(arch.layers):
            self.layers.append(build_layer(spec, prev, rng, terminal=i == last_de))
            prev = self.shapes[i]

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        x = np.asarray(x, dtype=DTYPE)
        if x.shape[1:] != self.arch.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} does not match {self.arch.input_shape}")
        for layer, shape in zip(self.layers, self.shapes):
            x = layer.forward(x, train=train, rng=rng)
            assert x.shape[1:] == shape, (x.shape, shape)
        return x

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def parameters(self):
        """Yield ``(layer index, name, array)`` for every trainable array."""
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params.items():
                yield i, name, arr

    def gradients(self):
        for i, layer in enumerate(self.layers):
            for name in layer.params:
                yield i, name, layer.grads[name]

    def predict_proba(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        x = np.asarray(x, dtype=DTYPE)
        out = [softmax(self.forward(x[s:s + batch_size], train=False))
               for s in range(0, len(x), batch_size)]
        return np.concatenate(out, axis=0)

    def state(self) -> list[dict[str, np.ndarray]]:
        return [{**{k: v.copy() for k, v in l.params.items()},
                 **{k: v.copy() for k, v in l.buffers.items()}} for l in self.layers]

    def load_state(self, state: list[dict[str, np.ndarray]]) -> None:
        for layer, saved in zip(self.layers, state):
            for k in layer.params:
                layer.params[k][...] = saved[k]
            for k in layer.buffers:
                layer.buffers[k] = saved[k].copy()

    def save(self, path) -> None:
        from ..io import atomic_write_bytes
        atomic_write_bytes(path, self.to_bytes())

    def to_bytes(self) -> bytes:
        arch_json = json.dumps(self.arch.to_dict(), separators=(",", ":")).encode()
        chunks = [MAGIC, struct.pack("<II", VERSION, len(arch_json)), arch_json]
        for layer in self.layers:
            arrays = {**layer.params, **layer.buffers}
            for name in _ORDER:
                if name in arrays:
                    chunks.append(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())
        return b"".join(chunks)

    @classmethod
    def load(cls, path) -> "Network":
        return cls.from_bytes(Path(path).read_bytes())

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Network":
        from ..arch import deserialize

        head = len(MAGIC) + 8
        if blob[:len(MAGIC)] != MAGIC or len(blob) < head:
            raise WeightFileError("not a weight file")
        version, n = struct.unpack("<II", blob[len(MAGIC):head])
        if version != VERSION:
            raise WeightFileError(f"unsupported weight file version {version}")
        arch = deserialize(blob[head:head + n].decode())
        net = cls(arch, rng=0)
        offset = head + n
        for layer in net.layers:
            for name in _ORDER:
                store = layer.params if name in layer.params else layer.buffers
                if name not in store:
                    continue
                size = store[name].size * 8
                if offset + size > len(blob):
                    raise WeightFileError("weight file is truncated")
                arr = np.frombuffer(blob, dtype="<f8", count=store[name].size, offset=offset)
                store[name][...] = arr.reshape(store[name].shape)
                offset += size
        if offset != len(blob):
            raise WeightFileError(f"{len(blob) - offset} trailing bytes in weight file")
        return net
