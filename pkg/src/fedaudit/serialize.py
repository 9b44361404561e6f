"""Bit-exact binary model serialization (FLPD format).

Layout, all little-endian: magic "FLPD", version u32 (=1), tensor count u32,
then per tensor: rank u32, one u32 per dimension, values as 64-bit IEEE
floats in row-major order. ModelParams are stored as the flat tensor list
[W0, b0, W1, b1, ...].
"""
from __future__ import annotations

import struct

import numpy as np

from .nn import ModelParams

MAGIC = b"FLPD"
VERSION = 1


def write_tensors(tensors) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for arr in tensors:
        arr = np.asarray(arr, dtype=np.float64)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype("<f8", copy=False).tobytes(order="C"))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValueError("truncated FLPD data")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def read_tensors(data: bytes) -> list:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise ValueError("bad magic: not an FLPD file")
    version = r.u32()
    if version != VERSION:
        raise ValueError(f"unsupported FLPD version {version}")
    count = r.u32()
    tensors = []
    for _ in range(count):
        rank = r.u32()
        shape = tuple(r.u32() for _ in range(rank))
        n_values = 1
        for d in shape:
            n_values *= d
        raw = r.take(8 * n_values)
        tensors.append(np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape))
    if r.pos != len(data):
        raise ValueError("trailing bytes after FLPD payload")
    return tensors


def serialize_params(params: ModelParams) -> bytes:
    tensors = []
    for w, b in params.layers:
        tensors.append(w)
        tensors.append(b)
    return write_tensors(tensors)


def deserialize_params(data: bytes) -> ModelParams:
    tensors = read_tensors(data)
    if len(tensors) == 0 or len(tensors) % 2 != 0:
        raise ValueError("FLPD params need an even, positive tensor count (W, b pairs)")
    layers = []
    for i in range(0, len(tensors), 2):
        w, b = tensors[i], tensors[i + 1]
        if b.ndim != 1:
            raise ValueError(f"tensor {i + 1}: bias must be rank 1, got rank {b.ndim}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError(f"layer {i // 2}: non-finite parameter values")
        layers.append((w, b))
    return ModelParams(layers)


def save_params(params: ModelParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_params(params))


def load_params(path) -> ModelParams:
    with open(path, "rb") as fh:
        return deserialize_params(fh.read())
