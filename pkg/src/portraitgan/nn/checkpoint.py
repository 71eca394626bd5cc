"""Versioned binary parameter checkpoints.

Layout (all little-endian): magic ``PGNN``, u16 version, u32 layer count;
per layer a u32 array count, then per array a u16-prefixed UTF-8 name,
u8 ndim, ndim x u32 dims and the float64 payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from .network import ParamSet

MAGIC = b"PGNN"
VERSION = 1


def encode_params(params: ParamSet) -> bytes:
    out = [MAGIC, struct.pack("<HI", VERSION, len(params))]
    for layer in params:
        out.append(struct.pack("<I", len(layer)))
        for name in sorted(layer):
            arr = np.asarray(layer[name], dtype=np.float64)
            key = name.encode("utf-8")
            out.append(struct.pack("<H", len(key)) + key)
            out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
            out.append(arr.astype("<f8").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated checkpoint")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_params(data: bytes) -> ParamSet:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointError("bad magic: not a parameter checkpoint")
    version, n_layers = r.unpack("<HI")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    params: ParamSet = []
    for _ in range(n_layers):
        (n_arrays,) = r.unpack("<I")
        layer = {}
        for _ in range(n_arrays):
            (klen,) = r.unpack("<H")
            name = r.take(klen).decode("utf-8")
            (ndim,) = r.unpack("<B")
            shape = r.unpack(f"<{ndim}I") if ndim else ()
            count = int(np.prod(shape)) if shape else 1
            layer[name] = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)
        params.append(layer)
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after checkpoint")
    return params


def save_params(params: ParamSet, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(encode_params(params))
    return path


def load_params(path: str | Path) -> ParamSet:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    return decode_params(path.read_bytes())
