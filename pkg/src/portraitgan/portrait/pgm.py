"""Binary PGM (P5, maxval 255) portrait files."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from ..dataset import BehaviorClass
from ..errors import PgmError
from .transforms import SIDE, Portrait, PortraitKind

_WS = b" \t\r\n"


def encode_pgm(pixels: np.ndarray) -> bytes:
    px = np.asarray(pixels, dtype=np.uint8)
    h, w = px.shape
    return b"P5\n%d %d\n255\n" % (w, h) + px.tobytes()


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos] in _WS:
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos] not in _WS and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PgmError("malformed header: unexpected end of file")
        tokens.append(data[start:pos])
    if pos >= len(data) or data[pos] not in _WS:
        raise PgmError("malformed header: missing separator before raster")
    return tokens, pos + 1


def decode_pgm(data: bytes) -> np.ndarray:
    tokens, offset = _header_tokens(data, 4)
    if tokens[0] != b"P5":
        raise PgmError(f"not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise PgmError("malformed header: non-integer field") from None
    if maxval != 255:
        raise PgmError(f"unsupported maxval {maxval}; only 255 is accepted")
    if width <= 0 or height <= 0:
        raise PgmError(f"bad dimensions {width}x{height}")
    raster = data[offset:offset + width * height]
    if len(raster) != width * height:
        raise PgmError(f"truncated payload: expected {width * height} bytes, got {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(portrait: Portrait, directory: str | Path) -> Path:
    path = Path(directory) / f"{portrait.name}.pgm"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_pgm(portrait.pixels))
    return path


_NAME = re.compile(r"^(?P<kind>[A-Za-z]+)_(?P<label>[A-Za-z]+)_(?P<source>.*)_(?P<index>\d+)$")


def read_pgm(path: str | Path) -> Portrait:
    """Load a portrait; kind, label, source id and index come from the filename."""
    path = Path(path)
    m = _NAME.match(path.stem)
    if m is None:
        raise PgmError(f"{path.name}: filename does not match <kind>_<label>_<source_id>_<index>.pgm")
    try:
        kind = PortraitKind(m["kind"])
        label = BehaviorClass[m["label"]]
    except (ValueError, KeyError):
        raise PgmError(f"{path.name}: unknown kind or label") from None
    pixels = decode_pgm(path.read_bytes())
    if pixels.shape != (SIDE, SIDE):
        raise PgmError(f"{path.name}: expected {SIDE}x{SIDE}, got {pixels.shape[1]}x{pixels.shape[0]}")
    return Portrait(pixels, kind, label, m["source"], int(m["index"]))


def read_pgm_dir(directory: str | Path) -> list[Portrait]:
    return [read_pgm(p) for p in sorted(Path(directory).glob("*.pgm"))]
