"""Bit-exact persistence for heatmaps and masks.

Heatmap file format ("IAHM"): magic bytes ``IAHM``, height and width as
32-bit little-endian unsigned ints, then height*width little-endian IEEE-754
float32 values, row-major.

Binary masks persist as 8-bit grayscale PNG (0 background, 255 foreground)
or as RLE JSON ``{"size": [H, W], "counts": [...], "order": "row-major",
"start": "zero"}``.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .core import BinaryMask, GrayMask, Heatmap, RleMask, rle_decode, rle_encode
from .errors import FixtureCorrupt

IAHM_MAGIC = b"IAHM"
_HEADER = struct.Struct("<4sII")


def heatmap_to_bytes(h: Heatmap) -> bytes:
    body = np.asarray(h.values, dtype="<f4").tobytes()
    return _HEADER.pack(IAHM_MAGIC, h.height, h.width) + body


def heatmap_body_bytes(h: Heatmap) -> bytes:
    """Payload floats only (the wire protocol ships the header fields as JSON)."""
    return np.asarray(h.values, dtype="<f4").tobytes()


def heatmap_from_bytes(raw: bytes, source: str = "<bytes>") -> Heatmap:
    if len(raw) < _HEADER.size:
        raise FixtureCorrupt(source, "truncated heatmap header")
    magic, height, width = _HEADER.unpack_from(raw)
    if magic != IAHM_MAGIC:
        raise FixtureCorrupt(source, f"bad magic {magic!r}")
    if height < 1 or width < 1:
        raise FixtureCorrupt(source, f"non-positive dimensions {height}x{width}")
    body = raw[_HEADER.size :]
    expected = height * width * 4
    if len(body) != expected:
        raise FixtureCorrupt(source, f"payload is {len(body)} bytes, expected {expected}")
    values = np.frombuffer(body, dtype="<f4").reshape(height, width)
    if not np.all(np.isfinite(values)):
        raise FixtureCorrupt(source, "non-finite heatmap values")
    return Heatmap(values)


def heatmap_from_body(body: bytes, height: int, width: int, source: str = "<wire>") -> Heatmap:
    if height < 1 or width < 1:
        raise FixtureCorrupt(source, f"non-positive dimensions {height}x{width}")
    expected = height * width * 4
    if len(body) != expected:
        raise FixtureCorrupt(source, f"payload is {len(body)} bytes, expected {expected}")
    values = np.frombuffer(body, dtype="<f4").reshape(height, width)
    if not np.all(np.isfinite(values)):
        raise FixtureCorrupt(source, "non-finite heatmap values")
    return Heatmap(values)


def write_heatmap(path, h: Heatmap) -> None:
    Path(path).write_bytes(heatmap_to_bytes(h))


def read_heatmap(path) -> Heatmap:
    return heatmap_from_bytes(Path(path).read_bytes(), source=str(path))


def write_mask_png(path, mask: BinaryMask) -> None:
    img = Image.fromarray(np.where(mask.bits, 255, 0).astype(np.uint8), mode="L")
    img.save(path, format="PNG")


def read_mask_png(path) -> BinaryMask:
    arr = np.asarray(Image.open(path).convert("L"))
    return BinaryMask(arr >= 128)


def read_gray_png(path) -> GrayMask:
    arr = np.asarray(Image.open(path).convert("L"))
    return GrayMask(arr.astype(np.float64) / 255.0)


def write_rle_json(path, mask: BinaryMask) -> None:
    obj = rle_encode(mask).to_json_obj()
    Path(path).write_text(json.dumps(obj, sort_keys=True), encoding="utf-8")


def read_rle_json(path) -> BinaryMask:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        rle = RleMask.from_json_obj(obj)
    except (ValueError, KeyError, TypeError) as exc:
        raise FixtureCorrupt(str(path), f"bad RLE JSON: {exc}") from exc
    return rle_decode(rle)
