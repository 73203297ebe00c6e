"""Wire-protocol constants and payload encoding for the stdio server.

One JSON object per line. Request:
``{"id": uint, "method": name, "params": {...}}``. Response:
``{"id": uint, "result": {...}}`` or
``{"id": uint, "error": {"code": int, "message": str}}``.
"""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

ERR_UNKNOWN_METHOD = 1
ERR_BAD_PARAMS = 2
ERR_MODEL_FAILURE = 3
ERR_RESOURCE_EXHAUSTED = 4

METHODS = ("generate_tags", "detect_boxes", "compute_heatmap", "segment")


class BadParams(Exception):
    """Request params violate the method schema."""


@dataclass(frozen=True)
class ImageCtx:
    """What every request says about its image."""

    id: str
    path: Optional[str]
    width: int
    height: int


def parse_image(params: dict) -> ImageCtx:
    try:
        width = int(params["width"])
        height = int(params["height"])
        image_id = str(params["image_id"])
    except (KeyError, TypeError, ValueError) as exc:
        raise BadParams(f"missing or invalid image fields: {exc}") from exc
    if width < 1 or height < 1:
        raise BadParams(f"non-positive image dimensions {width}x{height}")
    path = params.get("image_path")
    return ImageCtx(id=image_id, path=None if path is None else str(path), width=width, height=height)


def heatmap_result(values: np.ndarray) -> dict:
    body = np.ascontiguousarray(values, dtype="<f4").tobytes()
    return {
        "h": int(values.shape[0]),
        "w": int(values.shape[1]),
        "data_b64": base64.b64encode(body).decode("ascii"),
    }


def boxes_result(boxes) -> dict:
    return {
        "boxes": [
            {
                "x0": float(x0),
                "y0": float(y0),
                "x1": float(x1),
                "y1": float(y1),
                "score": float(score),
            }
            for x0, y0, x1, y1, score in boxes
        ]
    }


def rle_result(bits: np.ndarray) -> dict:
    """Row-major RLE starting with a zero run (first count may be 0)."""
    flat = np.asarray(bits, dtype=bool).ravel()
    counts = []
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds)
    if flat[0]:
        counts.append(0)
    counts.extend(int(r) for r in runs)
    return {
        "size": [int(bits.shape[0]), int(bits.shape[1])],
        "counts": counts,
        "order": "row-major",
        "start": "zero",
    }


def ok_frame(request_id, result: dict) -> str:
    return json.dumps({"id": request_id, "result": result})


def error_frame(request_id, code: int, message: str) -> str:
    return json.dumps({"id": request_id, "error": {"code": code, "message": message}})
