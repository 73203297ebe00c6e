"""Stdio request loop.

One request is in flight at a time (the client guarantees it; the loop is
single-threaded anyway). A malformed frame gets a typed error response and
the loop keeps serving; only EOF ends it.
"""
from __future__ import annotations

import json
import sys

from .adapters import Adapters
from .protocol import (
    ERR_BAD_PARAMS,
    ERR_MODEL_FAILURE,
    ERR_RESOURCE_EXHAUSTED,
    ERR_UNKNOWN_METHOD,
    METHODS,
    BadParams,
    boxes_result,
    error_frame,
    heatmap_result,
    ok_frame,
    parse_image,
    rle_result,
)


def _require(params: dict, key: str):
    if key not in params:
        raise BadParams(f"missing param {key!r}")
    return params[key]


def _parse_points(params: dict, key: str) -> list[tuple[int, int]]:
    raw = params.get(key, [])
    if not isinstance(raw, list):
        raise BadParams(f"{key} must be an array of [x, y] pairs")
    out = []
    for entry in raw:
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise BadParams(f"{key} must be an array of [x, y] pairs")
        out.append((int(entry[0]), int(entry[1])))
    return out


def _parse_box(params: dict) -> tuple[float, float, float, float, float]:
    raw = _require(params, "box")
    try:
        box = (
            float(raw["x0"]),
            float(raw["y0"]),
            float(raw["x1"]),
            float(raw["y1"]),
            float(raw.get("score", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise BadParams(f"bad box: {exc}") from exc
    if not box[0] < box[2] or not box[1] < box[3]:
        raise BadParams("box is empty")
    return box


def handle_request(adapters: Adapters, method: str, params: dict) -> dict:
    image = parse_image(params)
    if method == "generate_tags":
        caption, fg, bg = adapters.tagger.tags(
            image,
            str(_require(params, "prompt")),
            str(params.get("fg_query", "")),
            str(params.get("bg_query", "")),
        )
        return {"caption": caption, "fg_tags": list(fg), "bg_tags": list(bg)}
    if method == "detect_boxes":
        return boxes_result(adapters.detector.boxes(image, str(_require(params, "tag"))))
    if method == "compute_heatmap":
        values = adapters.heatmapper.heatmap(image, str(_require(params, "tag")))
        if values.shape != (image.height, image.width):
            raise RuntimeError(
                f"heatmap adapter produced {values.shape}, image is "
                f"{image.height}x{image.width}"
            )
        return heatmap_result(values)
    if method == "segment":
        mask = adapters.segmenter.mask(
            image,
            _parse_box(params),
            _parse_points(params, "fg_points"),
            _parse_points(params, "bg_points"),
        )
        if mask.shape != (image.height, image.width):
            raise RuntimeError(
                f"segmenter adapter produced {mask.shape}, image is "
                f"{image.height}x{image.width}"
            )
        return rle_result(mask)
    raise AssertionError(method)


def answer_line(adapters: Adapters, line: str) -> str:
    """One frame in, one frame out; never raises."""
    request_id = None
    try:
        msg = json.loads(line)
    except ValueError:
        return error_frame(None, ERR_BAD_PARAMS, "frame is not valid JSON")
    if isinstance(msg, dict):
        candidate = msg.get("id")
        if isinstance(candidate, int) and not isinstance(candidate, bool):
            request_id = candidate
    if not isinstance(msg, dict):
        return error_frame(request_id, ERR_BAD_PARAMS, "frame must be a JSON object")
    method = msg.get("method")
    if not isinstance(method, str) or method not in METHODS:
        return error_frame(request_id, ERR_UNKNOWN_METHOD, f"unknown method {method!r}")
    params = msg.get("params")
    if not isinstance(params, dict):
        return error_frame(request_id, ERR_BAD_PARAMS, "params must be an object")
    try:
        result = handle_request(adapters, method, params)
    except BadParams as exc:
        return error_frame(request_id, ERR_BAD_PARAMS, str(exc))
    except MemoryError:
        return error_frame(request_id, ERR_RESOURCE_EXHAUSTED, "out of memory")
    except Exception as exc:  # model failure must not kill the stream
        return error_frame(request_id, ERR_MODEL_FAILURE, f"{type(exc).__name__}: {exc}")
    return ok_frame(request_id, result)


def serve(adapters: Adapters, stdin=None, stdout=None) -> None:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(answer_line(adapters, line) + "\n")
        stdout.flush()
