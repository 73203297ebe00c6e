"""Prompt planning for fixture recording.

Recording must write a segment mask for every prompt triplet the engine
will derive from the recorded boxes and heatmaps, keyed by the engine's
triplet digest. This module mirrors the engine's default box preparation
(clamp, score filter, NMS at IoU 0.9, whole-image fallback) and point
sampling (per-box min-max normalization, threshold 0.9, caps 3 fg / 6 bg,
spacing 0.05 of the box diagonal) with identical float operations, so the
digests coincide. The cross-package conformance test (record ->
`iapf fixture validate` -> `iapf run --backend fixture:`) guards this
contract.

Boxes are (x0, y0, x1, y1, score) tuples; points are (x, y) int pairs.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

TAU = 0.9
K_FG = 3
K_BG = 6
D_MIN_FRAC = 0.05
NMS_IOU = 0.9
MIN_BOX_SCORE = 0.0


@dataclass(frozen=True)
class PlannedTriplet:
    box: tuple[float, float, float, float, float]
    fg_points: tuple[tuple[int, int], ...]
    bg_points: tuple[tuple[int, int], ...]


def triplet_digest(triplet: PlannedTriplet) -> str:
    x0, y0, x1, y1, _ = triplet.box
    payload = {
        "box": [f"{round(c, 2):.2f}" for c in (x0, y0, x1, y1)],
        "fg": sorted([x, y] for x, y in triplet.fg_points),
        "bg": sorted([x, y] for x, y in triplet.bg_points),
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _box_iou(a, b) -> float:
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def prepare_boxes(raw: Sequence[tuple], width: int, height: int) -> list[tuple]:
    kept = []
    for x0, y0, x1, y1, score in raw:
        if score < MIN_BOX_SCORE:
            continue
        cx0 = min(max(x0, 0.0), float(width))
        cy0 = min(max(y0, 0.0), float(height))
        cx1 = min(max(x1, 0.0), float(width))
        cy1 = min(max(y1, 0.0), float(height))
        if cx1 - cx0 < 1.0 or cy1 - cy0 < 1.0:
            continue
        kept.append((cx0, cy0, cx1, cy1, score))
    kept.sort(key=lambda b: (-b[4], b[1], b[0], b[3], b[2]))
    survivors: list[tuple] = []
    for box in kept:
        if all(_box_iou(box, other) < NMS_IOU for other in survivors):
            survivors.append(box)
    if not survivors:
        survivors = [(0.0, 0.0, float(width), float(height), 0.0)]
    return survivors


def _pixel_ranges(box) -> tuple[range, range]:
    xs = range(math.ceil(box[0] - 0.5), math.ceil(box[2] - 0.5))
    ys = range(math.ceil(box[1] - 0.5), math.ceil(box[3] - 0.5))
    return xs, ys


def _candidates(values: np.ndarray, box) -> Optional[list[tuple[float, int, int]]]:
    """(confidence, y, x) triples at normalized confidence >= TAU, sorted the
    engine's way; None signals a constant region."""
    xs, ys = _pixel_ranges(box)
    block = values[ys.start : ys.stop, xs.start : xs.stop].astype(np.float64)
    lo = float(block.min())
    hi = float(block.max())
    if hi == lo:
        return None
    norm = (block - lo) / (hi - lo)
    out = []
    for iy in range(norm.shape[0]):
        for ix in range(norm.shape[1]):
            conf = float(norm[iy, ix])
            if conf >= TAU:
                out.append((conf, ys.start + iy, xs.start + ix))
    out.sort(key=lambda t: (-t[0], t[1], t[2]))
    return out


def _spaced(candidates, cap: int, d_min: float) -> list[tuple[int, int]]:
    chosen: list[tuple[int, int]] = []
    for _, y, x in candidates:
        if len(chosen) >= cap:
            break
        if all(math.hypot(x - qx, y - qy) >= d_min for qx, qy in chosen):
            chosen.append((x, y))
    return chosen


def sample_points(
    fg_values: np.ndarray, bg_values: Sequence[np.ndarray], box
) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    d_min = D_MIN_FRAC * math.hypot(box[2] - box[0], box[3] - box[1])
    fg_candidates = _candidates(fg_values, box)
    if not fg_candidates:  # constant region (None) or empty
        xs, ys = _pixel_ranges(box)
        block = fg_values[ys.start : ys.stop, xs.start : xs.stop].astype(np.float64)
        idx = int(np.argmax(block))
        fg = [(xs.start + idx % block.shape[1], ys.start + idx // block.shape[1])]
    else:
        fg = _spaced(fg_candidates, K_FG, d_min)

    best: dict[tuple[int, int], float] = {}
    for values in bg_values:
        candidates = _candidates(values, box)
        if candidates is None:
            continue
        for conf, y, x in candidates:
            key = (x, y)
            if key not in best or conf > best[key]:
                best[key] = conf
    taken = set(fg)
    merged = [(conf, y, x) for (x, y), conf in best.items() if (x, y) not in taken]
    merged.sort(key=lambda t: (-t[0], t[1], t[2]))
    bg = _spaced(merged, K_BG, d_min)
    return fg, bg


def plan_triplets(
    raw_boxes: Sequence[tuple],
    fg_values: np.ndarray,
    bg_values: Sequence[np.ndarray],
    width: int,
    height: int,
) -> list[PlannedTriplet]:
    triplets = []
    for box in prepare_boxes(raw_boxes, width, height):
        fg, bg = sample_points(fg_values, bg_values, box)
        triplets.append(
            PlannedTriplet(box=box, fg_points=tuple(fg), bg_points=tuple(bg))
        )
    return triplets
