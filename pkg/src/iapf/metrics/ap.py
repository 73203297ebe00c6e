"""COCO-style average precision for instance masks and boxes.

Predictions are matched greedily in descending score order to the unmatched
ground truth with the highest IoU; a match counts when that IoU clears the
threshold. The precision-recall curve is summarized with 101-point
interpolation. AP averages the thresholds 0.50:0.05:0.95; AP50/AP75 are the
single-threshold values.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from ..core import BBox, BinaryMask, box_iou, mask_iou

COCO_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
_RECALL_POINTS = np.linspace(0.0, 1.0, 101)

Payload = Union[BinaryMask, BBox]


@dataclass(frozen=True)
class DetectionRecord:
    """One scored prediction for one image; mask or box payload."""

    image_id: str
    score: float
    mask: Optional[BinaryMask] = None
    box: Optional[BBox] = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class CisScores:
    ap: float
    ap50: float
    ap75: float


def _payload(record: DetectionRecord, iou_kind: str) -> Payload:
    if iou_kind == "mask":
        if record.mask is None:
            raise ValueError("mask-IoU evaluation needs mask payloads")
        return record.mask
    if iou_kind == "box":
        if record.box is None:
            raise ValueError("box-IoU evaluation needs box payloads")
        return record.box
    raise ValueError(f"unknown iou_kind {iou_kind!r}")


def _iou(a: Payload, b: Payload, iou_kind: str) -> float:
    if iou_kind == "mask":
        return mask_iou(a, b)
    return box_iou(a, b)


def _iou_tables(
    preds: Sequence[DetectionRecord],
    gts: Mapping[str, Sequence[Payload]],
    iou_kind: str,
) -> tuple[list[int], dict[str, np.ndarray], dict[str, list[int]]]:
    """Global score-ordered pred indices plus per-image IoU matrices."""
    order = sorted(
        range(len(preds)), key=lambda i: (-preds[i].score, preds[i].image_id, i)
    )
    by_image: dict[str, list[int]] = {}
    for idx in order:
        by_image.setdefault(preds[idx].image_id, []).append(idx)
    tables = {}
    for image_id, idxs in by_image.items():
        gt_list = gts.get(image_id, [])
        table = np.zeros((len(idxs), len(gt_list)), dtype=np.float64)
        for row, pred_idx in enumerate(idxs):
            payload = _payload(preds[pred_idx], iou_kind)
            for col, gt_payload in enumerate(gt_list):
                table[row, col] = _iou(payload, gt_payload, iou_kind)
        tables[image_id] = table
    return order, tables, by_image


def _ap_at_threshold(
    preds: Sequence[DetectionRecord],
    order: list[int],
    tables: dict[str, np.ndarray],
    by_image: dict[str, list[int]],
    total_gt: int,
    threshold: float,
) -> float:
    if total_gt == 0:
        return 1.0 if not preds else 0.0
    if not preds:
        return 0.0
    is_tp: dict[int, bool] = {}
    for image_id, idxs in by_image.items():
        table = tables[image_id]
        matched = [False] * table.shape[1]
        for row, pred_idx in enumerate(idxs):
            best_col = -1
            best_iou = 0.0
            for col in range(table.shape[1]):
                if matched[col]:
                    continue
                if table[row, col] > best_iou:
                    best_iou = table[row, col]
                    best_col = col
            if best_col >= 0 and best_iou >= threshold:
                matched[best_col] = True
                is_tp[pred_idx] = True
            else:
                is_tp[pred_idx] = False
    flags = np.array([is_tp[idx] for idx in order], dtype=np.float64)
    tp_cum = np.cumsum(flags)
    fp_cum = np.cumsum(1.0 - flags)
    recall = tp_cum / total_gt
    precision = tp_cum / (tp_cum + fp_cum)
    # monotone precision envelope from the right, then sample at 101 recalls
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    hits = np.searchsorted(recall, _RECALL_POINTS, side="left")
    sampled = np.where(hits < len(precision), precision[np.minimum(hits, len(precision) - 1)], 0.0)
    return float(sampled.mean())


def average_precision(
    preds: Sequence[DetectionRecord],
    gts: Mapping[str, Sequence[Payload]],
    iou_kind: str = "mask",
    threshold: float = 0.5,
) -> float:
    """AP at a single IoU threshold."""
    order, tables, by_image = _iou_tables(preds, gts, iou_kind)
    total_gt = sum(len(v) for v in gts.values())
    return _ap_at_threshold(preds, order, tables, by_image, total_gt, threshold)


def instance_ap(
    preds: Sequence[DetectionRecord],
    gts: Mapping[str, Sequence[Payload]],
    iou_kind: str = "mask",
) -> CisScores:
    """COCO-style AP over thresholds 0.50:0.05:0.95 plus AP50 and AP75."""
    order, tables, by_image = _iou_tables(preds, gts, iou_kind)
    total_gt = sum(len(v) for v in gts.values())
    per_threshold = {
        t: _ap_at_threshold(preds, order, tables, by_image, total_gt, t)
        for t in COCO_THRESHOLDS
    }
    return CisScores(
        ap=float(np.mean([per_threshold[t] for t in COCO_THRESHOLDS])),
        ap50=per_threshold[0.5],
        ap75=per_threshold[0.75],
    )
