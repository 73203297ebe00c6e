"""Directory-level evaluation: per-image scores plus dataset means.

Prediction/ground-truth layout:
  * COS: ``<id>.png`` 8-bit grayscale per side; ground truth binarized at
    128/255.
  * CIS: ``<id>.inst.json`` per side holding
    ``{"size": [H, W], "instances": [{"score": float, "rle": <RleMask>}]}``
    (ground-truth scores are ignored).

TSV output: header ``id<TAB>s_alpha<TAB>f_beta_w<TAB>mae<TAB>e_phi`` (COS)
or ``id<TAB>ap<TAB>ap50<TAB>ap75`` (CIS), one row per image sorted by id,
and a final MEAN row. The CIS MEAN row is the dataset-pooled AP.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..core import BinaryMask, RleMask, rle_decode, tight_box
from ..errors import FixtureCorrupt, MissingGroundTruth, MissingPrediction
from ..io import read_gray_png, read_mask_png
from .ap import CisScores, DetectionRecord, average_precision, instance_ap
from .cos import e_measure_mean, mae, s_measure, weighted_f_measure

COS_COLUMNS = ("s_alpha", "f_beta_w", "mae", "e_phi")
CIS_COLUMNS = ("ap", "ap50", "ap75")


@dataclass(frozen=True)
class CosScores:
    s_alpha: float
    f_beta_w: float
    mae: float
    e_phi_mean: float

    def as_row(self) -> tuple[float, ...]:
        return (self.s_alpha, self.f_beta_w, self.mae, self.e_phi_mean)


@dataclass(frozen=True)
class DatasetReport:
    mode: str
    rows: tuple[tuple[str, tuple[float, ...]], ...]  # (image id, column values)
    mean: tuple[float, ...]

    def columns(self) -> tuple[str, ...]:
        return COS_COLUMNS if self.mode == "cos" else CIS_COLUMNS


def _ids_with_suffix(directory: Path, suffix: str) -> list[str]:
    return sorted(p.name[: -len(suffix)] for p in directory.glob(f"*{suffix}"))


def _check_id_sets(pred_ids: list[str], gt_ids: list[str]) -> None:
    missing_pred = sorted(set(gt_ids) - set(pred_ids))
    if missing_pred:
        raise MissingPrediction(missing_pred[0])
    missing_gt = sorted(set(pred_ids) - set(gt_ids))
    if missing_gt:
        raise MissingGroundTruth(missing_gt[0])


def load_instances(path: Path) -> list[tuple[float, BinaryMask]]:
    """Read an inst.json file into (score, mask) pairs."""
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
        height, width = int(obj["size"][0]), int(obj["size"][1])
        entries = obj["instances"]
    except (ValueError, KeyError, TypeError) as exc:
        raise FixtureCorrupt(str(path), f"bad instance payload: {exc}") from exc
    out = []
    for entry in entries:
        try:
            score = float(entry.get("score", 1.0))
            mask = rle_decode(RleMask.from_json_obj(entry["rle"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise FixtureCorrupt(str(path), f"bad instance entry: {exc}") from exc
        if (mask.height, mask.width) != (height, width):
            raise FixtureCorrupt(
                str(path), f"instance mask {mask.height}x{mask.width} != size {height}x{width}"
            )
        out.append((score, mask))
    return out


def evaluate_cos(pred_dir, gt_dir) -> DatasetReport:
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    gt_ids = _ids_with_suffix(gt_dir, ".png")
    pred_ids = _ids_with_suffix(pred_dir, ".png")
    _check_id_sets(pred_ids, gt_ids)
    rows = []
    for image_id in gt_ids:
        gt = read_mask_png(gt_dir / f"{image_id}.png")
        pred = read_gray_png(pred_dir / f"{image_id}.png")
        scores = CosScores(
            s_alpha=s_measure(pred, gt),
            f_beta_w=weighted_f_measure(pred, gt),
            mae=mae(pred, gt),
            e_phi_mean=e_measure_mean(pred, gt),
        )
        rows.append((image_id, scores.as_row()))
    n = len(rows)
    mean = tuple(sum(r[1][k] for r in rows) / n for k in range(len(COS_COLUMNS)))
    return DatasetReport(mode="cos", rows=tuple(rows), mean=mean)


def _cis_inputs(pred_dir: Path, gt_dir: Path):
    gt_ids = _ids_with_suffix(gt_dir, ".inst.json")
    pred_ids = _ids_with_suffix(pred_dir, ".inst.json")
    _check_id_sets(pred_ids, gt_ids)
    preds: list[DetectionRecord] = []
    gts: dict[str, list[BinaryMask]] = {}
    for image_id in gt_ids:
        gts[image_id] = [m for _, m in load_instances(gt_dir / f"{image_id}.inst.json")]
        for score, mask in load_instances(pred_dir / f"{image_id}.inst.json"):
            preds.append(DetectionRecord(image_id=image_id, score=score, mask=mask))
    return gt_ids, preds, gts


def evaluate_cis(pred_dir, gt_dir) -> DatasetReport:
    gt_ids, preds, gts = _cis_inputs(Path(pred_dir), Path(gt_dir))
    rows = []
    for image_id in gt_ids:
        image_preds = [p for p in preds if p.image_id == image_id]
        scores = instance_ap(image_preds, {image_id: gts[image_id]}, iou_kind="mask")
        rows.append((image_id, (scores.ap, scores.ap50, scores.ap75)))
    pooled: CisScores = instance_ap(preds, gts, iou_kind="mask")
    return DatasetReport(
        mode="cis", rows=tuple(rows), mean=(pooled.ap, pooled.ap50, pooled.ap75)
    )


def evaluate_boxes(pred_dir, gt_dir, iou_threshold: float = 0.75) -> float:
    """Box AP at one IoU threshold, boxes taken as tight boxes of the instances."""
    gt_ids, mask_preds, mask_gts = _cis_inputs(Path(pred_dir), Path(gt_dir))
    preds = []
    for p in mask_preds:
        box = tight_box(p.mask, score=p.score)
        if box is not None:
            preds.append(DetectionRecord(image_id=p.image_id, score=p.score, box=box))
    gts = {
        image_id: [b for b in (tight_box(m) for m in masks) if b is not None]
        for image_id, masks in mask_gts.items()
    }
    return average_precision(preds, gts, iou_kind="box", threshold=iou_threshold)


def write_report_tsv(path, report: DatasetReport) -> None:
    lines = ["\t".join(("id",) + report.columns())]
    for image_id, values in report.rows:
        lines.append("\t".join([image_id] + [f"{v:.6f}" for v in values]))
    lines.append("\t".join(["MEAN"] + [f"{v:.6f}" for v in report.mean]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
