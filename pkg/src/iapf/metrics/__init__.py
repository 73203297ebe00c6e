"""Evaluation suite: semantic-mask measures and instance average precision."""
from .ap import (
    COCO_THRESHOLDS,
    CisScores,
    DetectionRecord,
    average_precision,
    instance_ap,
)
from .cos import e_measure_mean, mae, s_measure, weighted_f_measure
from .dataset import (
    CosScores,
    DatasetReport,
    evaluate_boxes,
    evaluate_cis,
    evaluate_cos,
    load_instances,
    write_report_tsv,
)

__all__ = [
    "COCO_THRESHOLDS",
    "CisScores",
    "CosScores",
    "DatasetReport",
    "DetectionRecord",
    "average_precision",
    "e_measure_mean",
    "evaluate_boxes",
    "evaluate_cis",
    "evaluate_cos",
    "instance_ap",
    "load_instances",
    "mae",
    "s_measure",
    "weighted_f_measure",
    "write_report_tsv",
]
