"""Instance-aware prompting engine for camouflaged object segmentation.

Converts per-image tags and model-backend outputs (boxes, heatmaps,
promptable-segmenter masks) into instance masks and a voted semantic mask,
and evaluates results with the standard COS/CIS metric suite.
"""
from .core import (
    BBox,
    BinaryMask,
    BoxSet,
    GrayMask,
    Heatmap,
    ImageRef,
    InstanceMaskStack,
    RleMask,
    box_iou,
    clamp_box,
    mask_iou,
    rle_decode,
    rle_encode,
)
from .generator import GeneratorConfig, build_triplets, generate_instance_masks, prepare_boxes
from .pipeline import PipelineConfig, RunArtifact, make_synthetic_dataset, run_dataset, run_image
from .sfmbp import Point, PointPrompts, SamplingConfig, normalize_in_box, sample_bg_points, sample_fg_points
from .simv import SemanticMask, VoteResult, collapse_semantic, select_final, vote

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "BinaryMask",
    "BoxSet",
    "GeneratorConfig",
    "GrayMask",
    "Heatmap",
    "ImageRef",
    "InstanceMaskStack",
    "PipelineConfig",
    "Point",
    "PointPrompts",
    "RleMask",
    "RunArtifact",
    "SamplingConfig",
    "SemanticMask",
    "VoteResult",
    "box_iou",
    "build_triplets",
    "clamp_box",
    "collapse_semantic",
    "generate_instance_masks",
    "make_synthetic_dataset",
    "mask_iou",
    "normalize_in_box",
    "prepare_boxes",
    "rle_decode",
    "rle_encode",
    "run_dataset",
    "run_image",
    "sample_bg_points",
    "sample_fg_points",
    "select_final",
    "vote",
]
