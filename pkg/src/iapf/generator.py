"""Instance mask generation: boxes from the detector, point prompts per box,
one segmenter call per prompt triplet, masks stacked in box order."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .backends.base import Backend, PromptTriplet
from .core import (
    BBox,
    BoxSet,
    Heatmap,
    ImageRef,
    InstanceMaskStack,
    box_iou,
    clamp_box,
    full_image_box,
    sort_boxes,
)
from .errors import BackendError, DegenerateBox, IapfError, NoBoxes
from .sfmbp import SamplingConfig, sample_bg_points, sample_fg_points

__all__ = [
    "GeneratorConfig",
    "PromptTriplet",
    "prepare_boxes",
    "build_triplets",
    "generate_instance_masks",
]


@dataclass(frozen=True)
class GeneratorConfig:
    """Box post-processing and sampling knobs.

    nms_iou of None disables dedup. use_detector=False skips detection
    entirely and relies on the whole-image fallback box (the single-box
    ablation used for coverage studies).
    """

    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    nms_iou: Optional[float] = 0.9
    min_box_score: float = 0.0
    fallback_to_full_image: bool = True
    use_detector: bool = True

    def __post_init__(self):
        if self.nms_iou is not None and not 0.0 < self.nms_iou <= 1.0:
            raise ValueError("nms_iou must lie in (0, 1] when present")


def prepare_boxes(raw: BoxSet, image: ImageRef, cfg: GeneratorConfig) -> BoxSet:
    """Clamp, filter, dedup, and canonically order detector boxes.

    Degenerate boxes are dropped, not raised. When nothing survives and the
    fallback is enabled, the whole-image box (score 0) stands in.
    """
    kept: list[BBox] = []
    for box in raw:
        if box.score < cfg.min_box_score:
            continue
        try:
            kept.append(clamp_box(box, image))
        except DegenerateBox:
            continue
    kept = sort_boxes(kept)
    if cfg.nms_iou is not None:
        survivors: list[BBox] = []
        for box in kept:
            if all(box_iou(box, other) < cfg.nms_iou for other in survivors):
                survivors.append(box)
        kept = survivors
    if not kept:
        if cfg.fallback_to_full_image:
            kept = [full_image_box(image, score=0.0)]
        else:
            raise NoBoxes(f"no usable boxes for tag {raw.tag!r} on image {image.id!r}")
    return BoxSet(tag=raw.tag, boxes=kept)


def build_triplets(
    image: ImageRef,
    boxes: BoxSet,
    h_fg: Heatmap,
    h_bgs: Sequence[Heatmap],
    cfg: GeneratorConfig,
) -> list[PromptTriplet]:
    """One prompt triplet per box, order preserved."""
    triplets = []
    for box in boxes:
        fg = sample_fg_points(h_fg, box, cfg.sampling)
        bg = sample_bg_points(h_bgs, box, cfg.sampling, fg)
        triplets.append(PromptTriplet(box=box, fg_points=fg, bg_points=bg))
    return triplets


def generate_instance_masks(
    image: ImageRef,
    fg_tag: str,
    bg_tags: Sequence[str],
    backend: Backend,
    cfg: GeneratorConfig,
) -> InstanceMaskStack:
    """Detect, prompt, and segment one foreground tag into a mask stack.

    bg_tags are assumed deduplicated by the caller. Backend failures are
    wrapped in BackendError naming the failing call.
    """
    if not fg_tag:
        raise ValueError("fg_tag must be nonempty")

    if cfg.use_detector:
        raw = _call(backend.detect_boxes, "detect_boxes", image, fg_tag)
    else:
        raw = BoxSet(tag=fg_tag, boxes=[])
    boxes = prepare_boxes(raw, image, cfg)

    h_fg = _call(backend.compute_heatmap, "compute_heatmap", image, fg_tag)
    _check_grid(h_fg, image, f"heatmap for tag {fg_tag!r}")
    h_bgs = []
    for tag in bg_tags:
        h = _call(backend.compute_heatmap, "compute_heatmap", image, tag)
        _check_grid(h, image, f"heatmap for tag {tag!r}")
        h_bgs.append(h)

    triplets = build_triplets(image, boxes, h_fg, h_bgs, cfg)
    masks = []
    for triplet in triplets:
        mask = _call(backend.segment, "segment", image, triplet)
        _check_grid(mask, image, "segment output")
        masks.append(mask)
    return InstanceMaskStack(masks=masks, box_provenance=tuple(boxes))


def _call(fn, name, image, arg):
    try:
        return fn(image, arg)
    except BackendError:
        raise
    except IapfError as exc:
        raise BackendError(f"{name} failed on image {image.id!r}: {exc}") from exc


def _check_grid(grid, image: ImageRef, what: str) -> None:
    if grid.height != image.height or grid.width != image.width:
        raise BackendError(
            f"{what} is {grid.height}x{grid.width}, image {image.id!r} is "
            f"{image.height}x{image.width}"
        )
