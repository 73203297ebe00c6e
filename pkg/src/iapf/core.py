"""Geometry and mask-algebra value types shared by every other module.

All types here are immutable after construction (arrays are frozen with
``writeable = False``) and can be shared freely across threads.

Conventions:
  * grids are row-major, ``(height, width)``;
  * box coordinates are continuous and half-open, ``[x0, x1) x [y0, y1)``;
  * pixel ``(x, y)`` lies inside a box iff ``x0 <= x + 0.5 < x1`` and
    ``y0 <= y + 0.5 < y1`` (pixel-center rule).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import CountsMismatch, DegenerateBox, DimensionMismatch, EmptyStack


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ImageRef:
    """Reference to an image by id and dimensions; pixels are never inspected here."""

    id: str
    width: int
    height: int
    pixel_source: Optional[str] = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image {self.id!r} has non-positive dimensions")


@dataclass(frozen=True)
class BBox:
    """Scored box with continuous half-open coordinates."""

    x0: float
    y0: float
    x1: float
    y1: float
    score: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x0, self.y0, self.x1, self.y1, self.score)):
            raise ValueError("box fields must be finite")
        if self.x0 >= self.x1 or self.y0 >= self.y1:
            raise ValueError(f"empty box ({self.x0}, {self.y0}, {self.x1}, {self.y1})")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"box score {self.score} outside [0, 1]")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def area(self) -> float:
        return self.width * self.height

    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def sort_key(self):
        """Canonical ordering key: descending score, ties by coordinates."""
        return (-self.score, self.y0, self.x0, self.y1, self.x1)

    def pixel_range(self) -> tuple[range, range]:
        """Integer x and y ranges of the pixels whose centers fall inside."""
        xs = range(math.ceil(self.x0 - 0.5), math.ceil(self.x1 - 0.5))
        ys = range(math.ceil(self.y0 - 0.5), math.ceil(self.y1 - 0.5))
        return xs, ys

    def contains_pixel(self, x: int, y: int) -> bool:
        return self.x0 <= x + 0.5 < self.x1 and self.y0 <= y + 0.5 < self.y1


def sort_boxes(boxes: Sequence[BBox]) -> list[BBox]:
    return sorted(boxes, key=BBox.sort_key)


@dataclass(frozen=True)
class BoxSet:
    """Detector output for one tag, kept in canonical order."""

    tag: str
    boxes: tuple[BBox, ...]

    def __init__(self, tag: str, boxes: Sequence[BBox]):
        object.__setattr__(self, "tag", tag)
        object.__setattr__(self, "boxes", tuple(sort_boxes(boxes)))

    def __len__(self) -> int:
        return len(self.boxes)

    def __iter__(self):
        return iter(self.boxes)


@dataclass(frozen=True, eq=False)
class Heatmap:
    """Dense confidence grid; values finite, float64 internally (float32 on disk)."""

    values: np.ndarray

    def __init__(self, values: np.ndarray):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("heatmap must be a non-empty 2-D grid")
        if not np.all(np.isfinite(arr)):
            raise ValueError("heatmap values must be finite")
        object.__setattr__(self, "values", _freeze(arr))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean grid, row-major."""

    bits: np.ndarray

    def __init__(self, bits: np.ndarray):
        arr = np.asarray(bits)
        if arr.dtype != np.bool_:
            arr = arr.astype(bool)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("mask must be a non-empty 2-D grid")
        object.__setattr__(self, "bits", _freeze(arr))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def count(self) -> int:
        return int(self.bits.sum())

    def same_grid(self, other: "BinaryMask") -> bool:
        return self.bits.shape == other.bits.shape

    @staticmethod
    def zeros(height: int, width: int) -> "BinaryMask":
        return BinaryMask(np.zeros((height, width), dtype=bool))


@dataclass(frozen=True, eq=False)
class GrayMask:
    """Grid of reals in [0, 1]; prediction/ground-truth interchange for metrics."""

    values: np.ndarray

    def __init__(self, values: np.ndarray):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("gray mask must be a non-empty 2-D grid")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("gray mask values must lie in [0, 1]")
        object.__setattr__(self, "values", _freeze(arr))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @staticmethod
    def from_binary(mask: BinaryMask) -> "GrayMask":
        return GrayMask(mask.bits.astype(np.float64))


@dataclass(frozen=True)
class RleMask:
    """Row-major run-length encoding starting with a zero run (first count may be 0)."""

    size: tuple[int, int]  # (height, width)
    counts: tuple[int, ...]
    order: str = "row-major"
    start: str = "zero"

    def __post_init__(self):
        if self.order != "row-major" or self.start != "zero":
            raise ValueError("only row-major / zero-start RLE is supported")
        if any((not isinstance(c, int)) or c < 0 for c in self.counts):
            raise ValueError("RLE counts must be non-negative integers")

    def to_json_obj(self) -> dict:
        return {
            "size": [self.size[0], self.size[1]],
            "counts": list(self.counts),
            "order": self.order,
            "start": self.start,
        }

    @staticmethod
    def from_json_obj(obj: dict) -> "RleMask":
        size = obj["size"]
        return RleMask(
            size=(int(size[0]), int(size[1])),
            counts=tuple(int(c) for c in obj["counts"]),
            order=obj.get("order", "row-major"),
            start=obj.get("start", "zero"),
        )


@dataclass(frozen=True, eq=False)
class InstanceMaskStack:
    """N binary masks for one tag, parallel to the boxes that prompted them."""

    masks: tuple[BinaryMask, ...]
    box_provenance: tuple[BBox, ...] = field(default=())

    def __init__(self, masks: Sequence[BinaryMask], box_provenance: Sequence[BBox] = ()):
        masks = tuple(masks)
        boxes = tuple(box_provenance)
        if not masks:
            raise EmptyStack("instance mask stack must hold at least one mask")
        shape = masks[0].bits.shape
        for m in masks[1:]:
            if m.bits.shape != shape:
                raise DimensionMismatch("all masks in a stack must share dimensions")
        if boxes and len(boxes) != len(masks):
            raise ValueError("box provenance must parallel the masks")
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "box_provenance", boxes)

    def __len__(self) -> int:
        return len(self.masks)

    @property
    def height(self) -> int:
        return self.masks[0].height

    @property
    def width(self) -> int:
        return self.masks[0].width


# ---------------------------------------------------------------------------
# operations


def rle_encode(mask: BinaryMask) -> RleMask:
    """Encode a mask as alternating run lengths, zero run first."""
    flat = mask.bits.ravel()
    counts: list[int] = []
    # np.diff-based run splitting; prepend a virtual zero so encoding starts on a zero run
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds)
    if flat[0]:
        counts.append(0)
    counts.extend(int(r) for r in runs)
    return RleMask(size=(mask.height, mask.width), counts=tuple(counts))


def rle_decode(rle: RleMask) -> BinaryMask:
    """Exact inverse of rle_encode."""
    h, w = rle.size
    total = sum(rle.counts)
    if total != h * w:
        raise CountsMismatch(f"counts sum {total} != {h}x{w}")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for c in rle.counts:
        if value:
            flat[pos : pos + c] = True
        pos += c
        value = not value
    return BinaryMask(flat.reshape(h, w))


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union of two masks; 1.0 when both are empty."""
    if a.bits.shape != b.bits.shape:
        raise DimensionMismatch(f"mask shapes {a.bits.shape} vs {b.bits.shape}")
    inter = int(np.logical_and(a.bits, b.bits).sum())
    union = int(np.logical_or(a.bits, b.bits).sum())
    if union == 0:
        return 1.0
    return inter / union


def box_iou(a: BBox, b: BBox) -> float:
    """Area intersection over union on continuous coordinates."""
    ix = max(0.0, min(a.x1, b.x1) - max(a.x0, b.x0))
    iy = max(0.0, min(a.y1, b.y1) - max(a.y0, b.y0))
    inter = ix * iy
    union = a.area() + b.area() - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def clamp_box(b: BBox, image: ImageRef) -> BBox:
    """Clip a box into image bounds, keeping its score.

    Raises DegenerateBox when the clipped box is thinner than one pixel.
    """
    x0 = min(max(b.x0, 0.0), float(image.width))
    y0 = min(max(b.y0, 0.0), float(image.height))
    x1 = min(max(b.x1, 0.0), float(image.width))
    y1 = min(max(b.y1, 0.0), float(image.height))
    if x1 - x0 < 1.0 or y1 - y0 < 1.0:
        raise DegenerateBox(
            f"box ({b.x0}, {b.y0}, {b.x1}, {b.y1}) clips below one pixel in "
            f"{image.width}x{image.height}"
        )
    return BBox(x0, y0, x1, y1, b.score)


def rasterize_box(b: BBox, image: ImageRef) -> BinaryMask:
    """Pixels whose centers fall inside the box."""
    grid = np.zeros((image.height, image.width), dtype=bool)
    xs, ys = b.pixel_range()
    x_lo, x_hi = max(xs.start, 0), min(xs.stop, image.width)
    y_lo, y_hi = max(ys.start, 0), min(ys.stop, image.height)
    if x_lo < x_hi and y_lo < y_hi:
        grid[y_lo:y_hi, x_lo:x_hi] = True
    return BinaryMask(grid)


def full_image_box(image: ImageRef, score: float = 0.0) -> BBox:
    return BBox(0.0, 0.0, float(image.width), float(image.height), score)


def tight_box(mask: BinaryMask, score: float = 1.0) -> Optional[BBox]:
    """Smallest box covering the mask's pixels, or None for an empty mask."""
    ys, xs = np.nonzero(mask.bits)
    if ys.size == 0:
        return None
    return BBox(
        float(xs.min()),
        float(ys.min()),
        float(xs.max()) + 1.0,
        float(ys.max()) + 1.0,
        score,
    )
