"""Region-constrained point sampling from heatmaps.

Inside each box, heatmap values are min-max normalized over exactly the
pixels whose centers the box contains, and pixels whose normalized
confidence clears the threshold become point candidates. Foreground points
come from one heatmap; background points from the union over several
heatmaps with foreground taking priority on conflicts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import BBox, Heatmap
from .errors import ConstantRegion, DimensionMismatch


@dataclass(frozen=True)
class Point:
    x: int
    y: int
    confidence: float


@dataclass(frozen=True)
class PointPrompts:
    fg: tuple[Point, ...]
    bg: tuple[Point, ...]


@dataclass(frozen=True)
class SamplingConfig:
    """Threshold and caps for point sampling.

    tau is the normalized-confidence threshold. The caps and spacing rule
    bound how many points reach the segmenter; they are configuration, not
    part of the sampling math.
    """

    tau: float = 0.9
    k_fg: int = 3
    k_bg: int = 6
    d_min_frac: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.k_fg < 1:
            raise ValueError("k_fg must be >= 1")
        if self.k_bg < 0:
            raise ValueError("k_bg must be >= 0")
        if not 0.0 <= self.d_min_frac <= 0.5:
            raise ValueError("d_min_frac must lie in [0, 0.5]")


@dataclass(frozen=True, eq=False)
class BoxRegion:
    """Normalized heatmap values over the pixels inside one box (row-major order)."""

    xs: np.ndarray = field(repr=False)
    ys: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.values)


def _region_pixels(h: Heatmap, b: BBox) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xr, yr = b.pixel_range()
    if len(xr) == 0 or len(yr) == 0:
        raise ValueError("box contains no pixel centers; clamp it first")
    if xr.start < 0 or yr.start < 0 or xr.stop > h.width or yr.stop > h.height:
        raise DimensionMismatch("box extends beyond the heatmap grid")
    ys, xs = np.meshgrid(np.arange(yr.start, yr.stop), np.arange(xr.start, xr.stop), indexing="ij")
    vals = h.values[yr.start : yr.stop, xr.start : xr.stop]
    return xs.ravel(), ys.ravel(), vals.ravel()


def normalize_in_box(h: Heatmap, b: BBox) -> BoxRegion:
    """Min-max normalize the heatmap over the pixels inside the box.

    Raises ConstantRegion when every value inside the box is equal, which
    leaves the caller to apply its fallback.
    """
    xs, ys, vals = _region_pixels(h, b)
    lo = float(vals.min())
    hi = float(vals.max())
    if hi == lo:
        raise ConstantRegion(f"constant value {lo} inside box")
    normalized = (vals - lo) / (hi - lo)
    return BoxRegion(xs=xs, ys=ys, values=normalized)


def threshold_candidates(h: Heatmap, b: BBox, tau: float) -> list[Point]:
    """Pre-cap candidate points: normalized confidence >= tau.

    Ordered by descending confidence, ties by (y, x). Raises ConstantRegion
    like normalize_in_box.
    """
    region = normalize_in_box(h, b)
    keep = region.values >= tau
    pts = [
        Point(int(x), int(y), float(v))
        for x, y, v in zip(region.xs[keep], region.ys[keep], region.values[keep])
    ]
    pts.sort(key=lambda p: (-p.confidence, p.y, p.x))
    return pts


def _argmax_pixel(h: Heatmap, b: BBox) -> Point:
    # fallback: single argmax inside the box, row-major tie-break
    xs, ys, vals = _region_pixels(h, b)
    idx = int(np.argmax(vals))  # region arrays are row-major, argmax takes the first max
    return Point(int(xs[idx]), int(ys[idx]), 1.0)


def _spaced_subset(candidates: Sequence[Point], cap: int, d_min: float) -> list[Point]:
    """Greedy top-confidence subset with pairwise distance >= d_min."""
    chosen: list[Point] = []
    for p in candidates:
        if len(chosen) >= cap:
            break
        if all(math.hypot(p.x - q.x, p.y - q.y) >= d_min for q in chosen):
            chosen.append(p)
    return chosen


def sample_fg_points(h_fg: Heatmap, b: BBox, cfg: SamplingConfig) -> list[Point]:
    """Foreground points inside the box; never empty (argmax fallback)."""
    try:
        candidates = threshold_candidates(h_fg, b, cfg.tau)
    except ConstantRegion:
        return [_argmax_pixel(h_fg, b)]
    if not candidates:
        return [_argmax_pixel(h_fg, b)]
    return _spaced_subset(candidates, cfg.k_fg, cfg.d_min_frac * b.diagonal())


def sample_bg_points(
    h_bgs: Sequence[Heatmap], b: BBox, cfg: SamplingConfig, fg: Sequence[Point]
) -> list[Point]:
    """Background points from the union over heatmaps; may be empty.

    Coordinates are deduplicated keeping the max confidence, coordinates
    already claimed by fg are dropped, then the same spacing rule applies.
    """
    best: dict[tuple[int, int], float] = {}
    for h in h_bgs:
        try:
            candidates = threshold_candidates(h, b, cfg.tau)
        except ConstantRegion:
            continue  # a flat background heatmap contributes nothing
        for p in candidates:
            key = (p.x, p.y)
            if key not in best or p.confidence > best[key]:
                best[key] = p.confidence
    taken = {(p.x, p.y) for p in fg}
    merged = [Point(x, y, c) for (x, y), c in best.items() if (x, y) not in taken]
    merged.sort(key=lambda p: (-p.confidence, p.y, p.x))
    return _spaced_subset(merged, cfg.k_bg, cfg.d_min_frac * b.diagonal())
