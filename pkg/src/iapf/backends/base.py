"""The model-backend capability contract and shared helpers."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

from ..core import BBox, BinaryMask, BoxSet, Heatmap, ImageRef
from ..sfmbp import Point

DEFAULT_FG_QUERY = "Name of the {prompt} in one word."
DEFAULT_BG_QUERY = "Name of the environment of the {prompt} in one word."


@dataclass(frozen=True)
class TagRequest:
    """One task-generic prompt plus the query templates built from it."""

    prompt: str
    fg_query_template: str = DEFAULT_FG_QUERY
    bg_query_template: str = DEFAULT_BG_QUERY

    def __post_init__(self):
        for tpl in (self.fg_query_template, self.bg_query_template):
            if "{prompt}" not in tpl:
                raise ValueError("query templates must contain the {prompt} placeholder")

    def fg_query(self) -> str:
        return self.fg_query_template.format(prompt=self.prompt)

    def bg_query(self) -> str:
        return self.bg_query_template.format(prompt=self.prompt)


def _clean_tag(tag: str, kind: str) -> str:
    tag = tag.strip()
    if not tag:
        raise ValueError(f"empty {kind} tag")
    if any(ch.isspace() for ch in tag):
        raise ValueError(f"{kind} tag {tag!r} is not a single token")
    return tag


@dataclass(frozen=True)
class TagBundle:
    """Image caption plus single-token foreground/background tags.

    Background tags are stored deduplicated in first-occurrence order.
    """

    caption: str
    fg_tags: tuple[str, ...]
    bg_tags: tuple[str, ...]

    def __init__(self, caption: str, fg_tags: Sequence[str], bg_tags: Sequence[str]):
        fg = tuple(_clean_tag(t, "foreground") for t in fg_tags)
        if not fg:
            raise ValueError("at least one foreground tag is required")
        seen: dict[str, None] = {}
        for t in bg_tags:
            seen.setdefault(_clean_tag(t, "background"), None)
        object.__setattr__(self, "caption", caption)
        object.__setattr__(self, "fg_tags", fg)
        object.__setattr__(self, "bg_tags", tuple(seen))


@dataclass(frozen=True)
class PromptTriplet:
    """One box and its foreground/background point prompts."""

    box: BBox
    fg_points: tuple[Point, ...]
    bg_points: tuple[Point, ...] = field(default=())

    def __init__(self, box: BBox, fg_points: Sequence[Point], bg_points: Sequence[Point] = ()):
        fg = tuple(fg_points)
        bg = tuple(bg_points)
        if not fg:
            raise ValueError("a prompt triplet needs at least one foreground point")
        fg_coords = {(p.x, p.y) for p in fg}
        if fg_coords & {(p.x, p.y) for p in bg}:
            raise ValueError("foreground and background points must be disjoint")
        for p in (*fg, *bg):
            if not box.contains_pixel(p.x, p.y):
                raise ValueError(f"point ({p.x}, {p.y}) lies outside the box")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "fg_points", fg)
        object.__setattr__(self, "bg_points", bg)


def triplet_digest(triplet: PromptTriplet) -> str:
    """Stable key for a prompt triplet: box coords rounded to 2 decimals plus
    sorted point coordinate lists (scores and confidences excluded)."""
    payload = {
        "box": [
            f"{round(c, 2):.2f}"
            for c in (triplet.box.x0, triplet.box.y0, triplet.box.x1, triplet.box.y1)
        ],
        "fg": sorted([p.x, p.y] for p in triplet.fg_points),
        "bg": sorted([p.x, p.y] for p in triplet.bg_points),
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


@runtime_checkable
class Backend(Protocol):
    """The four model capabilities every backend implementation provides."""

    def generate_tags(self, image: ImageRef, request: TagRequest) -> TagBundle: ...

    def detect_boxes(self, image: ImageRef, tag: str) -> BoxSet: ...

    def compute_heatmap(self, image: ImageRef, tag: str) -> Heatmap: ...

    def segment(self, image: ImageRef, triplet: PromptTriplet) -> BinaryMask: ...
