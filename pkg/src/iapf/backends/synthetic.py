"""Procedural scene backend whose outputs are exact by construction.

Scenes hold disk or rectangle instances. Detection returns each instance's
tight box, heatmaps are radial bumps peaking at instance centers, and
segmentation returns the rasterized instance whose tight box best matches
the prompt box. With jitter 0 the whole pipeline is an oracle.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core import BBox, BinaryMask, BoxSet, Heatmap, ImageRef, box_iou, tight_box
from ..errors import UnknownTag
from .base import Backend, PromptTriplet, TagBundle, TagRequest


@dataclass(frozen=True)
class SceneInstance:
    """One synthetic object: a disk (radius) or an axis-aligned rectangle (half extents)."""

    shape: str  # "disk" | "rect"
    cx: float
    cy: float
    rx: float
    ry: float
    tag: str

    def __post_init__(self):
        if self.shape not in ("disk", "rect"):
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.rx <= 0 or self.ry <= 0:
            raise ValueError("instance extents must be positive")

    def rasterize(self, width: int, height: int) -> BinaryMask:
        ys, xs = np.mgrid[0:height, 0:width]
        px = xs + 0.5
        py = ys + 0.5
        if self.shape == "disk":
            bits = (px - self.cx) ** 2 + (py - self.cy) ** 2 <= self.rx**2
        else:
            bits = (np.abs(px - self.cx) <= self.rx) & (np.abs(py - self.cy) <= self.ry)
        return BinaryMask(bits)

    def to_json_obj(self) -> dict:
        return {
            "shape": self.shape,
            "cx": self.cx,
            "cy": self.cy,
            "rx": self.rx,
            "ry": self.ry,
            "tag": self.tag,
        }

    @staticmethod
    def from_json_obj(obj: dict) -> "SceneInstance":
        return SceneInstance(
            shape=obj["shape"],
            cx=float(obj["cx"]),
            cy=float(obj["cy"]),
            rx=float(obj["rx"]),
            ry=float(obj["ry"]),
            tag=obj["tag"],
        )


@dataclass(frozen=True)
class SyntheticScene:
    """A fully specified scene; instances must lie inside the image."""

    width: int
    height: int
    instances: tuple[SceneInstance, ...]
    bg_tags: tuple[str, ...] = ()
    caption: str = "synthetic scene"
    jitter: float = 0.0
    seed: int = 0

    def __init__(
        self,
        width: int,
        height: int,
        instances: Sequence[SceneInstance],
        bg_tags: Sequence[str] = (),
        caption: str = "synthetic scene",
        jitter: float = 0.0,
        seed: int = 0,
    ):
        instances = tuple(instances)
        for inst in instances:
            if not (
                inst.cx - inst.rx >= 0
                and inst.cy - inst.ry >= 0
                and inst.cx + inst.rx <= width
                and inst.cy + inst.ry <= height
            ):
                raise ValueError(f"instance {inst} extends outside {width}x{height}")
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "height", height)
        object.__setattr__(self, "instances", instances)
        object.__setattr__(self, "bg_tags", tuple(bg_tags))
        object.__setattr__(self, "caption", caption)
        object.__setattr__(self, "jitter", float(jitter))
        object.__setattr__(self, "seed", int(seed))

    def fg_tags(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for inst in self.instances:
            seen.setdefault(inst.tag, None)
        return tuple(seen)

    def semantic_ground_truth(self) -> BinaryMask:
        acc = np.zeros((self.height, self.width), dtype=bool)
        for inst in self.instances:
            acc |= inst.rasterize(self.width, self.height).bits
        return BinaryMask(acc)

    def instance_ground_truth(self) -> list[BinaryMask]:
        return [inst.rasterize(self.width, self.height) for inst in self.instances]

    def to_json_obj(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "caption": self.caption,
            "bg_tags": list(self.bg_tags),
            "jitter": self.jitter,
            "seed": self.seed,
            "instances": [inst.to_json_obj() for inst in self.instances],
        }

    @staticmethod
    def from_json_obj(obj: dict) -> "SyntheticScene":
        return SyntheticScene(
            width=int(obj["width"]),
            height=int(obj["height"]),
            instances=[SceneInstance.from_json_obj(o) for o in obj["instances"]],
            bg_tags=obj.get("bg_tags", []),
            caption=obj.get("caption", "synthetic scene"),
            jitter=float(obj.get("jitter", 0.0)),
            seed=int(obj.get("seed", 0)),
        )


def load_scene(path) -> SyntheticScene:
    return SyntheticScene.from_json_obj(json.loads(Path(path).read_text(encoding="utf-8")))


def save_scene(path, scene: SyntheticScene) -> None:
    Path(path).write_text(
        json.dumps(scene.to_json_obj(), sort_keys=True, indent=1), encoding="utf-8"
    )


def _stable_rng(*parts) -> np.random.Generator:
    blob = json.dumps(parts, sort_keys=True).encode("utf-8")
    seed = int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")
    return np.random.default_rng(seed)


class SyntheticBackend(Backend):
    """Oracle backend over one scene; deterministic for a fixed seed."""

    def __init__(self, scene: SyntheticScene):
        self.scene = scene
        self._instance_masks = scene.instance_ground_truth()
        self._instance_boxes = [
            tight_box(m, score=1.0) for m in self._instance_masks
        ]

    def generate_tags(self, image: ImageRef, request: TagRequest) -> TagBundle:
        fg = self.scene.fg_tags()
        if not fg:
            raise UnknownTag("scene declares no instances, so no foreground tags exist")
        return TagBundle(caption=self.scene.caption, fg_tags=fg, bg_tags=self.scene.bg_tags)

    def detect_boxes(self, image: ImageRef, tag: str) -> BoxSet:
        boxes = []
        for idx, inst in enumerate(self.scene.instances):
            if inst.tag != tag:
                continue
            box = self._instance_boxes[idx]
            if box is None:
                continue
            if self.scene.jitter > 0:
                rng = _stable_rng(self.scene.seed, image.id, tag, idx)
                amp = self.scene.jitter
                dx0, dy0, dx1, dy1 = rng.uniform(-amp, amp, size=4) * min(
                    box.width, box.height
                )
                box = BBox(
                    max(0.0, box.x0 + dx0),
                    max(0.0, box.y0 + dy0),
                    min(float(image.width), max(box.x0 + dx0 + 1.0, box.x1 + dx1)),
                    min(float(image.height), max(box.y0 + dy0 + 1.0, box.y1 + dy1)),
                    1.0,
                )
            boxes.append(box)
        if not boxes:
            raise UnknownTag(f"tag {tag!r} matches no scene instance")
        return BoxSet(tag=tag, boxes=boxes)

    def compute_heatmap(self, image: ImageRef, tag: str) -> Heatmap:
        ys, xs = np.mgrid[0 : self.scene.height, 0 : self.scene.width]
        px = xs + 0.5
        py = ys + 0.5
        acc = np.zeros((self.scene.height, self.scene.width), dtype=np.float64)
        if tag in self.scene.fg_tags():
            for inst in self.scene.instances:
                if inst.tag != tag:
                    continue
                sigma = min(inst.rx, inst.ry) / 2.0
                d2 = (px - inst.cx) ** 2 + (py - inst.cy) ** 2
                acc = np.maximum(acc, np.exp(-d2 / (2.0 * sigma**2)))
        elif tag in self.scene.bg_tags:
            cx, cy, sigma = self._bg_bump(tag)
            d2 = (px - cx) ** 2 + (py - cy) ** 2
            acc = np.exp(-d2 / (2.0 * sigma**2))
        else:
            raise UnknownTag(f"tag {tag!r} is neither a scene foreground nor background tag")
        return Heatmap(np.clip(acc, 0.0, 1.0))

    def _bg_bump(self, tag: str) -> tuple[float, float, float]:
        # deterministic bump center away from every instance center
        rng = _stable_rng(self.scene.seed, "bg", tag)
        sigma = max(2.0, min(self.scene.width, self.scene.height) / 8.0)
        best = (self.scene.width / 2.0, self.scene.height / 2.0)
        best_d = -1.0
        for _ in range(16):
            cx = rng.uniform(1.0, self.scene.width - 1.0)
            cy = rng.uniform(1.0, self.scene.height - 1.0)
            d = min(
                (math.hypot(cx - inst.cx, cy - inst.cy) for inst in self.scene.instances),
                default=math.inf,
            )
            if d > best_d:
                best_d = d
                best = (cx, cy)
        return best[0], best[1], sigma

    def segment(self, image: ImageRef, triplet: PromptTriplet) -> BinaryMask:
        if not self._instance_masks:
            return BinaryMask.zeros(self.scene.height, self.scene.width)
        ious = [
            box_iou(triplet.box, b) if b is not None else -1.0 for b in self._instance_boxes
        ]
        best = max(range(len(ious)), key=lambda i: (ious[i], -i))
        return self._instance_masks[best]


def synthetic_backend(scene: SyntheticScene) -> SyntheticBackend:
    return SyntheticBackend(scene)
