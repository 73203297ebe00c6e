"""File-backed backend plus the recorder that writes the same layout.

Fixture layout, one directory per image id under the root:

    <root>/<image_id>/tags.json
        {"caption": str, "runs": [{"prompt": str, "fg_tags": [...], "bg_tags": [...]}]}
    <root>/<image_id>/boxes/<tag>.json
        [{"x0": f, "y0": f, "x1": f, "y1": f, "score": f}, ...]
    <root>/<image_id>/heatmaps/<tag>.iahm
    <root>/<image_id>/segments/<digest>.rle.json
"""
from __future__ import annotations

import json
import threading
from pathlib import Path

import numpy as np

from ..core import BBox, BinaryMask, BoxSet, Heatmap, ImageRef
from ..errors import FixtureCorrupt, FixtureMissing
from ..io import read_heatmap, read_rle_json, write_heatmap, write_rle_json
from .base import Backend, PromptTriplet, TagBundle, TagRequest, triplet_digest


def boxes_to_json_obj(boxes: BoxSet) -> list[dict]:
    return [
        {"x0": b.x0, "y0": b.y0, "x1": b.x1, "y1": b.y1, "score": b.score} for b in boxes
    ]


def boxes_from_json_obj(obj, tag: str, source: str) -> BoxSet:
    if not isinstance(obj, list):
        raise FixtureCorrupt(source, "boxes file must hold a JSON array")
    boxes = []
    for entry in obj:
        try:
            boxes.append(
                BBox(
                    float(entry["x0"]),
                    float(entry["y0"]),
                    float(entry["x1"]),
                    float(entry["y1"]),
                    float(entry["score"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FixtureCorrupt(source, f"bad box entry {entry!r}: {exc}") from exc
    return BoxSet(tag=tag, boxes=boxes)


class FixtureBackend(Backend):
    """Reads every capability answer from disk; never fabricates."""

    def __init__(self, root_dir):
        self.root = Path(root_dir)
        if not self.root.is_dir():
            raise FixtureMissing(self.root, "fixture root is not a directory")

    def _image_dir(self, image: ImageRef) -> Path:
        return self.root / image.id

    def generate_tags(self, image: ImageRef, request: TagRequest) -> TagBundle:
        path = self._image_dir(image) / "tags.json"
        if not path.is_file():
            raise FixtureMissing(path)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
            caption = obj["caption"]
            runs = obj["runs"]
        except (ValueError, KeyError, TypeError) as exc:
            raise FixtureCorrupt(str(path), f"bad tags schema: {exc}") from exc
        for run in runs:
            if run.get("prompt") == request.prompt:
                try:
                    return TagBundle(
                        caption=caption,
                        fg_tags=run["fg_tags"],
                        bg_tags=run.get("bg_tags", []),
                    )
                except (KeyError, TypeError, ValueError) as exc:
                    raise FixtureCorrupt(str(path), f"bad run entry: {exc}") from exc
        raise FixtureMissing(path, f"no recorded run for prompt {request.prompt!r}")

    def detect_boxes(self, image: ImageRef, tag: str) -> BoxSet:
        path = self._image_dir(image) / "boxes" / f"{tag}.json"
        if not path.is_file():
            raise FixtureMissing(path)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise FixtureCorrupt(str(path), f"bad JSON: {exc}") from exc
        return boxes_from_json_obj(obj, tag, str(path))

    def compute_heatmap(self, image: ImageRef, tag: str) -> Heatmap:
        path = self._image_dir(image) / "heatmaps" / f"{tag}.iahm"
        if not path.is_file():
            raise FixtureMissing(path)
        heatmap = read_heatmap(path)
        if heatmap.height != image.height or heatmap.width != image.width:
            raise FixtureCorrupt(
                str(path),
                f"heatmap is {heatmap.height}x{heatmap.width}, image is "
                f"{image.height}x{image.width}",
            )
        return heatmap

    def segment(self, image: ImageRef, triplet: PromptTriplet) -> BinaryMask:
        digest = triplet_digest(triplet)
        path = self._image_dir(image) / "segments" / f"{digest}.rle.json"
        if not path.is_file():
            raise FixtureMissing(path, f"no mask for triplet digest {digest}")
        mask = read_rle_json(path)
        if mask.height != image.height or mask.width != image.width:
            raise FixtureCorrupt(
                str(path),
                f"mask is {mask.height}x{mask.width}, image is {image.height}x{image.width}",
            )
        return mask


def fixture_backend(root_dir) -> FixtureBackend:
    return FixtureBackend(root_dir)


class RecordingBackend(Backend):
    """Wraps another backend and tees every answer into the fixture layout."""

    def __init__(self, inner: Backend, out_dir):
        self.inner = inner
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._tag_runs: dict[str, dict] = {}  # image id -> tags.json object

    def _image_dir(self, image: ImageRef) -> Path:
        path = self.out / image.id
        path.mkdir(exist_ok=True)
        return path

    def generate_tags(self, image: ImageRef, request: TagRequest) -> TagBundle:
        bundle = self.inner.generate_tags(image, request)
        with self._lock:
            obj = self._tag_runs.setdefault(image.id, {"caption": bundle.caption, "runs": []})
            if not any(run["prompt"] == request.prompt for run in obj["runs"]):
                obj["runs"].append(
                    {
                        "prompt": request.prompt,
                        "fg_tags": list(bundle.fg_tags),
                        "bg_tags": list(bundle.bg_tags),
                    }
                )
            path = self._image_dir(image) / "tags.json"
            path.write_text(json.dumps(obj, sort_keys=True, indent=1), encoding="utf-8")
        return bundle

    def detect_boxes(self, image: ImageRef, tag: str) -> BoxSet:
        boxes = self.inner.detect_boxes(image, tag)
        with self._lock:
            box_dir = self._image_dir(image) / "boxes"
            box_dir.mkdir(exist_ok=True)
            (box_dir / f"{tag}.json").write_text(
                json.dumps(boxes_to_json_obj(boxes), sort_keys=True, indent=1),
                encoding="utf-8",
            )
        return boxes

    def compute_heatmap(self, image: ImageRef, tag: str) -> Heatmap:
        heatmap = self.inner.compute_heatmap(image, tag)
        # serve the float32-quantized values that replay will read, so the
        # recording run samples (and digests) exactly what a fixture run sees
        quantized = Heatmap(np.asarray(heatmap.values, dtype="<f4"))
        with self._lock:
            hm_dir = self._image_dir(image) / "heatmaps"
            hm_dir.mkdir(exist_ok=True)
            write_heatmap(hm_dir / f"{tag}.iahm", quantized)
        return quantized

    def segment(self, image: ImageRef, triplet: PromptTriplet) -> BinaryMask:
        mask = self.inner.segment(image, triplet)
        with self._lock:
            seg_dir = self._image_dir(image) / "segments"
            seg_dir.mkdir(exist_ok=True)
            write_rle_json(seg_dir / f"{triplet_digest(triplet)}.rle.json", mask)
        return mask
