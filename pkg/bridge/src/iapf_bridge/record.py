"""Fixture recording: run the four capabilities over images and prompts and
write the engine's fixture layout.

Per image id under the output root:
    tags.json                {"caption", "runs": [{"prompt", "fg_tags", "bg_tags"}]}
    boxes/<tag>.json         raw detector boxes
    heatmaps/<tag>.iahm      float32 heatmap file
    segments/<digest>.rle.json  one mask per planned prompt triplet

Per-image failures are logged and collected into record_failures.json; the
rest of the tree still gets written.
"""
from __future__ import annotations

import json
import shutil
import struct
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .adapters import Adapters
from .prompting import plan_triplets, triplet_digest
from .protocol import ImageCtx, rle_result

FG_QUERY = "Name of the {prompt} in one word."
BG_QUERY = "Name of the environment of the {prompt} in one word."


@dataclass(frozen=True)
class RecordSummary:
    ok: tuple[str, ...]
    failed: tuple[tuple[str, str], ...]


def discover_images(images_dir) -> list[ImageCtx]:
    """Image files (PNG/JPEG) or JSON manifests with width/height."""
    images_dir = Path(images_dir)
    found: dict[str, ImageCtx] = {}
    for path in sorted(images_dir.glob("*.json")):
        obj = json.loads(path.read_text(encoding="utf-8"))
        image_id = obj.get("id", path.stem)
        source = obj.get("pixel_source")
        if source is not None:
            source = str((path.parent / source).resolve())
        found[image_id] = ImageCtx(
            id=image_id, path=source, width=int(obj["width"]), height=int(obj["height"])
        )
    for pattern in ("*.png", "*.jpg", "*.jpeg"):
        for path in sorted(images_dir.glob(pattern)):
            if path.stem in found:
                continue
            with Image.open(path) as img:
                width, height = img.size
            found[path.stem] = ImageCtx(
                id=path.stem, path=str(path.resolve()), width=width, height=height
            )
    if not found:
        raise FileNotFoundError(f"no images under {images_dir}")
    return [found[k] for k in sorted(found)]


def _write_iahm(path: Path, values32: np.ndarray) -> None:
    header = struct.pack("<4sII", b"IAHM", values32.shape[0], values32.shape[1])
    path.write_bytes(header + values32.tobytes())


def _dedup(tags) -> list[str]:
    return list(dict.fromkeys(tags))


def record_image(adapters: Adapters, image: ImageCtx, prompts, out_root: Path) -> None:
    image_dir = out_root / image.id
    for sub in ("boxes", "heatmaps", "segments"):
        (image_dir / sub).mkdir(parents=True, exist_ok=True)

    runs = []
    caption = ""
    heatmaps: dict[str, np.ndarray] = {}  # tag -> float32 values (as persisted)
    raw_boxes: dict[str, list[tuple]] = {}

    def heatmap_for(tag: str) -> np.ndarray:
        if tag not in heatmaps:
            values = adapters.heatmapper.heatmap(image, tag)
            if values.shape != (image.height, image.width):
                raise RuntimeError(
                    f"heatmap for {tag!r} is {values.shape}, image is "
                    f"{image.height}x{image.width}"
                )
            # quantize exactly as persisted so planned points match replay
            values32 = np.ascontiguousarray(values, dtype="<f4")
            _write_iahm(image_dir / "heatmaps" / f"{tag}.iahm", values32)
            heatmaps[tag] = values32
        return heatmaps[tag]

    for prompt in prompts:
        caption, fg_tags, bg_tags = adapters.tagger.tags(
            image,
            prompt,
            FG_QUERY.format(prompt=prompt),
            BG_QUERY.format(prompt=prompt),
        )
        fg_tags = _dedup(fg_tags)
        bg_tags = _dedup(bg_tags)
        runs.append({"prompt": prompt, "fg_tags": fg_tags, "bg_tags": bg_tags})

        bg_values = [heatmap_for(tag) for tag in bg_tags]
        for tag in fg_tags:
            if tag not in raw_boxes:
                raw_boxes[tag] = [tuple(b) for b in adapters.detector.boxes(image, tag)]
                (image_dir / "boxes" / f"{tag}.json").write_text(
                    json.dumps(
                        [
                            {"x0": b[0], "y0": b[1], "x1": b[2], "y1": b[3], "score": b[4]}
                            for b in raw_boxes[tag]
                        ],
                        sort_keys=True,
                        indent=1,
                    ),
                    encoding="utf-8",
                )
            fg_values = heatmap_for(tag)
            for triplet in plan_triplets(
                raw_boxes[tag], fg_values, bg_values, image.width, image.height
            ):
                digest = triplet_digest(triplet)
                seg_path = image_dir / "segments" / f"{digest}.rle.json"
                if seg_path.exists():
                    continue
                mask = adapters.segmenter.mask(
                    image, triplet.box, list(triplet.fg_points), list(triplet.bg_points)
                )
                if mask.shape != (image.height, image.width):
                    raise RuntimeError(
                        f"segment mask is {mask.shape}, image is "
                        f"{image.height}x{image.width}"
                    )
                seg_path.write_text(
                    json.dumps(rle_result(mask), sort_keys=True), encoding="utf-8"
                )

    (image_dir / "tags.json").write_text(
        json.dumps({"caption": caption, "runs": runs}, sort_keys=True, indent=1),
        encoding="utf-8",
    )


def record_fixtures(adapters: Adapters, images_dir, prompts, out_dir) -> RecordSummary:
    out_root = Path(out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    ok = []
    failed = []
    for image in discover_images(images_dir):
        try:
            record_image(adapters, image, prompts, out_root)
            ok.append(image.id)
        except Exception as exc:
            failed.append((image.id, f"{type(exc).__name__}: {exc}"))
            print(f"record: {image.id} failed: {exc}", file=sys.stderr)
            # drop the half-written image dir so the partial tree still validates
            shutil.rmtree(out_root / image.id, ignore_errors=True)
    if failed:
        (out_root / "record_failures.json").write_text(
            json.dumps({image_id: err for image_id, err in failed}, sort_keys=True, indent=1),
            encoding="utf-8",
        )
    return RecordSummary(ok=tuple(ok), failed=tuple(failed))
