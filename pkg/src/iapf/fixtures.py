"""Schema and invariant checks over a fixture tree."""
from __future__ import annotations

import json
from pathlib import Path

from .core import RleMask
from .errors import FixtureCorrupt
from .io import read_heatmap


def _check_tag(tag) -> bool:
    return isinstance(tag, str) and tag.strip() == tag and tag and not any(
        ch.isspace() for ch in tag
    )


def _validate_tags_file(path: Path, problems: list[str]) -> None:
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        problems.append(f"{path}: not valid JSON ({exc})")
        return
    if not isinstance(obj, dict) or not isinstance(obj.get("caption"), str):
        problems.append(f"{path}: needs a string caption")
        return
    runs = obj.get("runs")
    if not isinstance(runs, list) or not runs:
        problems.append(f"{path}: needs a nonempty runs list")
        return
    for i, run in enumerate(runs):
        if not isinstance(run, dict) or not isinstance(run.get("prompt"), str):
            problems.append(f"{path}: run {i} needs a string prompt")
            continue
        fg = run.get("fg_tags")
        if not isinstance(fg, list) or not fg or not all(_check_tag(t) for t in fg):
            problems.append(f"{path}: run {i} needs nonempty single-token fg_tags")
        bg = run.get("bg_tags", [])
        if not isinstance(bg, list) or not all(_check_tag(t) for t in bg):
            problems.append(f"{path}: run {i} bg_tags must be single tokens")
        elif len(set(bg)) != len(bg):
            problems.append(f"{path}: run {i} bg_tags must be deduplicated")


def _validate_boxes_file(path: Path, problems: list[str]) -> None:
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        problems.append(f"{path}: not valid JSON ({exc})")
        return
    if not isinstance(obj, list):
        problems.append(f"{path}: must hold a JSON array of boxes")
        return
    for i, entry in enumerate(obj):
        try:
            x0, y0 = float(entry["x0"]), float(entry["y0"])
            x1, y1 = float(entry["x1"]), float(entry["y1"])
            score = float(entry["score"])
        except (KeyError, TypeError, ValueError):
            problems.append(f"{path}: box {i} is missing numeric fields")
            continue
        if not (x0 < x1 and y0 < y1):
            problems.append(f"{path}: box {i} is empty ({x0}, {y0}, {x1}, {y1})")
        if not 0.0 <= score <= 1.0:
            problems.append(f"{path}: box {i} score {score} outside [0, 1]")


def _validate_rle_file(path: Path, problems: list[str]) -> tuple[int, int] | None:
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
        rle = RleMask.from_json_obj(obj)
    except (ValueError, KeyError, TypeError) as exc:
        problems.append(f"{path}: bad RLE JSON ({exc})")
        return None
    h, w = rle.size
    if h < 1 or w < 1:
        problems.append(f"{path}: non-positive size {h}x{w}")
        return None
    if sum(rle.counts) != h * w:
        problems.append(f"{path}: counts sum {sum(rle.counts)} != {h}x{w}")
        return None
    return (h, w)


def validate_fixture_tree(root) -> list[str]:
    """Return a list of human-readable violations; empty means valid."""
    root = Path(root)
    problems: list[str] = []
    if not root.is_dir():
        return [f"{root}: not a directory"]
    image_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not image_dirs:
        problems.append(f"{root}: no image directories")
    for image_dir in image_dirs:
        tags = image_dir / "tags.json"
        if tags.is_file():
            _validate_tags_file(tags, problems)
        else:
            problems.append(f"{tags}: missing")
        for path in sorted((image_dir / "boxes").glob("*.json")):
            _validate_boxes_file(path, problems)
        dims: set[tuple[int, int]] = set()
        for path in sorted((image_dir / "heatmaps").glob("*.iahm")):
            try:
                heatmap = read_heatmap(path)
                dims.add((heatmap.height, heatmap.width))
            except FixtureCorrupt as exc:
                problems.append(str(exc))
        if len(dims) > 1:
            problems.append(f"{image_dir}: heatmaps disagree on dimensions {sorted(dims)}")
        for path in sorted((image_dir / "segments").glob("*.rle.json")):
            size = _validate_rle_file(path, problems)
            if size is not None and dims and size not in dims:
                problems.append(
                    f"{path}: mask size {size} does not match heatmap dimensions"
                )
    return problems
