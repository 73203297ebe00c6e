"""Deterministic procedural adapters.

These stand in for the real models in tests and offline runs: every answer
is a pure function of (seed, image id, tag), so recorded fixtures and served
responses are reproducible without any weights.
"""
from __future__ import annotations

import hashlib
import json

import numpy as np

from ..protocol import ImageCtx

_FG_WORDS = ("owl", "crab", "moth", "gecko", "frog", "heron")
_BG_WORDS = ("bark", "sand", "coral", "leaves", "gravel", "kelp")


def _rng(seed: int, *parts) -> np.random.Generator:
    blob = json.dumps([seed, *parts], sort_keys=True).encode("utf-8")
    derived = int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")
    return np.random.default_rng(derived)


class MockTagger:
    def __init__(self, seed: int = 0):
        self.seed = seed

    def tags(self, image: ImageCtx, prompt: str, fg_query: str, bg_query: str):
        rng = _rng(self.seed, "tags", image.id, prompt)
        fg = [_FG_WORDS[int(rng.integers(0, len(_FG_WORDS)))]]
        n_bg = int(rng.integers(1, 3))
        bg = [_BG_WORDS[int(rng.integers(0, len(_BG_WORDS)))] for _ in range(n_bg)]
        caption = f"a {fg[0]} hiding in {bg[0]}"
        return caption, fg, bg


class MockDetector:
    def __init__(self, seed: int = 0):
        self.seed = seed

    def boxes(self, image: ImageCtx, tag: str):
        rng = _rng(self.seed, "boxes", image.id, tag)
        out = []
        for k in range(int(rng.integers(1, 4))):
            bw = float(rng.uniform(max(2.0, image.width / 6), image.width / 2))
            bh = float(rng.uniform(max(2.0, image.height / 6), image.height / 2))
            x0 = float(rng.uniform(0, image.width - bw))
            y0 = float(rng.uniform(0, image.height - bh))
            score = float(np.round(rng.uniform(0.4, 0.95), 4))
            out.append((x0, y0, x0 + bw, y0 + bh, score))
        return out


class MockHeatmapper:
    def __init__(self, seed: int = 0):
        self.seed = seed

    def heatmap(self, image: ImageCtx, tag: str) -> np.ndarray:
        rng = _rng(self.seed, "heatmap", image.id, tag)
        ys, xs = np.mgrid[0 : image.height, 0 : image.width]
        acc = np.zeros((image.height, image.width), dtype=np.float64)
        for _ in range(int(rng.integers(1, 4))):
            cx = float(rng.uniform(0, image.width))
            cy = float(rng.uniform(0, image.height))
            sigma = float(rng.uniform(2.0, max(3.0, min(image.width, image.height) / 4)))
            d2 = (xs + 0.5 - cx) ** 2 + (ys + 0.5 - cy) ** 2
            acc = np.maximum(acc, np.exp(-d2 / (2.0 * sigma**2)))
        return acc.astype(np.float32)


class MockSegmenter:
    def __init__(self, seed: int = 0):
        self.seed = seed

    def mask(self, image: ImageCtx, box, fg_points, bg_points) -> np.ndarray:
        # the box shrunk by 15% per side, rasterized by the pixel-center rule
        x0, y0, x1, y1 = box[:4]
        mx = 0.15 * (x1 - x0)
        my = 0.15 * (y1 - y0)
        ys, xs = np.mgrid[0 : image.height, 0 : image.width]
        px = xs + 0.5
        py = ys + 0.5
        return (
            (px >= x0 + mx) & (px < x1 - mx) & (py >= y0 + my) & (py < y1 - my)
        )
