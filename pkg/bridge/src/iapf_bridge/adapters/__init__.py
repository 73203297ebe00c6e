"""Model adapters: the four capabilities the bridge serves.

Adapter contract (duck-typed):
  tagger.tags(image, prompt, fg_query, bg_query) -> (caption, fg_tags, bg_tags)
  detector.boxes(image, tag) -> [(x0, y0, x1, y1, score), ...]
  heatmapper.heatmap(image, tag) -> float32 ndarray (image.height, image.width)
  segmenter.mask(image, box, fg_points, bg_points) -> bool ndarray (H, W),
  where box is (x0, y0, x1, y1, score) and points are (x, y) int pairs

``image`` is a protocol.ImageCtx; real adapters read pixels from its path.
"""
from __future__ import annotations

from dataclasses import dataclass

from ..config import BridgeConfig


@dataclass(frozen=True)
class Adapters:
    tagger: object
    detector: object
    heatmapper: object
    segmenter: object


def resolve_adapters(cfg: BridgeConfig) -> Adapters:
    """Construct all four adapters; raises if any model is unresolvable."""
    return Adapters(
        tagger=_resolve("tagger", cfg.tagger, cfg),
        detector=_resolve("detector", cfg.detector, cfg),
        heatmapper=_resolve("heatmap", cfg.heatmap, cfg),
        segmenter=_resolve("segmenter", cfg.segmenter, cfg),
    )


def _resolve(capability: str, spec: str, cfg: BridgeConfig):
    if spec.startswith("mock:"):
        from . import mock

        seed = int(spec.split(":", 1)[1] or "0")
        return {
            "tagger": mock.MockTagger,
            "detector": mock.MockDetector,
            "heatmap": mock.MockHeatmapper,
            "segmenter": mock.MockSegmenter,
        }[capability](seed=seed)
    from . import hf

    return {
        "tagger": hf.HfTagger,
        "detector": hf.HfDetector,
        "heatmap": hf.HfClipHeatmapper,
        "segmenter": hf.HfSamSegmenter,
    }[capability](spec, cfg)
