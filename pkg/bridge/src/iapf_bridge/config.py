"""Bridge configuration: which model backs each capability, plus knobs."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class BridgeConfig:
    """Model specs per capability; ``mock:<seed>`` selects the procedural
    stand-ins, anything else is treated as a Hugging Face model id or local
    path for that capability's real adapter."""

    tagger: str = "mock:0"
    detector: str = "mock:0"
    heatmap: str = "mock:0"
    segmenter: str = "mock:0"
    device: str = "cpu"
    box_threshold: float = 0.3
    text_threshold: float = 0.25
    heatmap_upsample: str = "bilinear"

    def __post_init__(self):
        if self.heatmap_upsample not in ("bilinear", "nearest"):
            raise ValueError(f"unknown upsampling mode {self.heatmap_upsample!r}")
        if not 0.0 <= self.box_threshold <= 1.0 or not 0.0 <= self.text_threshold <= 1.0:
            raise ValueError("detector thresholds must lie in [0, 1]")

    @staticmethod
    def from_file(path) -> "BridgeConfig":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return BridgeConfig(**obj)
