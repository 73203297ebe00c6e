"""End-to-end orchestration: repeated tag->boxes->points->masks runs per
image, self-consistency voting, dataset iteration, and the synthetic
demo-dataset generator."""
from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
from PIL import Image

from .backends.base import Backend, TagBundle, TagRequest
from .backends.synthetic import SceneInstance, SyntheticScene, save_scene
from .core import BinaryMask, BoxSet, Heatmap, ImageRef, InstanceMaskStack, rle_encode
from .errors import BackendError, IapfError
from .generator import GeneratorConfig, generate_instance_masks
from .io import write_mask_png
from .simv import SemanticMask, VoteResult, collapse_semantic, vote

DEFAULT_PROMPTS = ("camouflaged animal", "hidden animal", "concealed creature")


@dataclass(frozen=True)
class PipelineConfig:
    """Run configuration; prompts are cycled to the repeat count."""

    prompts: tuple[str, ...] = DEFAULT_PROMPTS
    repeats: int = 3
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    seed: int = 0

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not self.prompts:
            raise ValueError("at least one prompt is required")
        object.__setattr__(self, "prompts", tuple(self.prompts))

    def prompt_for_run(self, run_index: int) -> str:
        return self.prompts[run_index % len(self.prompts)]

    @staticmethod
    def from_json_obj(obj: dict) -> "PipelineConfig":
        gen = obj.get("generator", {})
        sampling = gen.get("sampling", {})
        from .sfmbp import SamplingConfig

        return PipelineConfig(
            prompts=tuple(obj.get("prompts", DEFAULT_PROMPTS)),
            repeats=int(obj.get("repeats", 3)),
            seed=int(obj.get("seed", 0)),
            generator=GeneratorConfig(
                sampling=SamplingConfig(
                    tau=float(sampling.get("tau", 0.9)),
                    k_fg=int(sampling.get("k_fg", 3)),
                    k_bg=int(sampling.get("k_bg", 6)),
                    d_min_frac=float(sampling.get("d_min_frac", 0.05)),
                ),
                nms_iou=gen.get("nms_iou", 0.9),
                min_box_score=float(gen.get("min_box_score", 0.0)),
                fallback_to_full_image=bool(gen.get("fallback_to_full_image", True)),
                use_detector=bool(gen.get("use_detector", True)),
            ),
        )


@dataclass(frozen=True)
class RunRecord:
    """Everything one pipeline repetition produced for an image."""

    run_index: int
    prompt: str
    tags: TagBundle
    box_sets: dict[str, BoxSet]
    stack: InstanceMaskStack
    semantic: SemanticMask


@dataclass(frozen=True)
class RunArtifact:
    """Final per-image result with per-run provenance and call accounting."""

    image: ImageRef
    runs: tuple[RunRecord, ...]
    vote_result: VoteResult
    final_mask: BinaryMask
    final_stack: InstanceMaskStack
    call_counts: dict[str, int]
    call_seconds: dict[str, float]

    @property
    def voted_index(self) -> int:
        return self.vote_result.selected_index

    def to_json_obj(self) -> dict:
        # call seconds stay out: artifact files must be byte-stable across reruns
        return {
            "id": self.image.id,
            "width": self.image.width,
            "height": self.image.height,
            "runs": [
                {
                    "run_index": run.run_index,
                    "prompt": run.prompt,
                    "caption": run.tags.caption,
                    "fg_tags": list(run.tags.fg_tags),
                    "bg_tags": list(run.tags.bg_tags),
                    "boxes": {
                        tag: [[b.x0, b.y0, b.x1, b.y1, b.score] for b in box_set]
                        for tag, box_set in sorted(run.box_sets.items())
                    },
                    "instances": len(run.stack),
                }
                for run in self.runs
            ],
            "voted_index": self.vote_result.selected_index,
            "vote_distances": list(self.vote_result.distances),
            "final_instances": len(self.final_stack),
            "backend_calls": dict(sorted(self.call_counts.items())),
        }


class _InstrumentedBackend(Backend):
    """Counts and times calls; memoizes heatmaps per (image, tag) so duplicate
    tags inside one image cost exactly one backend computation."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self.counts: dict[str, int] = {}
        self.seconds: dict[str, float] = {}
        self._heatmaps: dict[tuple[str, str], Heatmap] = {}

    def _timed(self, name: str, fn, *args):
        start = time.perf_counter()
        try:
            return fn(*args)
        finally:
            self.counts[name] = self.counts.get(name, 0) + 1
            self.seconds[name] = self.seconds.get(name, 0.0) + time.perf_counter() - start

    def generate_tags(self, image, request):
        return self._timed("generate_tags", self.inner.generate_tags, image, request)

    def detect_boxes(self, image, tag):
        return self._timed("detect_boxes", self.inner.detect_boxes, image, tag)

    def compute_heatmap(self, image, tag):
        key = (image.id, tag)
        if key not in self._heatmaps:
            self._heatmaps[key] = self._timed(
                "compute_heatmap", self.inner.compute_heatmap, image, tag
            )
        return self._heatmaps[key]

    def segment(self, image, triplet):
        return self._timed("segment", self.inner.segment, image, triplet)


def run_image(image: ImageRef, cfg: PipelineConfig, backend: Backend) -> RunArtifact:
    """Run the repeated pipeline on one image and vote the most consistent run.

    Any failing run aborts the whole image: the vote presumes comparable
    candidates from every repetition.
    """
    instrumented = _InstrumentedBackend(backend)
    runs: list[RunRecord] = []
    for run_index in range(cfg.repeats):
        prompt = cfg.prompt_for_run(run_index)
        try:
            tags = instrumented.generate_tags(image, TagRequest(prompt=prompt))
            box_sets: dict[str, BoxSet] = {}
            stacks: list[InstanceMaskStack] = []
            for fg_tag in tags.fg_tags:
                stack = generate_instance_masks(
                    image, fg_tag, tags.bg_tags, instrumented, cfg.generator
                )
                box_sets[fg_tag] = BoxSet(tag=fg_tag, boxes=stack.box_provenance)
                stacks.append(stack)
            merged = _concat_stacks(stacks)
        except IapfError as exc:
            raise BackendError(
                f"run {run_index} (prompt {prompt!r}) failed on image {image.id!r}: {exc}"
            ) from exc
        semantic = SemanticMask(mask=collapse_semantic(merged), run_index=run_index)
        runs.append(
            RunRecord(
                run_index=run_index,
                prompt=prompt,
                tags=tags,
                box_sets=box_sets,
                stack=merged,
                semantic=semantic,
            )
        )
    result = vote([run.semantic.mask for run in runs])
    winner = runs[result.selected_index]
    return RunArtifact(
        image=image,
        runs=tuple(runs),
        vote_result=result,
        final_mask=winner.semantic.mask,
        final_stack=winner.stack,
        call_counts=instrumented.counts,
        call_seconds=instrumented.seconds,
    )


def _concat_stacks(stacks: Sequence[InstanceMaskStack]) -> InstanceMaskStack:
    # multiple foreground tags each contribute their instances
    masks = [m for stack in stacks for m in stack.masks]
    boxes = [b for stack in stacks for b in stack.box_provenance]
    return InstanceMaskStack(masks=masks, box_provenance=boxes)


# ---------------------------------------------------------------------------
# dataset iteration


@dataclass(frozen=True)
class DatasetImage:
    ref: ImageRef
    scene_path: Optional[Path] = None


def discover_images(image_dir) -> list[DatasetImage]:
    """Find images as JSON manifests or PNG/JPEG files, ordered by id.

    Manifests: ``{"id"?, "width", "height", "pixel_source"?, "scene"?}``;
    relative paths resolve against the manifest location.
    """
    image_dir = Path(image_dir)
    found: dict[str, DatasetImage] = {}
    for path in sorted(image_dir.glob("*.json")):
        obj = json.loads(path.read_text(encoding="utf-8"))
        image_id = obj.get("id", path.stem)
        pixel_source = obj.get("pixel_source")
        if pixel_source is not None:
            pixel_source = str((path.parent / pixel_source).resolve())
        scene = obj.get("scene")
        found[image_id] = DatasetImage(
            ref=ImageRef(
                id=image_id,
                width=int(obj["width"]),
                height=int(obj["height"]),
                pixel_source=pixel_source,
            ),
            scene_path=(path.parent / scene).resolve() if scene else None,
        )
    for pattern in ("*.png", "*.jpg", "*.jpeg"):
        for path in sorted(image_dir.glob(pattern)):
            if path.stem in found:
                continue
            with Image.open(path) as img:
                width, height = img.size
            found[path.stem] = DatasetImage(
                ref=ImageRef(
                    id=path.stem, width=width, height=height, pixel_source=str(path.resolve())
                )
            )
    if not found:
        raise IapfError(f"no images found under {image_dir}")
    return [found[k] for k in sorted(found)]


BackendSource = Union[Backend, Callable[[DatasetImage], Backend]]


@dataclass(frozen=True)
class DatasetSummary:
    ok: tuple[str, ...]
    failed: tuple[tuple[str, str], ...]  # (image id, error message)

    def one_line(self) -> str:
        return f"{len(self.ok)} ok, {len(self.failed)} failed"


def run_dataset(
    image_dir,
    cfg: PipelineConfig,
    backend: BackendSource,
    out_dir,
    jobs: int = 1,
) -> DatasetSummary:
    """Process every image, writing mask PNG, instance JSON, and artifact JSON.

    Per-image failures are collected, not fatal to the rest of the dataset.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    images = discover_images(image_dir)

    def process(entry: DatasetImage) -> tuple[str, Optional[str]]:
        try:
            b = backend(entry) if callable(backend) else backend
            artifact = run_image(entry.ref, cfg, b)
            _write_outputs(out, artifact)
            return entry.ref.id, None
        except IapfError as exc:
            return entry.ref.id, str(exc)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(process, images))
    else:
        results = [process(entry) for entry in images]

    ok = tuple(image_id for image_id, err in results if err is None)
    failed = tuple((image_id, err) for image_id, err in results if err is not None)
    return DatasetSummary(ok=ok, failed=failed)


def _write_outputs(out: Path, artifact: RunArtifact) -> None:
    image_id = artifact.image.id
    write_mask_png(out / f"{image_id}.png", artifact.final_mask)
    instances = {
        "size": [artifact.final_stack.height, artifact.final_stack.width],
        "instances": [
            {"score": box.score, "rle": rle_encode(mask).to_json_obj()}
            for mask, box in zip(
                artifact.final_stack.masks, artifact.final_stack.box_provenance
            )
        ],
    }
    (out / f"{image_id}.inst.json").write_text(
        json.dumps(instances, sort_keys=True), encoding="utf-8"
    )
    (out / f"{image_id}.artifact.json").write_text(
        json.dumps(artifact.to_json_obj(), sort_keys=True, indent=1), encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# synthetic demo dataset

_FG_WORDS = ("owl", "crab", "moth", "gecko", "frog", "pipefish")
_BG_WORDS = ("bark", "sand", "coral", "leaves", "gravel", "kelp")


def make_synthetic_dataset(n_images: int, seed: int, out_dir) -> list[str]:
    """Write n procedurally generated scenes with ground truth.

    Layout under out_dir: ``images/<id>.json`` manifests (pointing at
    ``scenes/<id>.scene.json``), plus ``gt/<id>.png`` and ``gt/<id>.inst.json``.
    Returns the image ids.
    """
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    out = Path(out_dir)
    for sub in ("images", "scenes", "gt"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    ids = []
    for index in range(n_images):
        image_id = f"synth_{index:04d}"
        scene = _random_scene(rng, seed=seed * 100003 + index)
        save_scene(out / "scenes" / f"{image_id}.scene.json", scene)
        manifest = {
            "id": image_id,
            "width": scene.width,
            "height": scene.height,
            "scene": f"../scenes/{image_id}.scene.json",
        }
        (out / "images" / f"{image_id}.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=1), encoding="utf-8"
        )
        write_mask_png(out / "gt" / f"{image_id}.png", scene.semantic_ground_truth())
        gt_instances = {
            "size": [scene.height, scene.width],
            "instances": [
                {"score": 1.0, "rle": rle_encode(m).to_json_obj()}
                for m in scene.instance_ground_truth()
            ],
        }
        (out / "gt" / f"{image_id}.inst.json").write_text(
            json.dumps(gt_instances, sort_keys=True), encoding="utf-8"
        )
        ids.append(image_id)
    return ids


def _random_scene(rng: np.random.Generator, seed: int) -> SyntheticScene:
    width = int(rng.integers(48, 81))
    height = int(rng.integers(48, 81))
    n_instances = int(rng.integers(1, 5))
    tag = _FG_WORDS[int(rng.integers(0, len(_FG_WORDS)))]
    bg_count = int(rng.integers(1, 3))
    bg_tags = list(
        dict.fromkeys(_BG_WORDS[int(rng.integers(0, len(_BG_WORDS)))] for _ in range(bg_count))
    )
    instances: list[SceneInstance] = []
    occupied: list[tuple[float, float, float]] = []  # (cx, cy, reach)
    attempts = 0
    while len(instances) < n_instances and attempts < 200:
        attempts += 1
        radius = float(rng.integers(4, 10))
        cx = float(rng.uniform(radius + 1, width - radius - 1))
        cy = float(rng.uniform(radius + 1, height - radius - 1))
        # keep tight boxes disjoint so every instance is separately detectable
        if any(
            abs(cx - ox) < radius + orad + 2 and abs(cy - oy) < radius + orad + 2
            for ox, oy, orad in occupied
        ):
            continue
        shape = "disk" if rng.random() < 0.7 else "rect"
        if shape == "disk":
            instances.append(
                SceneInstance(shape="disk", cx=cx, cy=cy, rx=radius, ry=radius, tag=tag)
            )
        else:
            ry = max(3.0, radius - float(rng.integers(0, 3)))
            instances.append(
                SceneInstance(shape="rect", cx=cx, cy=cy, rx=radius, ry=ry, tag=tag)
            )
        occupied.append((cx, cy, radius))
    return SyntheticScene(
        width=width,
        height=height,
        instances=instances,
        bg_tags=bg_tags,
        caption=f"synthetic {tag} scene",
        jitter=0.0,
        seed=seed,
    )


def scene_backend_factory(cfg: PipelineConfig):
    """Backend source for synthetic datasets: one oracle backend per scene."""
    from .backends.synthetic import load_scene, synthetic_backend

    def factory(entry: DatasetImage) -> Backend:
        if entry.scene_path is None:
            raise BackendError(
                f"image {entry.ref.id!r} has no scene file; synthetic backend needs one"
            )
        try:
            scene = load_scene(entry.scene_path)
        except (OSError, ValueError, KeyError) as exc:
            raise BackendError(
                f"cannot load scene for image {entry.ref.id!r}: {exc}"
            ) from exc
        if cfg.seed:
            scene = SyntheticScene(
                width=scene.width,
                height=scene.height,
                instances=scene.instances,
                bg_tags=scene.bg_tags,
                caption=scene.caption,
                jitter=scene.jitter,
                seed=scene.seed ^ cfg.seed,
            )
        return synthetic_backend(scene)

    return factory
