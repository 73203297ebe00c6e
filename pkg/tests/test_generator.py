import numpy as np
import pytest

from iapf.backends.synthetic import SceneInstance, SyntheticScene, synthetic_backend
from iapf.core import BBox, BoxSet, Heatmap, ImageRef, mask_iou, rasterize_box
from iapf.errors import NoBoxes
from iapf.generator import (
    GeneratorConfig,
    build_triplets,
    generate_instance_masks,
    prepare_boxes,
)
from iapf.sfmbp import SamplingConfig

IMAGE = ImageRef(id="img", width=32, height=24)
CFG = GeneratorConfig(sampling=SamplingConfig(d_min_frac=0.0))


def _scene_two_disks():
    return SyntheticScene(
        width=32,
        height=24,
        instances=[
            SceneInstance(shape="disk", cx=8.0, cy=8.0, rx=5.0, ry=5.0, tag="owl"),
            SceneInstance(shape="disk", cx=24.0, cy=14.0, rx=6.0, ry=6.0, tag="owl"),
        ],
        bg_tags=["bark"],
    )


class TestPrepareBoxes:
    def test_exact_duplicate_suppressed(self):
        raw = BoxSet(
            tag="owl",
            boxes=[BBox(2, 2, 10, 10, 0.9), BBox(2, 2, 10, 10, 0.8)],
        )
        out = prepare_boxes(raw, IMAGE, CFG)
        assert len(out) == 1
        assert out.boxes[0].score == 0.9

    def test_empty_input_falls_back_to_full_image(self):
        out = prepare_boxes(BoxSet(tag="owl", boxes=[]), IMAGE, CFG)
        assert len(out) == 1
        b = out.boxes[0]
        assert (b.x0, b.y0, b.x1, b.y1, b.score) == (0, 0, 32, 24, 0)

    def test_moderate_overlap_kept(self):
        # two 4x8 boxes sharing half their area: IoU 1/3 < 0.9
        raw = BoxSet(tag="owl", boxes=[BBox(0, 0, 8, 4, 0.9), BBox(4, 0, 12, 4, 0.8)])
        out = prepare_boxes(raw, IMAGE, CFG)
        assert len(out) == 2

    def test_no_boxes_raises_when_fallback_disabled(self):
        cfg = GeneratorConfig(fallback_to_full_image=False)
        with pytest.raises(NoBoxes):
            prepare_boxes(BoxSet(tag="owl", boxes=[]), IMAGE, cfg)

    def test_degenerate_and_low_score_dropped(self):
        cfg = GeneratorConfig(min_box_score=0.5)
        raw = BoxSet(
            tag="owl",
            boxes=[
                BBox(-4, -4, 0.5, 0.5, 0.9),  # degenerate after clamping
                BBox(1, 1, 9, 9, 0.4),  # below the score floor
                BBox(12, 4, 20, 12, 0.8),
            ],
        )
        out = prepare_boxes(raw, IMAGE, cfg)
        assert [b.score for b in out] == [0.8]

    def test_nms_disabled(self):
        cfg = GeneratorConfig(nms_iou=None)
        raw = BoxSet(tag="owl", boxes=[BBox(2, 2, 10, 10, 0.9), BBox(2, 2, 10, 10, 0.8)])
        assert len(prepare_boxes(raw, IMAGE, cfg)) == 2


class TestBuildTriplets:
    def test_constant_heatmaps_fallback(self):
        boxes = BoxSet(tag="owl", boxes=[BBox(4, 4, 12, 12, 1.0)])
        flat = Heatmap(np.full((24, 32), 0.5))
        triplets = build_triplets(IMAGE, boxes, flat, [flat], CFG)
        assert len(triplets) == 1
        assert len(triplets[0].fg_points) == 1
        assert triplets[0].bg_points == ()

    def test_two_peaks_land_in_their_boxes(self):
        scene = _scene_two_disks()
        backend = synthetic_backend(scene)
        h_fg = backend.compute_heatmap(IMAGE, "owl")
        boxes = prepare_boxes(backend.detect_boxes(IMAGE, "owl"), IMAGE, CFG)
        triplets = build_triplets(IMAGE, boxes, h_fg, [], CFG)
        assert len(triplets) == 2
        for triplet in triplets:
            peak = triplet.fg_points[0]
            # the top point sits at the instance center of its own box
            assert triplet.box.contains_pixel(peak.x, peak.y)
            assert any(
                abs(peak.x + 0.5 - inst.cx) <= 1 and abs(peak.y + 0.5 - inst.cy) <= 1
                for inst in scene.instances
            )

    def test_cardinality(self, rng):
        boxes = BoxSet(
            tag="owl",
            boxes=[
                BBox(float(x), float(y), float(x) + 6, float(y) + 6, 0.5)
                for x, y in rng.integers(0, 16, size=(5, 2))
            ],
        )
        prepared = prepare_boxes(boxes, IMAGE, GeneratorConfig(nms_iou=None))
        h = Heatmap(rng.random((24, 32)))
        triplets = build_triplets(IMAGE, prepared, h, [], CFG)
        assert len(triplets) == len(prepared)


class TestGenerateInstanceMasks:
    def test_two_disks_oracle(self):
        scene = _scene_two_disks()
        backend = synthetic_backend(scene)
        stack = generate_instance_masks(IMAGE, "owl", scene.bg_tags, backend, CFG)
        assert len(stack) == 2
        gt = scene.instance_ground_truth()
        for produced in stack.masks:
            assert max(mask_iou(produced, g) for g in gt) == 1.0

    def test_detector_disabled_uses_full_image_box(self):
        scene = _scene_two_disks()
        backend = synthetic_backend(scene)
        cfg = GeneratorConfig(use_detector=False)
        stack = generate_instance_masks(IMAGE, "owl", [], backend, cfg)
        assert len(stack) == 1
        assert stack.box_provenance[0].x1 == IMAGE.width

    def test_single_box_single_disk(self):
        scene = SyntheticScene(
            width=32,
            height=24,
            instances=[SceneInstance(shape="disk", cx=16.0, cy=12.0, rx=6.0, ry=6.0, tag="owl")],
        )
        backend = synthetic_backend(scene)
        stack = generate_instance_masks(IMAGE, "owl", [], backend, CFG)
        assert len(stack) == 1
        assert mask_iou(stack.masks[0], scene.instance_ground_truth()[0]) == 1.0

    def test_masks_inside_their_boxes(self):
        scene = _scene_two_disks()
        backend = synthetic_backend(scene)
        stack = generate_instance_masks(IMAGE, "owl", [], backend, CFG)
        for produced, box in zip(stack.masks, stack.box_provenance):
            box_pixels = rasterize_box(box, IMAGE)
            assert not (produced.bits & ~box_pixels.bits).any()

    def test_order_stability_under_detector_permutation(self):
        scene = _scene_two_disks()
        backend = synthetic_backend(scene)

        class Shuffled:
            def __init__(self, inner):
                self.inner = inner

            def generate_tags(self, image, request):
                return self.inner.generate_tags(image, request)

            def detect_boxes(self, image, tag):
                boxes = self.inner.detect_boxes(image, tag)
                return BoxSet(tag=tag, boxes=list(reversed(boxes.boxes)))

            def compute_heatmap(self, image, tag):
                return self.inner.compute_heatmap(image, tag)

            def segment(self, image, triplet):
                return self.inner.segment(image, triplet)

        plain = generate_instance_masks(IMAGE, "owl", [], backend, CFG)
        shuffled = generate_instance_masks(IMAGE, "owl", [], Shuffled(backend), CFG)
        assert len(plain) == len(shuffled)
        for a, b in zip(plain.masks, shuffled.masks):
            assert np.array_equal(a.bits, b.bits)
