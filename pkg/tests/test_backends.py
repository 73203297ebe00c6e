import json
import sys
import threading
import time
from pathlib import Path

import numpy as np
import pytest

from iapf.backends.base import PromptTriplet, TagBundle, TagRequest, triplet_digest
from iapf.backends.fixture import FixtureBackend, RecordingBackend
from iapf.backends.synthetic import SceneInstance, SyntheticScene, synthetic_backend
from iapf.backends.wire import SubprocessBackend
from iapf.core import BBox, Heatmap, ImageRef, box_iou, mask_iou, tight_box
from iapf.errors import (
    FixtureCorrupt,
    FixtureMissing,
    ProtocolError,
    RemoteError,
    TransportError,
    UnknownTag,
    WireTimeout,
)
from iapf.io import write_heatmap
from iapf.sfmbp import Point

SERVER = Path(__file__).with_name("wire_servers.py")


def server_cmd(mode: str) -> str:
    return f"{sys.executable} {SERVER} {mode}"


IMAGE = ImageRef(id="img0", width=6, height=5, pixel_source="/nonexistent.png")


def _triplet():
    return PromptTriplet(
        box=BBox(1.0, 1.0, 5.0, 4.0, 0.9),
        fg_points=[Point(2, 2, 1.0)],
        bg_points=[Point(4, 3, 0.95)],
    )


class TestTagBundle:
    def test_dedup_preserves_first_occurrence(self):
        bundle = TagBundle(caption="c", fg_tags=["owl"], bg_tags=["bark", "moss", "bark"])
        assert bundle.bg_tags == ("bark", "moss")

    def test_rejects_multi_word(self):
        with pytest.raises(ValueError):
            TagBundle(caption="c", fg_tags=["snow owl"], bg_tags=[])

    def test_requires_foreground(self):
        with pytest.raises(ValueError):
            TagBundle(caption="c", fg_tags=[], bg_tags=["bark"])

    def test_query_rendering(self):
        req = TagRequest(prompt="camouflaged animal")
        assert req.fg_query() == "Name of the camouflaged animal in one word."
        assert req.bg_query() == "Name of the environment of the camouflaged animal in one word."


class TestTripletDigest:
    def test_stable_under_point_order_and_score(self):
        a = PromptTriplet(
            box=BBox(1.0, 1.0, 5.0, 4.0, 0.9),
            fg_points=[Point(2, 2, 1.0), Point(4, 3, 0.9)],
        )
        b = PromptTriplet(
            box=BBox(1.0, 1.0, 5.0, 4.0, 0.2),  # score differs
            fg_points=[Point(4, 3, 0.5), Point(2, 2, 0.7)],  # order/conf differ
        )
        assert triplet_digest(a) == triplet_digest(b)

    def test_rounding_to_two_decimals(self):
        a = PromptTriplet(box=BBox(1.004, 1.0, 5.0, 4.0, 0.9), fg_points=[Point(2, 2, 1.0)])
        b = PromptTriplet(box=BBox(0.996, 1.0, 5.0, 4.0, 0.9), fg_points=[Point(2, 2, 1.0)])
        assert triplet_digest(a) == triplet_digest(b)

    def test_distinct_points_distinct_digest(self):
        a = _triplet()
        b = PromptTriplet(box=a.box, fg_points=[Point(3, 2, 1.0)], bg_points=a.bg_points)
        assert triplet_digest(a) != triplet_digest(b)


class TestSyntheticBackend:
    def _scene(self):
        # half-integer centers sit exactly on pixel centers
        return SyntheticScene(
            width=40,
            height=30,
            instances=[
                SceneInstance(shape="disk", cx=10.5, cy=10.5, rx=6.0, ry=6.0, tag="owl"),
                SceneInstance(shape="rect", cx=30.5, cy=20.5, rx=5.0, ry=4.0, tag="owl"),
            ],
            bg_tags=["bark", "moss"],
        )

    def test_detect_returns_tight_boxes(self):
        scene = self._scene()
        backend = synthetic_backend(scene)
        image = ImageRef(id="s", width=40, height=30)
        boxes = backend.detect_boxes(image, "owl")
        assert len(boxes) == 2
        tights = {tuple((b.x0, b.y0, b.x1, b.y1)) for b in boxes}
        expected = {
            tuple((t.x0, t.y0, t.x1, t.y1))
            for t in (tight_box(m) for m in scene.instance_ground_truth())
        }
        assert tights == expected

    def test_heatmap_peaks_at_centers(self):
        scene = self._scene()
        backend = synthetic_backend(scene)
        image = ImageRef(id="s", width=40, height=30)
        h = backend.compute_heatmap(image, "owl")
        for inst in scene.instances:
            # pixel whose center is nearest the instance center
            assert h.values[int(inst.cy), int(inst.cx)] > 0.99
        corner = h.values[29, 0]
        assert corner < 0.9

    def test_bg_heatmap_deterministic(self):
        scene = self._scene()
        image = ImageRef(id="s", width=40, height=30)
        a = synthetic_backend(scene).compute_heatmap(image, "bark")
        b = synthetic_backend(scene).compute_heatmap(image, "bark")
        assert np.array_equal(a.values, b.values)

    def test_unknown_tag(self):
        backend = synthetic_backend(self._scene())
        with pytest.raises(UnknownTag):
            backend.detect_boxes(ImageRef(id="s", width=40, height=30), "dragon")

    def test_tags_listed(self):
        backend = synthetic_backend(self._scene())
        bundle = backend.generate_tags(
            ImageRef(id="s", width=40, height=30), TagRequest(prompt="x")
        )
        assert bundle.fg_tags == ("owl",)
        assert bundle.bg_tags == ("bark", "moss")

    def test_soundness_random_scenes(self, rng):
        # at jitter 0, detected boxes are tight boxes and segment() returns
        # the exact matching instance
        for trial in range(10):
            width, height = int(rng.integers(24, 49)), int(rng.integers(24, 49))
            instances = []
            for k in range(int(rng.integers(1, 4))):
                r = float(rng.integers(3, 6))
                instances.append(
                    SceneInstance(
                        shape="disk",
                        cx=float(rng.uniform(r + 1, width - r - 1)),
                        cy=float(rng.uniform(r + 1, height - r - 1)),
                        rx=r,
                        ry=r,
                        tag="owl",
                    )
                )
            scene = SyntheticScene(width=width, height=height, instances=instances)
            backend = synthetic_backend(scene)
            image = ImageRef(id=f"t{trial}", width=width, height=height)
            gt_masks = scene.instance_ground_truth()
            gt_boxes = [tight_box(m) for m in gt_masks]
            for box in backend.detect_boxes(image, "owl"):
                matches = [
                    i
                    for i, t in enumerate(gt_boxes)
                    if t is not None and box_iou(box, t) == 1.0
                ]
                assert len(matches) >= 1
                xs, _ = box.pixel_range()
                fg = [Point(xs.start, int(box.y0 + 0.5), 1.0)]
                produced = backend.segment(image, PromptTriplet(box=box, fg_points=fg))
                assert max(mask_iou(produced, gt_masks[i]) for i in matches) == 1.0


class TestFixtureBackend:
    def _build_tree(self, root: Path):
        d = root / IMAGE.id
        (d / "boxes").mkdir(parents=True)
        (d / "heatmaps").mkdir()
        (d / "segments").mkdir()
        (d / "tags.json").write_text(
            json.dumps(
                {
                    "caption": "a scene",
                    "runs": [
                        {"prompt": "camouflaged animal", "fg_tags": ["owl"], "bg_tags": ["bark"]}
                    ],
                }
            )
        )
        (d / "boxes" / "owl.json").write_text(
            json.dumps([{"x0": 1.0, "y0": 1.0, "x1": 5.0, "y1": 4.0, "score": 0.9}])
        )
        values = np.arange(30, dtype=np.float32).reshape(5, 6) / 30.0
        write_heatmap(d / "heatmaps" / "owl.iahm", Heatmap(values))
        digest = triplet_digest(_triplet())
        (d / "segments" / f"{digest}.rle.json").write_text(
            json.dumps({"size": [5, 6], "counts": [0, 30], "order": "row-major", "start": "zero"})
        )
        return values

    def test_round_trip(self, tmp_path):
        values = self._build_tree(tmp_path)
        backend = FixtureBackend(tmp_path)
        bundle = backend.generate_tags(IMAGE, TagRequest(prompt="camouflaged animal"))
        assert bundle.fg_tags == ("owl",)
        boxes = backend.detect_boxes(IMAGE, "owl")
        assert len(boxes) == 1 and boxes.boxes[0].score == 0.9
        h = backend.compute_heatmap(IMAGE, "owl")
        assert np.array_equal(h.values, values.astype(np.float64))
        m = backend.segment(IMAGE, _triplet())
        assert m.bits.all()

    def test_missing_boxes(self, tmp_path):
        self._build_tree(tmp_path)
        backend = FixtureBackend(tmp_path)
        with pytest.raises(FixtureMissing):
            backend.detect_boxes(IMAGE, "dragon")

    def test_missing_prompt(self, tmp_path):
        self._build_tree(tmp_path)
        backend = FixtureBackend(tmp_path)
        with pytest.raises(FixtureMissing):
            backend.generate_tags(IMAGE, TagRequest(prompt="unseen prompt"))

    def test_heatmap_dim_mismatch(self, tmp_path):
        self._build_tree(tmp_path)
        backend = FixtureBackend(tmp_path)
        wrong = ImageRef(id=IMAGE.id, width=7, height=5)
        with pytest.raises(FixtureCorrupt):
            backend.compute_heatmap(wrong, "owl")

    def test_recording_round_trip(self, tmp_path):
        scene = SyntheticScene(
            width=6,
            height=5,
            instances=[SceneInstance(shape="rect", cx=3.0, cy=2.5, rx=1.5, ry=1.5, tag="owl")],
            bg_tags=["bark"],
        )
        recorder = RecordingBackend(synthetic_backend(scene), tmp_path)
        bundle = recorder.generate_tags(IMAGE, TagRequest(prompt="camouflaged animal"))
        boxes = recorder.detect_boxes(IMAGE, "owl")
        heat = recorder.compute_heatmap(IMAGE, "owl")
        triplet = _triplet()
        produced = recorder.segment(IMAGE, triplet)

        replay = FixtureBackend(tmp_path)
        assert replay.generate_tags(IMAGE, TagRequest(prompt="camouflaged animal")) == bundle
        assert replay.detect_boxes(IMAGE, "owl") == boxes
        assert np.array_equal(replay.compute_heatmap(IMAGE, "owl").values, heat.values)
        assert np.array_equal(replay.segment(IMAGE, triplet).bits, produced.bits)


class TestWireBackend:
    def test_good_round_trip(self):
        with SubprocessBackend(server_cmd("good"), timeout=10) as backend:
            bundle = backend.generate_tags(IMAGE, TagRequest(prompt="p"))
            assert bundle.fg_tags == ("owl",)
            assert bundle.bg_tags == ("bark", "moss")  # dedup applied client-side
            boxes = backend.detect_boxes(IMAGE, "owl")
            assert len(boxes) == 1
            h = backend.compute_heatmap(IMAGE, "owl")
            assert (h.height, h.width) == (IMAGE.height, IMAGE.width)
            m = backend.segment(IMAGE, _triplet())
            assert not m.bits.any()

    def test_id_match_accepted(self):
        with SubprocessBackend(server_cmd("good"), timeout=10) as backend:
            for _ in range(3):  # ids 0, 1, 2 all matched
                backend.detect_boxes(IMAGE, "owl")

    def test_mismatched_id(self):
        with SubprocessBackend(server_cmd("badid"), timeout=10) as backend:
            with pytest.raises(ProtocolError):
                backend.detect_boxes(IMAGE, "owl")

    def test_non_json_response(self):
        with SubprocessBackend(server_cmd("badjson"), timeout=10) as backend:
            with pytest.raises(ProtocolError):
                backend.detect_boxes(IMAGE, "owl")

    def test_remote_error(self):
        with SubprocessBackend(server_cmd("error"), timeout=10) as backend:
            with pytest.raises(RemoteError) as excinfo:
                backend.detect_boxes(IMAGE, "owl")
            assert excinfo.value.code == 3

    def test_short_heatmap_payload(self):
        with SubprocessBackend(server_cmd("shortheat"), timeout=10) as backend:
            with pytest.raises(ProtocolError):
                backend.compute_heatmap(IMAGE, "owl")

    def test_neither_result_nor_error(self):
        with SubprocessBackend(server_cmd("noresult"), timeout=10) as backend:
            with pytest.raises(ProtocolError):
                backend.detect_boxes(IMAGE, "owl")

    def test_timeout(self):
        start = time.monotonic()
        with SubprocessBackend(server_cmd("hang"), timeout=0.5) as backend:
            with pytest.raises(WireTimeout):
                backend.detect_boxes(IMAGE, "owl")
        assert time.monotonic() - start < 5.0

    def test_process_exit(self):
        with SubprocessBackend(server_cmd("exit"), timeout=5) as backend:
            with pytest.raises(TransportError):
                backend.detect_boxes(IMAGE, "owl")

    def test_garbage_stream(self):
        with SubprocessBackend(server_cmd("garbage"), timeout=5) as backend:
            with pytest.raises((ProtocolError, TransportError)):
                backend.detect_boxes(IMAGE, "owl")

    def test_single_request_in_flight(self):
        # the strict server answers with code 99 if it ever sees a pipelined frame
        with SubprocessBackend(server_cmd("strict"), timeout=10) as backend:
            errors = []

            def hammer():
                for _ in range(5):
                    try:
                        backend.detect_boxes(IMAGE, "owl")
                    except RemoteError as exc:
                        errors.append(exc.code)

            threads = [threading.Thread(target=hammer) for _ in range(4)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            assert 99 not in errors
