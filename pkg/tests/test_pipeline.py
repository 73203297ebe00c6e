import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from iapf.backends.fixture import RecordingBackend, fixture_backend
from iapf.backends.synthetic import (
    SceneInstance,
    SyntheticScene,
    load_scene,
    synthetic_backend,
)
from iapf.core import BoxSet, ImageRef
from iapf.errors import BackendError
from iapf.pipeline import (
    PipelineConfig,
    discover_images,
    make_synthetic_dataset,
    run_dataset,
    run_image,
    scene_backend_factory,
)


def two_disk_scene(tag_b=None):
    instances = [
        SceneInstance(shape="disk", cx=10.5, cy=10.5, rx=5.0, ry=5.0, tag="owl"),
        SceneInstance(shape="disk", cx=26.5, cy=16.5, rx=5.0, ry=5.0, tag=tag_b or "owl"),
    ]
    return SyntheticScene(
        width=36, height=28, instances=instances, bg_tags=["bark", "moss"]
    )


IMAGE = ImageRef(id="img", width=36, height=28)
FAST_CFG = PipelineConfig(repeats=1)


def tree_digest(root: Path) -> str:
    acc = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            acc.update(str(path.relative_to(root)).encode())
            acc.update(path.read_bytes())
    return acc.hexdigest()


class CountingBackend:
    def __init__(self, inner):
        self.inner = inner
        self.calls = {"generate_tags": 0, "detect_boxes": 0, "compute_heatmap": 0, "segment": 0}

    def generate_tags(self, image, request):
        self.calls["generate_tags"] += 1
        return self.inner.generate_tags(image, request)

    def detect_boxes(self, image, tag):
        self.calls["detect_boxes"] += 1
        return self.inner.detect_boxes(image, tag)

    def compute_heatmap(self, image, tag):
        self.calls["compute_heatmap"] += 1
        return self.inner.compute_heatmap(image, tag)

    def segment(self, image, triplet):
        self.calls["segment"] += 1
        return self.inner.segment(image, triplet)


class TestRunImage:
    def test_single_run_two_disks(self):
        scene = two_disk_scene()
        artifact = run_image(IMAGE, FAST_CFG, synthetic_backend(scene))
        assert len(artifact.final_stack) == 2
        assert np.array_equal(
            artifact.final_mask.bits, scene.semantic_ground_truth().bits
        )
        assert artifact.voted_index == 0

    def test_three_identical_runs_vote_zero(self):
        cfg = PipelineConfig(repeats=3)
        artifact = run_image(IMAGE, cfg, synthetic_backend(two_disk_scene()))
        assert artifact.voted_index == 0
        assert artifact.vote_result.distances == (0.0, 0.0, 0.0)

    def test_corrupted_run_loses_vote(self):
        scene = two_disk_scene()

        class FlakyDetector(CountingBackend):
            def detect_boxes(self, image, tag):
                boxes = self.inner.detect_boxes(image, tag)
                if self.calls["generate_tags"] == 3:  # third run only
                    return BoxSet(tag=tag, boxes=boxes.boxes[:1])
                return boxes

        backend = FlakyDetector(synthetic_backend(scene))
        artifact = run_image(IMAGE, PipelineConfig(repeats=3), backend)
        assert artifact.voted_index in (0, 1)
        assert np.array_equal(
            artifact.final_mask.bits, scene.semantic_ground_truth().bits
        )

    def test_duplicate_tags_one_heatmap_call(self):
        # two fg tags share the same two bg tags: the naive flow would compute
        # each bg heatmap twice per run
        scene = two_disk_scene(tag_b="crab")
        counting = CountingBackend(synthetic_backend(scene))
        run_image(IMAGE, FAST_CFG, counting)
        # 2 distinct fg tags + 2 distinct bg tags
        assert counting.calls["compute_heatmap"] == 4
        assert counting.calls["detect_boxes"] == 2

    def test_multi_fg_tags_concatenate_stacks(self):
        scene = two_disk_scene(tag_b="crab")
        artifact = run_image(IMAGE, FAST_CFG, synthetic_backend(scene))
        assert len(artifact.final_stack) == 2
        assert {bs.tag for bs in (artifact.runs[0].box_sets.values())} == {"owl", "crab"}

    def test_failing_run_aborts_image(self):
        class Exploding(CountingBackend):
            def segment(self, image, triplet):
                raise BackendError("segmenter fell over")

        backend = Exploding(synthetic_backend(two_disk_scene()))
        with pytest.raises(BackendError, match="run 0"):
            run_image(IMAGE, FAST_CFG, backend)

    def test_artifact_json_is_complete(self):
        artifact = run_image(IMAGE, PipelineConfig(repeats=2), synthetic_backend(two_disk_scene()))
        obj = artifact.to_json_obj()
        assert obj["id"] == "img"
        assert len(obj["runs"]) == 2
        assert obj["voted_index"] == 0
        assert obj["backend_calls"]["segment"] == 4
        assert "call_seconds" not in obj  # byte-stable artifacts carry no timings
        assert artifact.call_seconds  # but the in-memory artifact does


class TestMakeSyntheticDataset:
    def test_layout_and_reproducibility(self, tmp_path):
        ids_a = make_synthetic_dataset(4, seed=7, out_dir=tmp_path / "a")
        ids_b = make_synthetic_dataset(4, seed=7, out_dir=tmp_path / "b")
        assert ids_a == ids_b
        assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")
        for image_id in ids_a:
            assert (tmp_path / "a" / "images" / f"{image_id}.json").is_file()
            assert (tmp_path / "a" / "scenes" / f"{image_id}.scene.json").is_file()
            assert (tmp_path / "a" / "gt" / f"{image_id}.png").is_file()
            assert (tmp_path / "a" / "gt" / f"{image_id}.inst.json").is_file()

    def test_golden_hash_seed0_n10(self, tmp_path):
        # pins the generator's output for this environment; regenerate the
        # constant deliberately if the generator ever changes
        make_synthetic_dataset(10, seed=0, out_dir=tmp_path)
        assert (
            tree_digest(tmp_path)
            == "1c7c0a5f9a31dcb2e78e285df69758c679d1986a21ad47c82d33388066b8b801"
        )

    def test_seed_sensitivity(self, tmp_path):
        make_synthetic_dataset(3, seed=1, out_dir=tmp_path / "a")
        make_synthetic_dataset(3, seed=2, out_dir=tmp_path / "b")
        assert tree_digest(tmp_path / "a") != tree_digest(tmp_path / "b")

    def test_single_image(self, tmp_path):
        ids = make_synthetic_dataset(1, seed=3, out_dir=tmp_path)
        assert len(ids) == 1
        scene = load_scene(tmp_path / "scenes" / f"{ids[0]}.scene.json")
        assert 1 <= len(scene.instances) <= 4

    def test_instance_count_spread(self, tmp_path):
        make_synthetic_dataset(12, seed=0, out_dir=tmp_path)
        counts = {
            len(load_scene(p).instances) for p in (tmp_path / "scenes").glob("*.json")
        }
        assert len(counts) >= 2  # the distribution actually varies


class TestRunDataset:
    def test_happy_path(self, tmp_path):
        make_synthetic_dataset(5, seed=0, out_dir=tmp_path / "data")
        cfg = PipelineConfig(repeats=2)
        summary = run_dataset(
            tmp_path / "data" / "images",
            cfg,
            scene_backend_factory(cfg),
            tmp_path / "pred",
        )
        assert summary.one_line() == "5 ok, 0 failed"
        for image_id in summary.ok:
            assert (tmp_path / "pred" / f"{image_id}.png").is_file()
            inst = json.loads((tmp_path / "pred" / f"{image_id}.inst.json").read_text())
            assert inst["instances"]
            assert all(e["score"] == 1.0 for e in inst["instances"])  # provenance scores
            assert (tmp_path / "pred" / f"{image_id}.artifact.json").is_file()

    def test_failure_collected(self, tmp_path):
        make_synthetic_dataset(3, seed=0, out_dir=tmp_path / "data")
        broken = list((tmp_path / "data" / "scenes").glob("*.json"))[0]
        broken.unlink()
        cfg = PipelineConfig(repeats=1)
        summary = run_dataset(
            tmp_path / "data" / "images",
            cfg,
            scene_backend_factory(cfg),
            tmp_path / "pred",
        )
        assert summary.one_line() == "2 ok, 1 failed"

    def test_jobs_parallel_same_output(self, tmp_path):
        make_synthetic_dataset(4, seed=5, out_dir=tmp_path / "data")
        cfg = PipelineConfig(repeats=2)
        run_dataset(
            tmp_path / "data" / "images", cfg, scene_backend_factory(cfg), tmp_path / "p1"
        )
        run_dataset(
            tmp_path / "data" / "images",
            cfg,
            scene_backend_factory(cfg),
            tmp_path / "p2",
            jobs=4,
        )
        assert tree_digest(tmp_path / "p1") == tree_digest(tmp_path / "p2")

    def test_fixture_replay_determinism(self, tmp_path):
        # record fixtures from the synthetic oracle, then replay twice
        make_synthetic_dataset(3, seed=2, out_dir=tmp_path / "data")
        cfg = PipelineConfig(repeats=2)
        images = discover_images(tmp_path / "data" / "images")

        recorder_root = tmp_path / "fixtures"
        factory = scene_backend_factory(cfg)
        for entry in images:
            backend = RecordingBackend(factory(entry), recorder_root)
            run_image(entry.ref, cfg, backend)

        replay = fixture_backend(recorder_root)
        run_dataset(tmp_path / "data" / "images", cfg, replay, tmp_path / "r1")
        run_dataset(tmp_path / "data" / "images", cfg, replay, tmp_path / "r2")
        assert tree_digest(tmp_path / "r1") == tree_digest(tmp_path / "r2")
        # and the replayed run matches the live run pixel-for-pixel
        run_dataset(tmp_path / "data" / "images", cfg, factory, tmp_path / "live")
        assert tree_digest(tmp_path / "live") == tree_digest(tmp_path / "r1")


class TestDiscoverImages:
    def test_manifests_and_pngs(self, tmp_path):
        (tmp_path / "a.json").write_text(json.dumps({"width": 10, "height": 8}))
        from iapf.io import write_mask_png
        from iapf.core import BinaryMask

        write_mask_png(tmp_path / "b.png", BinaryMask(np.zeros((4, 6), dtype=bool)))
        images = discover_images(tmp_path)
        assert [e.ref.id for e in images] == ["a", "b"]
        assert (images[0].ref.width, images[0].ref.height) == (10, 8)
        assert (images[1].ref.width, images[1].ref.height) == (6, 4)
        assert images[1].ref.pixel_source.endswith("b.png")
