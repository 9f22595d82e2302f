import json
from pathlib import Path

import jsonschema
import pytest

from boxlift import (
    Box3D,
    ConfigError,
    PipelineConfig,
    annotate_track,
    build_report,
    build_tracks,
    coarse_quality_table,
    frames_histogram,
    generate_scene,
    iou_3d,
    point_set_iou,
    resolve_gt_boxes,
    segmentation_curve,
)
from boxlift.evaluate import segmentation_instances
from boxlift.refine import PseudoLabel, QualityRecord
from support import passing_config

SCHEMA = json.loads(
    (Path(__file__).resolve().parent.parent / "docs/report.schema.json").read_text()
)


class TestPointSetIou:
    def test_identical(self):
        assert point_set_iou({1, 2, 3}, {1, 2, 3}) == 1.0

    def test_disjoint(self):
        assert point_set_iou({1, 2}, {3, 4}) == 0.0

    def test_counting(self):
        a = set(range(80))
        b = set(range(20, 120))
        assert point_set_iou(a, b) == pytest.approx(60 / 120)

    def test_both_empty(self):
        assert point_set_iou(set(), set()) == 1.0

    def test_one_empty(self):
        assert point_set_iou(set(), {1}) == 0.0


def label_for(track_id, box, class_label="Car", source="refined", kept=True,
              anchor=0):
    return PseudoLabel(
        track_id=track_id,
        class_label=class_label,
        box=box,
        source=source,
        quality=QualityRecord(100, 4, 0.9, 0.05, 0.01),
        kept=kept,
        drop_reason=None if kept else "confidence",
        confidence=0.9,
        anchor_frame_id=anchor,
    )


class TestQualityTable:
    def test_perfect_labels(self):
        boxes = {f"t-{i}": Box3D(i, 0, 0, 4, 2, 1.5, 0.2) for i in range(3)}
        labels = [label_for(tid, box) for tid, box in boxes.items()]
        table = coarse_quality_table(labels, boxes)
        assert table["overall"]["mean_iou_3d"] == pytest.approx(1.0, abs=1e-12)
        assert table["per_class"]["Car"]["n"] == 3

    def test_half_length_shift_closed_form(self):
        gt = Box3D(0, 0, 0, 4, 2, 1.5, 0.0)
        shifted = Box3D(2.0, 0, 0, 4, 2, 1.5, 0.0)  # half length along heading
        table = coarse_quality_table([label_for("t-0", shifted)], {"t-0": gt})
        assert table["overall"]["mean_iou_3d"] == pytest.approx(1 / 3, abs=1e-12)

    def test_missing_gt_raises(self):
        with pytest.raises(ConfigError):
            coarse_quality_table([label_for("ghost", Box3D(0, 0, 0, 1, 1, 1, 0))], {})

    def test_per_class_grouping(self):
        boxes = {"a": Box3D(0, 0, 0, 4, 2, 1.5, 0), "b": Box3D(9, 0, 0, 1, 1, 1.7, 0)}
        labels = [
            label_for("a", boxes["a"], class_label="Car"),
            label_for("b", Box3D(9.5, 0, 0, 1, 1, 1.7, 0), class_label="Pedestrian"),
        ]
        table = coarse_quality_table(labels, boxes)
        assert table["per_class"]["Car"]["mean_iou_3d"] == pytest.approx(1.0)
        assert table["per_class"]["Pedestrian"]["mean_iou_3d"] == pytest.approx(
            iou_3d(labels[1].box, boxes["b"])
        )


class TestSegmentationCurve:
    def make_scene(self):
        return generate_scene(
            passing_config(80, n_cars=3, n_frames=8, sigma=0.02,
                           bleed_fraction=0.03, bleed_offset_range=(1.0, 4.0))
        )

    def test_threshold_zero_retains_all(self):
        scene = self.make_scene()
        instances = segmentation_instances(scene)
        curve = segmentation_curve(scene, [0], instances=instances)
        assert curve[0]["n_retained"] == len(instances)

    def test_absurd_threshold_retains_none(self):
        scene = self.make_scene()
        curve = segmentation_curve(scene, [10**9])
        assert curve[0]["n_retained"] == 0
        assert curve[0]["mean_iou_aggregate"] is None
        assert curve[0]["mean_iou_cluster"] is None

    def test_retained_counts_non_increasing(self):
        scene = self.make_scene()
        thresholds = [0, 5, 10, 50, 100, 200, 400]
        curve = segmentation_curve(scene, thresholds)
        counts = [c["n_retained"] for c in curve]
        assert counts == sorted(counts, reverse=True)

    def test_cluster_beats_aggregate_with_bleed(self):
        scene = self.make_scene()
        curve = segmentation_curve(scene, [0])
        assert curve[0]["mean_iou_cluster"] > curve[0]["mean_iou_aggregate"]

    def test_needs_ground_truth(self):
        scene = self.make_scene()
        scene.gt_tracks = None
        with pytest.raises(ConfigError):
            segmentation_curve(scene, [0])


class TestFramesHistogram:
    def test_constant_visibility(self):
        scene = generate_scene(passing_config(81, n_cars=2, n_frames=5))
        hist = frames_histogram(scene)
        assert set(hist) == {"Car"}
        entry = hist["Car"]
        assert entry["n_tracks"] == 2
        assert entry["median"] == 5.0
        assert entry["counts"] == {"5": 2}

    def test_empty_scene(self):
        scene = generate_scene(passing_config(82, n_cars=0, n_frames=2))
        assert frames_histogram(scene) == {}


class TestReport:
    def build(self, seed=83):
        scene = generate_scene(
            passing_config(seed, n_cars=2, n_frames=8, sigma=0.02)
        )
        cfg = PipelineConfig(refine_budget=150, tau_static=4.0)
        labels = [annotate_track(t, c, cfg) for t, c in build_tracks(scene)]
        return scene, labels, cfg

    def test_report_validates_against_schema(self):
        scene, labels, cfg = self.build()
        report = build_report(scene, labels, cfg)
        jsonschema.validate(json.loads(json.dumps(report)), SCHEMA)

    def test_report_fields(self):
        scene, labels, cfg = self.build(84)
        report = build_report(scene, labels, cfg)
        assert report["n_tracks"] == len(labels)
        assert report["seed"] == 84
        assert 0.0 <= report["keep_rate"] <= 1.0
        kept_refined = [lb for lb in labels if lb.kept and lb.source == "refined"]
        assert report["iou_by_source"]["refined"]["overall"]["n"] == len(kept_refined)

    def test_resolve_gt_boxes_uses_anchor(self):
        scene = generate_scene(
            passing_config(85, n_cars=1, n_frames=6, static=False)
        )
        tid = next(iter(scene.gt_tracks))
        label = label_for(tid, Box3D(0, 0, 0, 4, 2, 1.5, 0), anchor=3)
        gt = resolve_gt_boxes(scene, [label])
        assert gt[tid] == scene.gt_tracks[tid].boxes[3]

    def test_resolve_names_missing_ids(self):
        scene = generate_scene(passing_config(86, n_cars=1, n_frames=3))
        label = label_for("phantom-7", Box3D(0, 0, 0, 1, 1, 1, 0))
        with pytest.raises(ConfigError) as err:
            resolve_gt_boxes(scene, [label])
        assert "phantom-7" in str(err.value)
