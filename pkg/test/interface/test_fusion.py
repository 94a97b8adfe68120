# -*- coding: utf-8 -*-

import numpy as np
import pytest

from aircraft_fusion.backend import SegmentationBackend, synthetic_backends
from aircraft_fusion.evaluation import evaluate, merge_boards
from aircraft_fusion.exceptions import BadMode, StageError
from aircraft_fusion.fusion import (
    BALANCED,
    CUSTOM,
    RECALL,
    FusionTrace,
    OperatingMode,
    RecoveryParams,
    detect_iterative,
    detection_only,
    localize,
    recover,
    run_pipeline,
    segmentation_only,
    stage,
)
from aircraft_fusion.geometry import Box, Detection
from aircraft_fusion.raster import BinaryMask, PredictionMap, connected_components
from aircraft_fusion.simulate import PRESETS, preset, simulate_dataset
from test import error_value
from test.fixtures import (
    FailingDetection,
    ScriptedDetection,
    ScriptedSegmentation,
    box_of,
    painted,
    scene_of,
    square,
)

SIZE = (1024, 1024)


class FailingOffOrigin(SegmentationBackend):
    def predict(self, image, window):
        if window.x_min > 0:
            raise RuntimeError("no tile beyond the origin")
        return PredictionMap.binary(np.zeros((512, 512)))


def regions_of(foreground, mode=None):
    return localize(PredictionMap.binary(foreground), mode or OperatingMode())


def run_systems(item, taxonomy, mode):
    segmentation, detection = synthetic_backends(
        item.scene, item.segmentation, item.detection, taxonomy
    )
    size = (item.scene.width, item.scene.height)
    fused = run_pipeline(
        None, segmentation, detection, mode, taxonomy=taxonomy, size=size
    ).detections
    return {
        "segmentation": segmentation_only(
            None, segmentation, mode, taxonomy, size=size
        ),
        "detection": detection_only(None, detection, mode, size=size),
        "fused": fused,
    }


def merged_boards(simulated, taxonomy, mode):
    boards = {"segmentation": [], "detection": [], "fused": []}
    for item in simulated:
        for system, detections in run_systems(item, taxonomy, mode).items():
            boards[system].append(evaluate(item.scene.objects, detections, taxonomy))
    return {system: merge_boards(per_scene) for system, per_scene in boards.items()}


class TestOperatingMode(object):

    def test_presets(self):
        recall = OperatingMode.preset(RECALL)

        assert recall.name == RECALL
        assert (recall.seg_threshold, recall.seg_min_size) == (0.3, 150)
        assert (recall.det_threshold, recall.det_min_size) == (0.3, 50)
        assert recall.enable_recovery
        assert not OperatingMode.preset(BALANCED).enable_recovery

    def test_override_makes_a_custom_mode(self):
        mode = OperatingMode.preset(BALANCED, seg_threshold=0.4, det_threshold=None)

        assert mode.name == CUSTOM
        assert mode.seg_threshold == 0.4
        assert mode.det_threshold == 0.5

    def test_override_with_the_preset_value(self):
        assert OperatingMode.preset(BALANCED, seg_min_size=300).name == BALANCED

    def test_with_recovery(self):
        mode = OperatingMode.preset(BALANCED)

        assert mode.with_recovery(False) is mode
        assert mode.with_recovery(True).name == CUSTOM
        assert mode.with_recovery(True).enable_recovery

    @pytest.mark.parametrize(
        "kwargs, expected_error",
        [
            (dict(seg_threshold=1.2), "`seg_threshold` not in [0, 1]: 1.2"),
            (dict(det_min_size=-5), "`det_min_size` should not be negative: -5"),
            (dict(name="fast"), "Mode `fast` not valid, use one of "
             "('balanced', 'recall', 'precision', 'custom')."),
        ],
    )
    def test_invalid(self, kwargs, expected_error):
        with pytest.raises(BadMode) as err:
            OperatingMode(**kwargs)

        assert error_value(err) == expected_error

    def test_unknown_preset(self):
        with pytest.raises(BadMode):
            OperatingMode.preset(CUSTOM)


class TestStage(object):

    def test_wraps_errors(self):
        with pytest.raises(StageError) as err:
            with stage("stitch", detail="tile 0_0"):
                raise ValueError("boom")

        assert err.value.stage == "stitch"
        assert error_value(err) == "Stage `stitch` (tile 0_0) failed: boom"

    def test_keeps_the_inner_stage(self):
        with pytest.raises(StageError) as err:
            with stage("run"):
                with stage("detect"):
                    raise ValueError("boom")

        assert err.value.stage == "detect"


class TestDetectIterative(object):

    @pytest.fixture
    def pair(self, taxonomy):
        return scene_of(
            [
                square(1, taxonomy.label("F-16"), 100, 100, 50),
                square(2, taxonomy.label("Tu-95"), 150, 100, 50),
            ]
        )

    def test_merged_pair_is_separated(self, pair):
        regions = regions_of(painted(pair))
        detector = ScriptedDetection([box_of(obj) for obj in pair.objects])

        kept, residual = detect_iterative(
            None, regions, detector, OperatingMode(), size=SIZE
        )

        assert len(regions) == 1
        assert sorted(d.box.as_tuple() for d in kept) == [
            (100, 100, 150, 150),
            (150, 100, 200, 150),
        ]
        assert residual.count() == 0
        assert detector.windows == [Box(0, 0, 512, 512)]

    def test_erasing_reveals_the_residual(self, pair):
        blob = Box(200, 100, 240, 150)
        regions = regions_of(painted(pair, extra=[blob]))
        detector = ScriptedDetection([box_of(pair.objects[0])])

        kept, residual = detect_iterative(
            None, regions, detector, OperatingMode(), size=SIZE
        )

        assert [d.box for d in kept] == [pair.objects[0].box]
        remaining = connected_components(residual)
        assert [r.box for r in remaining] == [Box(150, 100, 240, 150)]

    def test_thresholds_and_touch_filter(self, pair, taxonomy):
        weak = box_of(pair.objects[0], score=0.4)
        tiny = Detection(Box(150, 100, 155, 105), 0.9, taxonomy.label("F-16"))
        elsewhere = Detection(Box(400, 400, 450, 450), 0.9, taxonomy.label("F-16"))
        regions = regions_of(painted(pair))
        detector = ScriptedDetection([weak, tiny, elsewhere])
        kept, residual = detect_iterative(
            None, regions, detector, OperatingMode(), size=SIZE
        )

        assert kept == []
        assert residual.count() == 5000

    def test_stops_when_nothing_is_added(self, pair):
        trace = FusionTrace()
        regions = regions_of(painted(pair))
        detector = ScriptedDetection([])

        detect_iterative(
            None, regions, detector, OperatingMode(), size=SIZE, trace=trace
        )

        assert trace.iterations == [
            {
                "iteration": 1,
                "queries": 1,
                "candidates": 0,
                "added": 0,
                "residual_regions": 1,
            }
        ]

    def test_max_iter_bounds_the_queries(self, pair):
        regions = regions_of(painted(pair))
        detector = ScriptedDetection([box_of(pair.objects[0])])

        detect_iterative(
            None, regions, detector, OperatingMode(), max_iter=1, size=SIZE
        )

        assert len(detector.windows) == 1

    def test_second_iteration_queries_the_residual(self, pair):
        regions = regions_of(painted(pair))
        detector = ScriptedDetection([box_of(obj) for obj in pair.objects[:1]])

        detect_iterative(None, regions, detector, OperatingMode(), size=SIZE)

        assert len(detector.windows) == 2

    def test_failing_detector_names_the_window(self, pair):
        regions = regions_of(painted(pair))

        with pytest.raises(StageError) as err:
            detect_iterative(
                None, regions, FailingDetection(), OperatingMode(), size=SIZE
            )

        assert err.value.stage == "detect"
        assert error_value(err) == (
            "Stage `detect` (window (0, 0, 512, 512)) failed: model crashed"
        )

    def test_invalid_max_iter(self):
        with pytest.raises(BadMode) as err:
            detect_iterative(None, [], ScriptedDetection([]), OperatingMode(), 0, SIZE)

        assert error_value(err) == "`max_iter` must be at least 1: 0"


class TestRecover(object):

    @pytest.fixture
    def detections(self, taxonomy):
        label = taxonomy.label("F-16")
        return [
            Detection(Box(100, 100, 150, 150), 0.9, label),
            Detection(Box(300, 100, 360, 160), 0.9, label),
        ]

    def residual(self, *boxes):
        bits = np.zeros((1024, 1024), dtype=bool)
        for box in boxes:
            bits[int(box.y_min):int(box.y_max), int(box.x_min):int(box.x_max)] = True
        return connected_components(BinaryMask(bits))

    def test_promotes_regions_of_aircraft_size(self, detections, taxonomy):
        foreground = np.full((1024, 1024), 0.7)
        regions = self.residual(Box(200, 100, 250, 150))

        recovered = recover(regions, detections, RecoveryParams(), taxonomy, foreground)

        (detection,) = recovered
        assert detection.box == Box(200, 100, 250, 150)
        assert detection.score == pytest.approx(0.7)
        assert detection.label == taxonomy.root

    def test_size_band(self, detections, taxonomy):
        regions = self.residual(Box(200, 100, 210, 110), Box(200, 300, 400, 500))

        recovered = recover(
            regions, detections, RecoveryParams(), taxonomy, np.ones((1024, 1024))
        )

        assert recovered == []

    def test_size_band_compares_box_areas(self, detections, taxonomy):
        bits = np.zeros((1024, 1024), dtype=bool)
        bits[100:150, 200:250] = True
        bits[102:148, 202:248] = False
        (ring,) = connected_components(BinaryMask(bits))

        recovered = recover(
            [ring], detections, RecoveryParams(), taxonomy, np.ones((1024, 1024))
        )

        assert ring.area == 384
        assert [d.box for d in recovered] == [Box(200, 100, 250, 150)]

    def test_distance(self, detections, taxonomy):
        regions = self.residual(Box(800, 800, 850, 850))

        params = RecoveryParams()
        far = recover(regions, detections, params, taxonomy, np.ones((1024, 1024)))
        params = RecoveryParams(max_distance=1000)
        near = recover(regions, detections, params, taxonomy, np.ones((1024, 1024)))

        assert far == []
        assert len(near) == 1

    def test_fallback_without_detections(self, taxonomy):
        regions = self.residual(Box(800, 800, 850, 850), Box(10, 10, 20, 20))

        recovered = recover(
            regions, [], RecoveryParams(), taxonomy, np.ones((1024, 1024))
        )

        assert [d.box for d in recovered] == [Box(800, 800, 850, 850)]

    def test_invalid_params(self):
        with pytest.raises(BadMode) as err:
            RecoveryParams(size_band=(2.0, 0.5))

        assert error_value(err) == "`size_band` must satisfy 0 < min <= max."


class TestRunPipeline(object):

    @pytest.fixture(scope="class")
    def noiseless(self, taxonomy):
        (item,) = simulate_dataset(
            PRESETS["noiseless"],
            taxonomy,
            seed=0,
            scenes=1,
            width=2048,
            height=2048,
            aircraft=100,
        )
        segmentation, detection = synthetic_backends(
            item.scene, item.segmentation, item.detection, taxonomy
        )
        return item.scene, segmentation, detection

    def test_noiseless_fusion_is_perfect(self, noiseless, taxonomy):
        scene, segmentation, detection = noiseless

        result = run_pipeline(
            None,
            segmentation,
            detection,
            OperatingMode(),
            taxonomy=taxonomy,
            size=(2048, 2048),
        )
        board = evaluate(scene.objects, result.detections, taxonomy)

        assert board.recall == 1.0
        assert board.precision == 1.0
        assert board.identification_rate_l3 == 1.0
        assert result.trace.stages == [
            "tile",
            "segment",
            "stitch",
            "localize",
            "detect",
            "recover",
            "nms",
        ]
        assert len(result.trace.grid) == 25
        assert result.trace.recovered == []
        assert result.residual == []

    def test_noiseless_segmentation_merges_pairs(self, noiseless, taxonomy):
        scene, segmentation, _ = noiseless

        detections = segmentation_only(
            None, segmentation, OperatingMode(), taxonomy, size=(2048, 2048)
        )
        board = evaluate(scene.objects, detections, taxonomy)

        assert board.recall == pytest.approx(0.95)
        assert board.precision == 1.0
        assert board.identification_rate_l3 is None
        assert all(d.label == taxonomy.root for d in detections)

    def test_noiseless_detection_finds_everything(self, noiseless, taxonomy):
        scene, _, detection = noiseless

        detections = detection_only(None, detection, OperatingMode(), size=(2048, 2048))

        assert evaluate(scene.objects, detections, taxonomy).recall == 1.0

    def test_same_inputs_same_output(self, noiseless, taxonomy):
        _, segmentation, detection = noiseless
        mode = OperatingMode.preset(RECALL)

        first = run_pipeline(
            None, segmentation, detection, mode, taxonomy=taxonomy, size=(2048, 2048)
        )
        second = run_pipeline(
            None, segmentation, detection, mode, taxonomy=taxonomy, size=(2048, 2048)
        )

        assert first.detections == second.detections
        assert first.trace.as_dict() == second.trace.as_dict()

    def test_recovery_without_taxonomy(self):
        scene = scene_of([])
        segmentation = ScriptedSegmentation(painted(scene))

        with pytest.raises(StageError) as err:
            run_pipeline(
                None,
                segmentation,
                ScriptedDetection([]),
                OperatingMode.preset(RECALL),
                size=SIZE,
            )

        assert err.value.stage == "run"
        assert isinstance(err.value.cause, BadMode)

    def test_missing_size(self):
        with pytest.raises(StageError) as err:
            run_pipeline(None, None, None, OperatingMode())

        assert error_value(err) == (
            "Stage `run` failed: The image size is needed when no image is given."
        )

    def test_failing_segmentation_names_the_tile(self):
        with pytest.raises(StageError) as err:
            run_pipeline(
                None,
                FailingOffOrigin(),
                ScriptedDetection([]),
                OperatingMode(),
                size=(600, 512),
            )

        assert err.value.stage == "segment"
        assert error_value(err) == (
            "Stage `segment` (tile 88_0) failed: no tile beyond the origin"
        )

    def test_recovered_objects_carry_the_root_label(self, taxonomy):
        label = taxonomy.label("F-16")
        objects = [square(i + 1, label, 100 + 80 * i, 100, 50) for i in range(4)]
        scene = scene_of(objects)
        detector = ScriptedDetection([box_of(obj) for obj in objects[:3]])
        mode = OperatingMode.preset(BALANCED).with_recovery(True)

        result = run_pipeline(
            None,
            ScriptedSegmentation(painted(scene)),
            detector,
            mode,
            taxonomy=taxonomy,
            size=SIZE,
        )

        assert len(result.detections) == 4
        assert [d.label for d in result.trace.recovered] == [taxonomy.root]
        assert result.trace.recovered[0].box == objects[3].box


SEEDS = range(10)


class TestSyntheticComparison(object):

    @pytest.fixture(scope="class")
    def boards(self, taxonomy):
        modes = {
            "balanced": OperatingMode.preset(BALANCED),
            "recovery": OperatingMode.preset(BALANCED).with_recovery(True),
            "recall": OperatingMode.preset(RECALL),
        }
        boards = {}
        for seed in SEEDS:
            simulated = simulate_dataset(preset("table2"), taxonomy, seed=seed)
            boards[seed] = {
                name: merged_boards(simulated, taxonomy, mode)
                for name, mode in modes.items()
            }
        return boards

    @pytest.mark.parametrize("seed", SEEDS)
    def test_fusion_beats_each_system(self, boards, seed):
        runs = boards[seed]
        fused = runs["recovery"]["fused"]
        segmentation = runs["recovery"]["segmentation"]
        detection = runs["recovery"]["detection"]

        assert fused.precision > max(segmentation.precision, detection.precision)
        assert fused.recall >= segmentation.recall - 0.01

    @pytest.mark.parametrize("seed", SEEDS)
    def test_recall_mode(self, boards, seed):
        recall = boards[seed]["recall"]
        best_single = max(
            recall["segmentation"].precision, recall["detection"].precision
        )

        assert recall["fused"].precision - best_single >= 0.2
        assert recall["fused"].recall >= boards[seed]["balanced"]["fused"].recall

    def test_mean_operating_point(self, boards):
        fused = [boards[seed]["recovery"]["fused"] for seed in SEEDS]

        assert np.mean([b.recall for b in fused]) == pytest.approx(0.95, abs=0.05)
        assert np.mean([b.precision for b in fused]) == pytest.approx(0.88, abs=0.05)

    def test_identification_levels(self, boards):
        fused = merge_boards([boards[seed]["recovery"]["fused"] for seed in SEEDS])

        assert 0.65 < fused.identification_rate_l3 < 0.92
        assert fused.identification_rate_l2 > fused.identification_rate_l3
