# -*- coding: utf-8 -*-
"""Concurrent segmentation and detection.

The segmentation model localizes aircraft (positive regions of its stitched
prediction map); the detector separates and identifies them, one query
window per region, with detected boxes erased from the mask between
iterations. Foreground left unexplained can be promoted to level-1
detections. Final labels always come from the detector.
"""
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import BadMode, BadRaster, StageError
from .geometry import DEFAULT_NMS_THRESHOLD, Box, Detection, nms
from .ingest import MEAN, OVERLAP, TILE_SIZE, make_grid, stitch
from .raster import (
    connected_components,
    erase,
    filter_min_size,
    regions_mask,
    threshold,
)

logger = logging.getLogger(__name__)

BALANCED = "balanced"
RECALL = "recall"
PRECISION = "precision"
CUSTOM = "custom"
MODE_NAMES = (BALANCED, RECALL, PRECISION, CUSTOM)

DEFAULT_MAX_ITER = 3

MODE_PRESETS = {
    BALANCED: dict(
        seg_threshold=0.5,
        seg_min_size=300,
        det_threshold=0.5,
        det_min_size=100,
        enable_recovery=False,
    ),
    RECALL: dict(
        seg_threshold=0.3,
        seg_min_size=150,
        det_threshold=0.3,
        det_min_size=50,
        enable_recovery=True,
    ),
    PRECISION: dict(
        seg_threshold=0.6,
        seg_min_size=400,
        det_threshold=0.6,
        det_min_size=150,
        enable_recovery=False,
    ),
}


@dataclass(frozen=True)
class OperatingMode:
    name: str = BALANCED
    seg_threshold: float = 0.5
    seg_min_size: int = 300
    det_threshold: float = 0.5
    det_min_size: int = 100
    enable_recovery: bool = False

    def __post_init__(self):
        if self.name not in MODE_NAMES:
            raise BadMode(
                "Mode `{}` not valid, use one of {}.".format(self.name, MODE_NAMES)
            )
        for name in ("seg_threshold", "det_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise BadMode("`{}` not in [0, 1]: {}".format(name, value))
        for name in ("seg_min_size", "det_min_size"):
            value = getattr(self, name)
            if value < 0:
                raise BadMode("`{}` should not be negative: {}".format(name, value))

    @classmethod
    def preset(cls, name, **overrides):
        """Named preset; any override turns it into a ``custom`` mode."""
        try:
            values = dict(MODE_PRESETS[name])
        except KeyError:
            raise BadMode(
                "Mode preset `{}` not valid, use one of {}.".format(
                    name, sorted(MODE_PRESETS)
                )
            )
        overrides = {k: v for k, v in overrides.items() if v is not None}
        changed = {k for k, v in overrides.items() if values.get(k) != v}
        values.update(overrides)
        return cls(name=CUSTOM if changed else name, **values)

    def with_recovery(self, enabled):
        if enabled == self.enable_recovery:
            return self
        return replace(self, name=CUSTOM, enable_recovery=enabled)


@dataclass(frozen=True)
class RecoveryParams:
    """Rules promoting residual regions to level-1 detections.

    The region box area must lie within `size_band` times the median box
    area of the detections, and the region centroid within `max_distance`
    pixels of a detection box center. Without any detection, the absolute
    `fallback_band` (pixels) is used and the distance rule is waived.
    """

    size_band: tuple = (0.5, 2.0)
    max_distance: float = 200.0
    fallback_band: tuple = (1000.0, 10000.0)

    def __post_init__(self):
        for name in ("size_band", "fallback_band"):
            low, high = getattr(self, name)
            if not 0 < low <= high:
                raise BadMode("`{}` must satisfy 0 < min <= max.".format(name))
        if self.max_distance < 0:
            raise BadMode(
                "`max_distance` should not be negative: {}".format(self.max_distance)
            )


@dataclass(eq=False)
class FusionTrace:
    grid: list = field(default_factory=list)
    localized: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    recovered: list = field(default_factory=list)
    stages: list = field(default_factory=list)

    def as_dict(self):
        return {
            "stages": list(self.stages),
            "tiles": [list(origin) for origin in self.grid],
            "localized": [
                {"box": list(region.box.as_tuple()), "area": region.area}
                for region in self.localized
            ],
            "iterations": [dict(item) for item in self.iterations],
            "recovered": [
                {"box": list(d.box.as_tuple()), "score": d.score}
                for d in self.recovered
            ],
        }


@dataclass(eq=False)
class FusionResult:
    detections: list
    residual: list
    residual_mask: object
    trace: FusionTrace
    prediction: object = None


@contextmanager
def stage(name, trace=None, detail=None):
    """Run a pipeline stage; any failure is re-raised as :class:`StageError`."""
    logger.debug("Stage `%s` started", name)
    try:
        yield
    except StageError:
        raise
    except Exception as error:
        raise StageError(name, error, detail) from error
    if trace is not None:
        trace.stages.append(name)


def image_size(image, size=None):
    if size is not None:
        return int(size[0]), int(size[1])
    if image is None:
        raise BadRaster("The image size is needed when no image is given.")
    return int(image.shape[1]), int(image.shape[0])


def localize(prediction, mode):
    """Positive regions of `prediction` under the segmentation settings of `mode`."""
    mask = threshold(prediction, mode.seg_threshold)
    return filter_min_size(connected_components(mask), mode.seg_min_size)


def _touches(region, box):
    x = region.cols + 0.5
    y = region.rows + 0.5
    inside = (x >= box.x_min) & (x < box.x_max) & (y >= box.y_min) & (y < box.y_max)
    return bool(inside.any())


def _mean_score(region, foreground):
    return min(max(region.mean_of(foreground), 0.0), 1.0)


def _accepts(detection, mode):
    return (
        detection.score >= mode.det_threshold
        and detection.box.area >= mode.det_min_size
    )


def detect_iterative(
    image,
    regions,
    det,
    mode,
    max_iter=DEFAULT_MAX_ITER,
    size=None,
    window_size=TILE_SIZE,
    nms_threshold=DEFAULT_NMS_THRESHOLD,
    trace=None,
):
    """Query the detector around each region until the foreground is explained.

    A detection is kept when it passes the detection thresholds of `mode`,
    covers at least one residual pixel of the region it was queried for and
    survives the global NMS. Kept boxes are erased from the mask and the
    regions recomputed; the loop stops after an iteration that keeps nothing
    new, or after `max_iter` iterations.

    :returns:
        ``(detections, residual_mask)``.

    :raise StageError:
        If a detector query fails; the message names the query window.
    """
    if max_iter < 1:
        raise BadMode("`max_iter` must be at least 1: {}".format(max_iter))
    width, height = image_size(image, size)
    bounds = Box(0, 0, width, height)
    mask = regions_mask(regions, width, height)
    current = list(regions)
    kept = []

    for iteration in range(1, max_iter + 1):
        if not current:
            break
        candidates = []
        for region in current:
            window = region.box.inflate_to(window_size, bounds)
            try:
                found = det.detect(image, window)
            except Exception as error:
                raise StageError(
                    "detect", error, "window {}".format(window.as_tuple())
                ) from error
            candidates.extend(
                d for d in found if _accepts(d, mode) and _touches(region, d.box)
            )

        queries = len(current)
        previous = set(kept)
        kept = nms(kept + candidates, nms_threshold)
        added = [d for d in kept if d not in previous]
        for detection in added:
            mask = erase(mask, detection.box)
        current = filter_min_size(connected_components(mask), mode.seg_min_size)
        mask = regions_mask(current, width, height)

        logger.debug(
            "Iteration %d: %d queries, %d candidates, %d new detections",
            iteration,
            queries,
            len(candidates),
            len(added),
        )
        if trace is not None:
            trace.iterations.append(
                {
                    "iteration": iteration,
                    "queries": queries,
                    "candidates": len(candidates),
                    "added": len(added),
                    "residual_regions": len(current),
                }
            )
        if not added:
            break

    return kept, mask


def recover(regions, detections, params, taxonomy, foreground):
    """Promote residual regions to detections labelled with the taxonomy root.

    :param foreground:
        Foreground probability raster; a recovered detection scores the mean
        of its region.
    """
    if detections:
        median = float(np.median([d.box.area for d in detections]))
        low, high = params.size_band[0] * median, params.size_band[1] * median
        centers = np.array([d.box.center for d in detections], dtype=np.float64)
    else:
        low, high = params.fallback_band
        centers = None

    recovered = []
    for region in regions:
        if not low <= region.box.area <= high:
            continue
        if centers is not None:
            cx, cy = region.centroid
            distance = np.hypot(centers[:, 0] - cx, centers[:, 1] - cy).min()
            if distance > params.max_distance:
                continue
        recovered.append(
            Detection(region.box, _mean_score(region, foreground), taxonomy.root)
        )
    return recovered


def segment_scene(
    image, seg, size, tile_size=TILE_SIZE, overlap=OVERLAP, blend=MEAN
):
    """Tile, predict and stitch; returns ``(grid, PredictionMap)``."""
    width, height = size
    with stage("tile"):
        grid = make_grid(width, height, tile_size, overlap)
    tiles = []
    for origin in grid.origins:
        with stage("segment", detail="tile {}_{}".format(*origin)):
            tiles.append((origin, seg.predict(image, grid.tile_box(origin))))
    with stage("stitch"):
        prediction = stitch(tiles, width, height, blend)
    return grid, prediction


def run_pipeline(
    image,
    seg,
    det,
    mode,
    recovery=None,
    taxonomy=None,
    size=None,
    tile_size=TILE_SIZE,
    overlap=OVERLAP,
    blend=MEAN,
    max_iter=DEFAULT_MAX_ITER,
    nms_threshold=DEFAULT_NMS_THRESHOLD,
):
    """Localize, detect iteratively, optionally recover, then a final NMS.

    :param image:
        (height, width[, channels]) raster passed to the backends, or `None`
        for backends that do not read pixels; `size` is then required.

    :param recovery:
        :class:`RecoveryParams`, used when ``mode.enable_recovery`` is set.

    :raise StageError:
        Naming the stage that failed.
    """
    with stage("run"):
        width, height = image_size(image, size)
        if mode.enable_recovery and taxonomy is None:
            raise BadMode("Recovery needs a taxonomy for the level-1 label.")
    recovery = recovery or RecoveryParams()
    trace = FusionTrace()
    logger.info("Running `%s` mode on a %dx%d image", mode.name, width, height)

    grid, prediction = segment_scene(
        image, seg, (width, height), tile_size, overlap, blend
    )
    trace.grid = list(grid.origins)
    trace.stages.extend(["tile", "segment", "stitch"])

    with stage("localize", trace):
        regions = localize(prediction, mode)
        trace.localized = regions
    logger.info("Localized %d regions", len(regions))

    with stage("detect", trace):
        detections, residual_mask = detect_iterative(
            image,
            regions,
            det,
            mode,
            max_iter=max_iter,
            size=(width, height),
            window_size=tile_size,
            nms_threshold=nms_threshold,
            trace=trace,
        )
    logger.info("Kept %d detections", len(detections))

    with stage("recover", trace):
        residual = filter_min_size(
            connected_components(residual_mask), mode.seg_min_size
        )
        recovered = []
        if mode.enable_recovery:
            recovered = recover(
                residual, detections, recovery, taxonomy, prediction.foreground
            )
        trace.recovered = recovered
    if recovered:
        logger.info("Recovered %d level-1 objects", len(recovered))

    with stage("nms", trace):
        final = nms(detections + recovered, nms_threshold)

    return FusionResult(final, residual, residual_mask, trace, prediction)


def segmentation_only(
    image,
    seg,
    mode,
    taxonomy,
    size=None,
    tile_size=TILE_SIZE,
    overlap=OVERLAP,
    blend=MEAN,
):
    """Localized region boxes as level-1 detections scored by mean foreground."""
    width, height = image_size(image, size)
    _, prediction = segment_scene(
        image, seg, (width, height), tile_size, overlap, blend
    )
    with stage("localize"):
        regions = localize(prediction, mode)
    foreground = prediction.foreground
    return [
        Detection(region.box, _mean_score(region, foreground), taxonomy.root)
        for region in regions
    ]


def detection_only(
    image,
    det,
    mode,
    size=None,
    tile_size=TILE_SIZE,
    overlap=OVERLAP,
    nms_threshold=DEFAULT_NMS_THRESHOLD,
):
    """The detector alone, queried over the full tile grid."""
    width, height = image_size(image, size)
    with stage("tile"):
        grid = make_grid(width, height, tile_size, overlap)
    found = []
    for origin in grid.origins:
        window = grid.tile_box(origin)
        with stage("detect", detail="window {}".format(window.as_tuple())):
            found.extend(d for d in det.detect(image, window) if _accepts(d, mode))
    with stage("nms"):
        return nms(found, nms_threshold)
