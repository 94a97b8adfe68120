# -*- coding: utf-8 -*-
"""Axis-aligned boxes, overlap measures and non-maximum suppression.

Coordinates are continuous pixel coordinates: pixel ``(row, col)`` covers
``[col, col + 1) x [row, row + 1)``. A pixel belongs to a box when its
center lies inside the half-open box.
"""
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import BadBox, BadRaster

DEFAULT_NMS_THRESHOLD = 0.35

OVER_TARGET = "over_target"
IOU = "iou"
CRITERIA = (OVER_TARGET, IOU)


@dataclass(frozen=True)
class Box:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        values = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in values):
            raise BadBox("Box `{}` has non-finite coordinates.".format(values))
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise BadBox("Box `{}` has inverted coordinates.".format(values))

    @property
    def width(self):
        return self.x_max - self.x_min

    @property
    def height(self):
        return self.y_max - self.y_min

    @property
    def area(self):
        return self.width * self.height

    @property
    def center(self):
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def as_tuple(self):
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def intersection(self, other):
        """Overlapping part of both boxes, or `None` when they are disjoint."""
        x_min = max(self.x_min, other.x_min)
        y_min = max(self.y_min, other.y_min)
        x_max = min(self.x_max, other.x_max)
        y_max = min(self.y_max, other.y_max)
        if x_min > x_max or y_min > y_max:
            return None
        return Box(x_min, y_min, x_max, y_max)

    def clip(self, bounds):
        clipped = self.intersection(bounds)
        if clipped is None:
            raise BadBox("Box `{}` lies outside `{}`.".format(self, bounds))
        return clipped

    def inflate_to(self, min_size, bounds):
        """Grow the box around its center to at least `min_size` per side.

        The result is snapped to whole pixels and shifted to stay inside
        `bounds`; it is clipped when `bounds` is smaller than `min_size`.
        """
        cx, cy = self.center
        half_w = max(self.width, min_size) / 2.0
        half_h = max(self.height, min_size) / 2.0
        x_min, x_max = _fit_span(cx - half_w, cx + half_w, bounds.x_min, bounds.x_max)
        y_min, y_max = _fit_span(cy - half_h, cy + half_h, bounds.y_min, bounds.y_max)
        return Box(x_min, y_min, x_max, y_max)

    def contains_point(self, x, y):
        return self.x_min <= x < self.x_max and self.y_min <= y < self.y_max


def _fit_span(low, high, lower_bound, upper_bound):
    low = math.floor(low)
    high = math.ceil(high)
    if low < lower_bound:
        high += lower_bound - low
        low = lower_bound
    if high > upper_bound:
        low -= high - upper_bound
        high = upper_bound
    return max(low, lower_bound), high


@dataclass(frozen=True)
class Detection:
    box: Box
    score: float
    label: object

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise BadBox("Score `{}` not in [0, 1].".format(self.score))


def pixel_span(box):
    """Rows and columns whose pixel centers lie inside `box`.

    :returns:
        ``(row_start, row_stop, col_start, col_stop)`` as integers, not
        clipped to any raster.
    """
    return (
        math.ceil(box.y_min - 0.5),
        math.ceil(box.y_max - 0.5),
        math.ceil(box.x_min - 0.5),
        math.ceil(box.x_max - 0.5),
    )


def box_slices(box, shape, origin=(0, 0)):
    """Array slices of a raster of `shape` placed at `origin` covered by `box`.

    Returns `None` when the box misses the raster.
    """
    ox, oy = origin
    r0, r1, c0, c1 = pixel_span(box)
    r0, r1 = max(r0 - oy, 0), min(r1 - oy, shape[0])
    c0, c1 = max(c0 - ox, 0), min(c1 - ox, shape[1])
    if r0 >= r1 or c0 >= c1:
        return None
    return slice(r0, r1), slice(c0, c1)


def mask_box(mask, origin=(0, 0)):
    """Tight bounding box of the foreground of `mask`."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise BadRaster("Mask is empty.")
    ox, oy = origin
    return Box(
        float(cols[0] + ox),
        float(rows[0] + oy),
        float(cols[-1] + 1 + ox),
        float(rows[-1] + 1 + oy),
    )


def iou(a, b):
    """Intersection over union of two boxes; 0 when the union is empty."""
    inter = a.intersection(b)
    inter_area = inter.area if inter is not None else 0.0
    union = a.area + b.area - inter_area
    if union <= 0:
        return 0.0
    return inter_area / union


def _nms_order_key(detection):
    box = detection.box
    return (-detection.score, -box.area) + box.as_tuple()


def nms(detections, threshold=DEFAULT_NMS_THRESHOLD):
    """Greedy class-agnostic non-maximum suppression.

    The best remaining detection is kept and every detection whose IoU with
    it exceeds `threshold` is dropped, until none remain. Ties on score go
    to the larger box, then to the smaller coordinates.

    :returns:
        The kept detections in descending score order.
    """
    if not 0.0 <= threshold <= 1.0:
        raise BadBox("NMS threshold `{}` not in [0, 1].".format(threshold))
    if not detections:
        return []

    ordered = sorted(detections, key=_nms_order_key)
    boxes = np.array([d.box.as_tuple() for d in ordered], dtype=np.float64)
    x1, y1, x2, y2 = boxes.T
    areas = (x2 - x1) * (y2 - y1)

    remaining = np.arange(len(ordered))
    keep = []
    while remaining.size:
        i = remaining[0]
        keep.append(i)
        rest = remaining[1:]

        w = np.maximum(0.0, np.minimum(x2[i], x2[rest]) - np.maximum(x1[i], x1[rest]))
        h = np.maximum(0.0, np.minimum(y2[i], y2[rest]) - np.maximum(y1[i], y1[rest]))
        inter = w * h
        union = areas[i] + areas[rest] - inter
        overlap = np.divide(
            inter, union, out=np.zeros_like(inter), where=union > 0
        )
        remaining = rest[overlap <= threshold]

    return [ordered[i] for i in keep]


def overlap_over_target(pred, target, origin=(0, 0)):
    """Share of the `target` foreground covered by `pred`.

    :param pred:
        A :class:`Box` in image coordinates, or a boolean array in the same
        frame as `target`.

    :param target:
        Boolean array placed with its top-left pixel at `origin` (x, y).

    :raise BadRaster:
        If `target` has no foreground pixel.
    """
    target = np.asarray(target, dtype=bool)
    total = int(target.sum())
    if total == 0:
        raise BadRaster("Target mask is empty.")

    if isinstance(pred, Box):
        window = box_slices(pred, target.shape, origin)
        if window is None:
            return 0.0
        covered = int(target[window].sum())
    else:
        pred = np.asarray(pred, dtype=bool)
        if pred.shape != target.shape:
            raise BadRaster(
                "Mask shapes `{}` and `{}` differ.".format(pred.shape, target.shape)
            )
        covered = int(np.logical_and(pred, target).sum())
    return covered / total


def overlap(pred, target, origin=(0, 0), criterion=OVER_TARGET):
    """Overlap of a predicted box with a ground-truth footprint.

    ``over_target`` is the covered share of the footprint pixels; ``iou``
    compares `pred` with the footprint's tight bounding box.
    """
    if criterion == OVER_TARGET:
        return overlap_over_target(pred, target, origin)
    if criterion == IOU:
        return iou(pred, mask_box(target, origin))
    raise BadBox("Criterion `{}` not valid.".format(criterion))
