# -*- coding: utf-8 -*-
"""Prediction maps, binary masks and positive regions.

Rasters are numpy arrays indexed ``[row, col]``. Prediction maps keep the
background probability in channel 0; the foreground probability of a pixel
is ``1 - background``, which treats binary and multi-class maps alike.
"""
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .exceptions import BadRaster
from .geometry import Box, box_slices

PMAP_MAGIC = b"PMAP"
PMAP_HEADER = struct.Struct("<4sIII")
PMAP_DTYPE = np.dtype("<f4")

VALUE_TOLERANCE = 1e-6
NORMALIZED_TOLERANCE = 1e-5

# 8-connectivity: diagonal wing tips stay attached to the fuselage.
CONNECTIVITY = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True, eq=False)
class PredictionMap:
    values: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        values = self.values
        if values.ndim != 3 or values.shape[2] < 1:
            raise BadRaster(
                "Prediction map must be (height, width, channels), got `{}`.".format(
                    values.shape
                )
            )
        if values.size and (
            values.min() < -VALUE_TOLERANCE or values.max() > 1 + VALUE_TOLERANCE
        ):
            raise BadRaster("Prediction values must lie in [0, 1].")
        if self.normalized and values.size:
            sums = values.sum(axis=2, dtype=np.float64)
            if np.abs(sums - 1.0).max() > NORMALIZED_TOLERANCE:
                raise BadRaster("Prediction map is flagged normalized but is not.")

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def channels(self):
        return self.values.shape[2]

    @property
    def foreground(self):
        return 1.0 - self.values[:, :, 0]

    def crop(self, x, y, width, height):
        if x < 0 or y < 0 or x + width > self.width or y + height > self.height:
            raise BadRaster(
                "Crop `{}` exceeds a {}x{} map.".format(
                    (x, y, width, height), self.width, self.height
                )
            )
        return PredictionMap(
            self.values[y:y + height, x:x + width].copy(), self.normalized
        )

    @classmethod
    def binary(cls, foreground):
        """Two-channel map from a foreground probability raster."""
        foreground = np.asarray(foreground, dtype=np.float32)
        return cls(np.stack([1.0 - foreground, foreground], axis=2))


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray

    def __post_init__(self):
        if self.bits.ndim != 2 or self.bits.dtype != bool:
            raise BadRaster("Binary mask must be a 2-d boolean array.")

    @property
    def height(self):
        return self.bits.shape[0]

    @property
    def width(self):
        return self.bits.shape[1]

    @property
    def shape(self):
        return self.bits.shape

    def count(self):
        return int(self.bits.sum())

    @classmethod
    def empty(cls, width, height):
        return cls(np.zeros((height, width), dtype=bool))


@dataclass(frozen=True, eq=False)
class Region:
    """A connected set of foreground pixels.

    `pixels` holds ``(row, col)`` pairs in scan order; `centroid` is the
    continuous ``(x, y)`` mean of the pixel centers.
    """

    pixels: np.ndarray
    box: Box
    area: int
    centroid: tuple = field(default=(0.0, 0.0))

    @classmethod
    def from_pixels(cls, rows, cols):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.size == 0:
            raise BadRaster("A region needs at least one pixel.")
        box = Box(
            float(cols.min()),
            float(rows.min()),
            float(cols.max() + 1),
            float(rows.max() + 1),
        )
        centroid = (float(cols.mean() + 0.5), float(rows.mean() + 0.5))
        return cls(np.stack([rows, cols], axis=1), box, int(rows.size), centroid)

    @property
    def rows(self):
        return self.pixels[:, 0]

    @property
    def cols(self):
        return self.pixels[:, 1]

    def paint(self, bits):
        bits[self.rows, self.cols] = True
        return bits

    def mean_of(self, raster):
        return float(np.asarray(raster)[self.rows, self.cols].mean())


def threshold(prediction, t):
    """Foreground mask of the pixels whose foreground probability is >= `t`."""
    if not 0.0 <= t <= 1.0:
        raise BadRaster("Threshold `{}` not in [0, 1].".format(t))
    return BinaryMask(np.asarray(prediction.foreground >= t))


def connected_components(mask):
    """8-connected components of `mask`, ordered by their first pixel in scan order."""
    labels, _ = ndimage.label(mask.bits, structure=CONNECTIVITY)
    regions = []
    for index, window in enumerate(ndimage.find_objects(labels), start=1):
        if window is None:
            continue
        rows, cols = np.nonzero(labels[window] == index)
        regions.append(
            Region.from_pixels(rows + window[0].start, cols + window[1].start)
        )
    regions.sort(key=lambda region: (region.rows[0], region.cols[0]))
    return regions


def filter_min_size(regions, min_size):
    if min_size < 0:
        raise BadRaster("Minimum size `{}` should not be negative.".format(min_size))
    return [region for region in regions if region.area >= min_size]


def erase(mask, box):
    """Copy of `mask` with every pixel inside `box` set to background."""
    bits = mask.bits.copy()
    window = box_slices(box, bits.shape)
    if window is not None:
        bits[window] = False
    return BinaryMask(bits)


def regions_mask(regions, width, height):
    bits = np.zeros((height, width), dtype=bool)
    for region in regions:
        region.paint(bits)
    return BinaryMask(bits)


def write_pmap(path, values):
    """Write a (height, width, channels) raster in the PMAP format."""
    values = np.asarray(values)
    if values.ndim == 2:
        values = values[:, :, np.newaxis]
    if values.ndim != 3:
        raise BadRaster("Cannot write a raster of shape `{}`.".format(values.shape))
    height, width, channels = values.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        handle.write(PMAP_HEADER.pack(PMAP_MAGIC, width, height, channels))
        handle.write(np.ascontiguousarray(values, dtype=PMAP_DTYPE).tobytes())


def read_pmap(path):
    """Read a PMAP file into a float32 (height, width, channels) array."""
    data = Path(path).read_bytes()
    if len(data) < PMAP_HEADER.size:
        raise BadRaster("File `{}` is too short for a PMAP header.".format(path))
    magic, width, height, channels = PMAP_HEADER.unpack_from(data)
    if magic != PMAP_MAGIC:
        raise BadRaster("File `{}` has a malformed PMAP header.".format(path))
    expected = width * height * channels * PMAP_DTYPE.itemsize
    body = data[PMAP_HEADER.size:]
    if len(body) != expected:
        raise BadRaster(
            "File `{}` holds {} bytes of pixels, expected {}.".format(
                path, len(body), expected
            )
        )
    values = np.frombuffer(body, dtype=PMAP_DTYPE).reshape(height, width, channels)
    return values.astype(np.float32)


def read_prediction_map(path, normalized=True):
    return PredictionMap(read_pmap(path), normalized=normalized)
