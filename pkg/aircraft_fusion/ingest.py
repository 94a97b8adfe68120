# -*- coding: utf-8 -*-
"""Scenes, tiling, stitching and augmentation.

A scene directory holds ``scene.yaml`` (the manifest), ``image.pmap`` and
``instances.pmap``, a one-channel raster where each ground-truth object is
painted with its id and the background is 0.
"""
import logging
from collections import namedtuple
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from scipy import ndimage

from .exceptions import BadGrid, BadManifest, BadStitch
from .geometry import Box, mask_box
from .raster import PredictionMap, read_pmap, write_pmap

logger = logging.getLogger(__name__)

TILE_SIZE = 512
OVERLAP = 128
RESOLUTION_RANGE_CM = (30, 50)

MANIFEST_NAME = "scene.yaml"
IMAGE_NAME = "image.pmap"
INSTANCES_NAME = "instances.pmap"

MEAN = "mean"
MAX = "max"
BLENDS = (MEAN, MAX)

FLIP_H = "flip_h"
FLIP_V = "flip_v"
ROTATE90 = "rotate90"
GRAYSCALE = "grayscale"
HIST_EQUALIZE = "hist_equalize"
NORMALIZE = "normalize"
GEOMETRIC = (FLIP_H, FLIP_V, ROTATE90)
RADIOMETRIC = (GRAYSCALE, HIST_EQUALIZE, NORMALIZE)

LUMINANCE = np.array([0.299, 0.587, 0.114])
HISTOGRAM_LEVELS = 256

DatasetStats = namedtuple(
    "DatasetStats", ("n_images", "n_objects", "n_tiles", "area_km2")
)


@dataclass(frozen=True, eq=False)
class Footprint:
    """Object pixels as a tight box plus the boolean mask inside it."""

    box: Box
    mask: np.ndarray

    @property
    def origin(self):
        return (int(self.box.x_min), int(self.box.y_min))

    @property
    def area(self):
        return int(self.mask.sum())

    @classmethod
    def from_mask(cls, bits, origin=(0, 0)):
        box = mask_box(bits, origin)
        ox, oy = origin
        r0, c0 = int(box.y_min) - oy, int(box.x_min) - ox
        r1, c1 = int(box.y_max) - oy, int(box.x_max) - ox
        return cls(box, np.array(bits[r0:r1, c0:c1], dtype=bool))

    def paint(self, raster, value=True):
        x, y = self.origin
        h, w = self.mask.shape
        raster[y:y + h, x:x + w][self.mask] = value
        return raster


@dataclass(frozen=True, eq=False)
class GroundTruthObject:
    id: int
    label: object
    footprint: Footprint

    @property
    def box(self):
        return self.footprint.box


@dataclass(eq=False)
class SceneManifest:
    name: str
    width: int
    height: int
    resolution_cm: float = 50.0
    objects: list = field(default_factory=list)
    image_path: Path = None

    def __post_init__(self):
        low, high = RESOLUTION_RANGE_CM
        if not low <= self.resolution_cm <= high:
            raise BadManifest(
                "Resolution `{}` cm not in [{}, {}].".format(
                    self.resolution_cm, low, high
                )
            )
        bounds = Box(0, 0, self.width, self.height)
        for obj in self.objects:
            if obj.box.intersection(bounds) != obj.box:
                raise BadManifest(
                    "Object `{}` lies outside the {}x{} image.".format(
                        obj.id, self.width, self.height
                    )
                )

    @property
    def area_km2(self):
        meters = self.resolution_cm / 100.0
        return self.width * self.height * meters * meters / 1e6

    def instances(self):
        raster = np.zeros((self.height, self.width), dtype=np.float32)
        for obj in self.objects:
            obj.footprint.paint(raster, obj.id)
        return raster

    def load_image(self):
        if self.image_path is None:
            raise BadManifest("Scene `{}` has no image raster.".format(self.name))
        return read_pmap(self.image_path)


class TileGrid(object):
    def __init__(self, width, height, tile_size=TILE_SIZE, overlap=OVERLAP):
        if tile_size < 1:
            raise BadGrid("Tile size should be positive: {}".format(tile_size))
        if not 0 <= overlap < tile_size:
            raise BadGrid(
                "Overlap `{}` must lie in [0, tile size {}).".format(
                    overlap, tile_size
                )
            )
        if width < tile_size or height < tile_size:
            raise BadGrid(
                "Image {}x{} is smaller than the tile size {}.".format(
                    width, height, tile_size
                )
            )
        self.width = width
        self.height = height
        self.tile_size = tile_size
        self.overlap = overlap

    @property
    def stride(self):
        return self.tile_size - self.overlap

    def _axis(self, size):
        last = size - self.tile_size
        starts = list(range(0, last + 1, self.stride))
        if starts[-1] != last:
            starts.append(last)
        return starts

    @property
    def origins(self):
        return [(x, y) for y in self._axis(self.height) for x in self._axis(self.width)]

    def __len__(self):
        return len(self.origins)

    def tile_box(self, origin):
        x, y = origin
        return Box(x, y, x + self.tile_size, y + self.tile_size)


def make_grid(width, height, tile_size=TILE_SIZE, overlap=OVERLAP):
    """Tile origins every ``tile_size - overlap`` pixels.

    The last origin of each axis is clamped to ``size - tile_size`` so every
    tile holds real pixels; duplicate origins collapse.
    """
    return TileGrid(width, height, tile_size, overlap)


def tile_map(prediction, grid):
    return [
        (origin, prediction.crop(origin[0], origin[1], grid.tile_size, grid.tile_size))
        for origin in grid.origins
    ]


def stitch(tile_maps, width, height, blend=MEAN):
    """Blend overlapping tile predictions back into one map.

    :param tile_maps:
        ``((x, y), PredictionMap)`` pairs.

    :param blend:
        ``mean`` averages the covering tiles per pixel, ``max`` keeps the
        per-channel maximum. Either way the result is renormalized per pixel.

    :raise BadStitch:
        On a channel count mismatch, a tile outside the image or an
        uncovered pixel.
    """
    if blend not in BLENDS:
        raise BadStitch("Blend `{}` not valid.".format(blend))
    if not tile_maps:
        raise BadStitch("No tile to stitch.")

    channels = {prediction.channels for _, prediction in tile_maps}
    if len(channels) != 1:
        raise BadStitch(
            "Tiles disagree on channel count: `{}`.".format(sorted(channels))
        )
    (channel_count,) = channels

    accumulated = np.zeros((height, width, channel_count), dtype=np.float64)
    coverage = np.zeros((height, width), dtype=np.int64)
    for (x, y), prediction in tile_maps:
        h, w = prediction.height, prediction.width
        if x < 0 or y < 0 or x + w > width or y + h > height:
            raise BadStitch("Tile at `{}` lies outside the image.".format((x, y)))
        window = (slice(y, y + h), slice(x, x + w))
        if blend == MEAN:
            accumulated[window] += prediction.values
        else:
            np.maximum(accumulated[window], prediction.values, out=accumulated[window])
        coverage[window] += 1

    if (coverage == 0).any():
        row, col = np.argwhere(coverage == 0)[0]
        raise BadStitch("Pixel `{}` is not covered by any tile.".format((col, row)))

    if blend == MEAN:
        accumulated /= coverage[:, :, np.newaxis]
    totals = accumulated.sum(axis=2, keepdims=True)
    np.divide(accumulated, totals, out=accumulated, where=totals > 0)
    return PredictionMap(accumulated.astype(np.float32))


def _geometric(raster, transform, k):
    if transform == FLIP_H:
        return raster[:, ::-1].copy()
    if transform == FLIP_V:
        return raster[::-1].copy()
    return np.rot90(raster, k=k % 4, axes=(0, 1)).copy()


def _equalize(channel):
    levels = np.clip(np.rint(channel * (HISTOGRAM_LEVELS - 1)), 0, HISTOGRAM_LEVELS - 1)
    levels = levels.astype(np.int64)
    histogram = np.bincount(levels.ravel(), minlength=HISTOGRAM_LEVELS)
    cdf = np.cumsum(histogram) / levels.size
    return cdf[levels]


def augment(image, transform, k=1):
    """Deterministic augmentation of an (height, width[, channels]) raster.

    Geometric transforms (``flip_h``, ``flip_v``, ``rotate90`` applied `k`
    times) move pixels; radiometric ones (``grayscale``, ``hist_equalize``,
    ``normalize``) change values. Use :func:`augment_instances` to move the
    ground truth along with a geometric transform.
    """
    image = np.asarray(image)
    if transform in GEOMETRIC:
        return _geometric(image, transform, k)

    values = image.astype(np.float64)
    if values.ndim == 2:
        values = values[:, :, np.newaxis]

    if transform == GRAYSCALE:
        if values.shape[2] == 3:
            gray = values @ LUMINANCE
        else:
            gray = values.mean(axis=2)
        result = np.repeat(gray[:, :, np.newaxis], values.shape[2], axis=2)
    elif transform == HIST_EQUALIZE:
        result = np.stack(
            [_equalize(values[:, :, c]) for c in range(values.shape[2])], axis=2
        )
    elif transform == NORMALIZE:
        mean = values.mean(axis=(0, 1), keepdims=True)
        std = values.std(axis=(0, 1), keepdims=True)
        result = np.divide(
            values - mean, std, out=np.zeros_like(values), where=std > 0
        )
    else:
        raise BadManifest("Augmentation `{}` not valid.".format(transform))

    if image.ndim == 2:
        result = result[:, :, 0]
    return result


def augment_instances(instances, transform, k=1):
    """Apply the pixel movement of a geometric augmentation to an instance raster."""
    if transform in GEOMETRIC:
        return _geometric(np.asarray(instances), transform, k)
    if transform in RADIOMETRIC:
        return np.asarray(instances).copy()
    raise BadManifest("Augmentation `{}` not valid.".format(transform))


def dataset_stats(manifests, tile_size=None, overlap=OVERLAP):
    """Image, object, tile and area totals of a set of scenes.

    `n_tiles` is `None` when no `tile_size` is given (untiled sets).
    """
    n_tiles = None
    if tile_size is not None:
        n_tiles = sum(
            len(make_grid(m.width, m.height, tile_size, overlap)) for m in manifests
        )
    return DatasetStats(
        n_images=len(manifests),
        n_objects=sum(len(m.objects) for m in manifests),
        n_tiles=n_tiles,
        area_km2=sum(m.area_km2 for m in manifests),
    )


def objects_from_instances(instances, labels):
    """Ground-truth objects from an instance raster and an ``id -> Label`` map."""
    raster = np.asarray(instances)
    if raster.ndim == 3:
        raster = raster[:, :, 0]
    ids = raster.astype(np.int64)
    windows = ndimage.find_objects(ids)
    objects = []
    for object_id, label in sorted(labels.items()):
        if object_id < 1 or object_id > len(windows) or windows[object_id - 1] is None:
            raise BadManifest("Object `{}` has no pixel.".format(object_id))
        rows, cols = windows[object_id - 1]
        bits = ids[rows, cols] == object_id
        footprint = Footprint.from_mask(bits, origin=(cols.start, rows.start))
        objects.append(GroundTruthObject(object_id, label, footprint))
    return objects


def write_scene(scene, directory, image=None):
    """Write the manifest, the instance raster and optionally the image."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    document = {
        "name": scene.name,
        "width": scene.width,
        "height": scene.height,
        "resolution_cm": scene.resolution_cm,
        "instances": INSTANCES_NAME,
        "objects": [{"id": obj.id, "label": obj.label.name} for obj in scene.objects],
    }
    if image is not None:
        write_pmap(directory / IMAGE_NAME, image)
        document["image"] = IMAGE_NAME
        scene.image_path = directory / IMAGE_NAME
    write_pmap(directory / INSTANCES_NAME, scene.instances())
    path = directory / MANIFEST_NAME
    path.write_text(yaml.safe_dump(document, sort_keys=False), encoding="utf-8")
    logger.info("Wrote scene `%s` to %s", scene.name, directory)
    return path


def load_manifest(path, taxonomy):
    """Read a scene manifest; `path` may be the YAML file or its directory."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        document = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as error:
        raise BadManifest("Cannot read manifest `{}`: {}".format(path, error))
    if not isinstance(document, dict):
        raise BadManifest("Manifest `{}` must be a mapping.".format(path))

    try:
        name = document["name"]
        width = int(document["width"])
        height = int(document["height"])
    except KeyError as error:
        raise BadManifest("Manifest `{}` misses key {}.".format(path, error))

    entries = document.get("objects") or []
    labels = {int(entry["id"]): taxonomy.label(entry["label"]) for entry in entries}
    objects = []
    if labels:
        instances = read_pmap(path.parent / document.get("instances", INSTANCES_NAME))
        if instances.shape[:2] != (height, width):
            raise BadManifest(
                "Instance raster of `{}` does not match {}x{}.".format(
                    name, width, height
                )
            )
        objects = objects_from_instances(instances, labels)

    image = document.get("image")
    return SceneManifest(
        name=name,
        width=width,
        height=height,
        resolution_cm=float(document.get("resolution_cm", 50.0)),
        objects=objects,
        image_path=path.parent / image if image else None,
    )
