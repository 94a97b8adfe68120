# -*- coding: utf-8 -*-
"""Inference backends.

Both model types are reached through a small contract: a segmentation
backend turns an image window into a :class:`PredictionMap`, a detection
backend turns it into level-3 :class:`Detection` objects. Models run out of
process; their outputs are exchanged as files::

    <backend>/tiles/<x>_<y>.pmap    per-tile prediction maps
    <backend>/dets/<x>_<y>.txt      per-tile detection lists

A detection list holds one ``x_min y_min x_max y_max score label`` line per
detection. The synthetic backends paint and box the ground truth of a scene
with controllable errors, to exercise the fusion without a trained model.
"""
import abc
import logging
import math
from pathlib import Path

import numpy as np

from .exceptions import BadDetectionFormat, BadRaster, MissingPrediction
from .geometry import Box, Detection, box_slices
from .ingest import TILE_SIZE
from .raster import PredictionMap, read_prediction_map, write_pmap

logger = logging.getLogger(__name__)

TILES_DIR = "tiles"
DETS_DIR = "dets"

SEGMENTATION_STREAM = 0
DETECTION_STREAM = 1

BACKGROUND_PROBABILITY = 0.02
PLACEMENT_ATTEMPTS = 200
FP_SIZE_RANGE = (40, 70)


class SegmentationBackend(abc.ABC):
    @abc.abstractmethod
    def predict(self, image, window):
        """Prediction map of the integer `window` (a :class:`Box`) of `image`."""


class DetectionBackend(abc.ABC):
    @abc.abstractmethod
    def detect(self, image, window):
        """Detections whose center lies in `window`, boxes clipped to it."""


def select_in_window(detections, window):
    selected = []
    for detection in detections:
        cx, cy = detection.box.center
        if window.contains_point(cx, cy):
            selected.append(
                Detection(detection.box.clip(window), detection.score, detection.label)
            )
    selected.sort(key=lambda d: (d.box.as_tuple(), -d.score, d.label.name))
    return selected


def tile_key(origin):
    return "{}_{}".format(int(origin[0]), int(origin[1]))


def parse_tile_key(stem):
    try:
        x, y = stem.split("_")
        return int(x), int(y)
    except ValueError:
        raise BadDetectionFormat("File name `{}` is not `<x>_<y>`.".format(stem))


def format_detection(detection):
    values = detection.box.as_tuple() + (detection.score,)
    return " ".join(repr(float(v)) for v in values) + " " + detection.label.name


def parse_detection(line, taxonomy, where=""):
    parts = line.split()
    if len(parts) != 6:
        raise BadDetectionFormat(
            "{}expected `x_min y_min x_max y_max score label`, got `{}`.".format(
                where, line
            )
        )
    try:
        x_min, y_min, x_max, y_max, score = (float(v) for v in parts[:5])
    except ValueError:
        raise BadDetectionFormat("{}non-numeric value in `{}`.".format(where, line))
    if not 0.0 <= score <= 1.0:
        raise BadDetectionFormat("{}score `{}` not in [0, 1].".format(where, score))
    try:
        box = Box(x_min, y_min, x_max, y_max)
    except Exception as error:
        raise BadDetectionFormat("{}{}".format(where, error))
    return Detection(box, score, taxonomy.label(parts[5]))


def read_detections(path, taxonomy):
    path = Path(path)
    detections = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if line.strip():
            where = "{}:{}: ".format(path.name, number)
            detections.append(parse_detection(line, taxonomy, where))
    return detections


def write_detections(path, detections):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = "".join(format_detection(d) + "\n" for d in detections)
    path.write_text(text, encoding="utf-8")


class FileBackend(SegmentationBackend, DetectionBackend):
    """Serves per-tile outputs precomputed by an external model.

    Everything is read and validated at load time; queries only look up
    immutable in-memory data.
    """

    def __init__(self, directory, predictions, detections, tile_size=TILE_SIZE):
        self.directory = Path(directory)
        self.predictions = predictions
        self.detections = detections
        self.tile_size = tile_size

    @property
    def has_segmentation(self):
        return bool(self.predictions)

    @property
    def has_detection(self):
        return bool(self.detections)

    def predict(self, image, window):
        key = (int(window.x_min), int(window.y_min))
        try:
            prediction = self.predictions[key]
        except KeyError:
            raise MissingPrediction(
                "Missing prediction for tile `{}` in `{}`.".format(
                    tile_key(key), self.directory
                )
            )
        if (prediction.width, prediction.height) != (window.width, window.height):
            raise MissingPrediction(
                "Tile `{}` is {}x{}, the query asks {}x{}.".format(
                    tile_key(key),
                    prediction.width,
                    prediction.height,
                    window.width,
                    window.height,
                )
            )
        return prediction

    def detect(self, image, window):
        width = int(math.ceil(window.width))
        height = int(math.ceil(window.height))
        covered = np.zeros((height, width), dtype=bool)
        gathered = set()
        for origin, detections in self.detections.items():
            x, y = origin
            tile = Box(x, y, x + self.tile_size, y + self.tile_size)
            if tile.intersection(window) is None:
                continue
            part = box_slices(
                tile, covered.shape, (int(window.x_min), int(window.y_min))
            )
            if part is not None:
                covered[part] = True
            gathered.update(detections)

        if not covered.all():
            raise MissingPrediction(
                "Missing detections for window `{}` in `{}`.".format(
                    window.as_tuple(), self.directory
                )
            )
        return select_in_window(_drop_clipped_copies(gathered), window)


def _is_copy(part, whole):
    return (
        part.score == whole.score
        and part.label == whole.label
        and part.box.intersection(whole.box) == part.box
    )


def _drop_clipped_copies(detections):
    """One detection per object cut by tile borders.

    A tile keeps the part of a box inside it; that part lies within the
    full box and carries its score and label.
    """
    kept = []
    ordered = sorted(
        detections,
        key=lambda d: (-d.box.area, d.box.as_tuple(), -d.score, d.label.name),
    )
    for detection in ordered:
        if not any(_is_copy(detection, whole) for whole in kept):
            kept.append(detection)
    return kept


def _load_keyed(folder, suffix):
    files = {}
    if not folder.is_dir():
        return files
    for path in sorted(folder.glob("*" + suffix)):
        key = parse_tile_key(path.stem)
        if key in files:
            raise BadDetectionFormat(
                "Files `{}` and `{}` share key `{}`.".format(
                    files[key].name, path.name, tile_key(key)
                )
            )
        files[key] = path
    return files


def file_backend_load(directory, taxonomy, tile_size=TILE_SIZE):
    """Load a backend directory.

    :raise MissingPrediction:
        If `directory` does not exist.

    :raise BadRaster:
        On a malformed PMAP file.

    :raise BadDetectionFormat:
        On a malformed detection line, an out-of-range score or two files
        mapping to the same tile key.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingPrediction("Backend directory `{}` not found.".format(directory))

    predictions = {}
    for key, path in _load_keyed(directory / TILES_DIR, ".pmap").items():
        try:
            predictions[key] = read_prediction_map(path)
        except BadRaster as error:
            raise BadRaster("Tile `{}`: {}".format(path.name, error))

    detections = {
        key: frozenset(read_detections(path, taxonomy))
        for key, path in _load_keyed(directory / DETS_DIR, ".txt").items()
    }
    logger.info(
        "Loaded backend %s: %d prediction tiles, %d detection tiles",
        directory,
        len(predictions),
        len(detections),
    )
    return FileBackend(directory, predictions, detections, tile_size)


def write_backend_outputs(
    directory, grid, segmentation=None, detection=None, image=None
):
    """Replay every tile of `grid` through the backends and store the answers."""
    directory = Path(directory)
    for origin in grid.origins:
        window = grid.tile_box(origin)
        if segmentation is not None:
            prediction = segmentation.predict(image, window)
            path = directory / TILES_DIR / (tile_key(origin) + ".pmap")
            write_pmap(path, prediction.values)
        if detection is not None:
            write_detections(
                directory / DETS_DIR / (tile_key(origin) + ".txt"),
                detection.detect(image, window),
            )
    logger.info("Wrote %d tiles to %s", len(grid.origins), directory)


class SyntheticBackendConfig(object):
    """Error model of a synthetic backend.

    :param miss_rate: probability of dropping a ground-truth object.
    :param false_positive_rate: false positives per km^2 (Poisson mean).
    :param label_confusion_rate: probability of a wrong level-3 label
        (detection only).
    :param localization_jitter: max integer shift of each box side, in
        pixels (detection only).
    :param seed: seed of the backend's random stream.
    :param sibling_confusion: share of label confusions that stay under the
        true level-2 function.
    :param near_share: share of false positives placed next to an aircraft;
        the others keep `far_distance` away from every aircraft.
    :param true_strength: probability (segmentation) or score (detection)
        range of true objects.
    :param near_strength: strength range of near false positives.
    :param fp_strength: strength range of far false positives.
    :param disjoint: keep detection false positives away from the
        segmentation ones (read from the detection config).
    """

    def __init__(
        self,
        miss_rate=0.0,
        false_positive_rate=0.0,
        label_confusion_rate=0.0,
        localization_jitter=0,
        seed=0,
        sibling_confusion=0.0,
        near_share=0.0,
        true_strength=(0.85, 0.99),
        near_strength=(0.65, 0.9),
        fp_strength=(0.3, 0.55),
        near_distance=150.0,
        far_distance=300.0,
        disjoint=True,
    ):
        for name, value in (
            ("miss_rate", miss_rate),
            ("label_confusion_rate", label_confusion_rate),
            ("sibling_confusion", sibling_confusion),
            ("near_share", near_share),
        ):
            if not 0.0 <= value <= 1.0:
                raise BadDetectionFormat("`{}` not in [0, 1]: {}".format(name, value))
        for name, (low, high) in (
            ("true_strength", true_strength),
            ("near_strength", near_strength),
            ("fp_strength", fp_strength),
        ):
            if not 0.0 <= low <= high <= 1.0:
                raise BadDetectionFormat(
                    "`{}` must be a range inside [0, 1]: {}".format(name, (low, high))
                )
        if false_positive_rate < 0:
            raise BadDetectionFormat(
                "`false_positive_rate` should not be negative: {}".format(
                    false_positive_rate
                )
            )
        if localization_jitter < 0 or int(localization_jitter) != localization_jitter:
            raise BadDetectionFormat(
                "`localization_jitter` must be a whole number of pixels: {}".format(
                    localization_jitter
                )
            )
        if near_distance < 0 or far_distance < 0:
            raise BadDetectionFormat("Placement distances should not be negative.")

        self.miss_rate = miss_rate
        self.false_positive_rate = false_positive_rate
        self.label_confusion_rate = label_confusion_rate
        self.localization_jitter = int(localization_jitter)
        self.seed = int(seed)
        self.sibling_confusion = sibling_confusion
        self.near_share = near_share
        self.true_strength = tuple(true_strength)
        self.near_strength = tuple(near_strength)
        self.fp_strength = tuple(fp_strength)
        self.near_distance = near_distance
        self.far_distance = far_distance
        self.disjoint = disjoint

    def as_dict(self):
        return dict(vars(self))

    def updated(self, **settings):
        """Copy with some settings replaced.

        :raise BadDetectionFormat:
            On an unknown setting or an invalid value.
        """
        values = self.as_dict()
        unknown = sorted(set(settings) - set(values))
        if unknown:
            raise BadDetectionFormat("Unknown noise key `{}`.".format(unknown[0]))
        values.update(settings)
        return SyntheticBackendConfig(**values)

    def reseeded(self, seed):
        return self.updated(seed=seed)


class _Placer(object):
    """Rejection sampler for false positives that must not touch other objects."""

    def __init__(self, scene, rng, occupied, gap=8):
        self.scene = scene
        self.rng = rng
        self.gap = gap
        self.occupied = [box.as_tuple() for box in occupied]
        self.centers = np.array(
            [obj.box.center for obj in scene.objects], dtype=np.float64
        ).reshape(-1, 2)

    def _free(self, box):
        if not self.occupied:
            return True
        boxes = np.array(self.occupied)
        g = self.gap
        apart = (
            (boxes[:, 2] + g <= box.x_min)
            | (box.x_max + g <= boxes[:, 0])
            | (boxes[:, 3] + g <= box.y_min)
            | (box.y_max + g <= boxes[:, 1])
        )
        return bool(apart.all())

    def _distance(self, x, y):
        if not len(self.centers):
            return math.inf
        return float(np.hypot(self.centers[:, 0] - x, self.centers[:, 1] - y).min())

    def place(self, near, config):
        """Box of a new false positive, or `None` after too many rejections."""
        if near and not self.scene.objects:
            return None
        low, high = FP_SIZE_RANGE
        for _ in range(PLACEMENT_ATTEMPTS):
            size = int(self.rng.integers(low, high + 1))
            if near:
                anchor = self.centers[self.rng.integers(len(self.centers))]
                angle = self.rng.uniform(0.0, 2.0 * math.pi)
                radius = self.rng.uniform(size, config.near_distance)
                cx = anchor[0] + radius * math.cos(angle)
                cy = anchor[1] + radius * math.sin(angle)
            else:
                cx = self.rng.uniform(size / 2.0, self.scene.width - size / 2.0)
                cy = self.rng.uniform(size / 2.0, self.scene.height - size / 2.0)
            x_min, y_min = int(cx - size / 2.0), int(cy - size / 2.0)
            if (
                x_min < 0
                or y_min < 0
                or x_min + size > self.scene.width
                or y_min + size > self.scene.height
            ):
                continue
            box = Box(x_min, y_min, x_min + size, y_min + size)
            distance = self._distance(*box.center)
            if near and distance > config.near_distance:
                continue
            if not near and distance < config.far_distance:
                continue
            if self._free(box):
                self.occupied.append(box.as_tuple())
                return box
        logger.debug("Gave up placing a %s false positive", "near" if near else "far")
        return None


def _false_positive_boxes(scene, config, rng, occupied):
    """Boxes and strengths of the false positives of one backend."""
    placer = _Placer(scene, rng, occupied)
    count = int(rng.poisson(config.false_positive_rate * scene.area_km2))
    placed = []
    for _ in range(count):
        near = bool(rng.random() < config.near_share)
        box = placer.place(near, config)
        if box is None:
            continue
        strength_range = config.near_strength if near else config.fp_strength
        placed.append((box, float(rng.uniform(*strength_range)), near))
    return placed


def _ellipse(size):
    yy, xx = np.mgrid[0:size, 0:size]
    center = (size - 1) / 2.0
    return ((xx - center) ** 2 + (yy - center) ** 2) <= (size / 2.0) ** 2


class SyntheticSegmentation(SegmentationBackend):
    """Paints the scene's footprints; misses and blob false positives per config."""

    def __init__(self, scene, config):
        self.scene = scene
        self.config = config
        rng = np.random.default_rng([config.seed, SEGMENTATION_STREAM])

        foreground = np.full(
            (scene.height, scene.width), BACKGROUND_PROBABILITY, dtype=np.float32
        )
        self.missed_ids = []
        for obj in scene.objects:
            missed = rng.random() < config.miss_rate
            strength = rng.uniform(*config.true_strength)
            if missed:
                self.missed_ids.append(obj.id)
                continue
            obj.footprint.paint(foreground, strength)

        occupied = [obj.box for obj in scene.objects]
        self.false_positives = _false_positive_boxes(scene, config, rng, occupied)
        for box, strength, _ in self.false_positives:
            x, y = int(box.x_min), int(box.y_min)
            size = int(box.width)
            window = foreground[y:y + size, x:x + size]
            window[_ellipse(size)] = strength

        self.prediction = PredictionMap.binary(foreground)

    def predict(self, image, window):
        return self.prediction.crop(
            int(window.x_min), int(window.y_min), int(window.width), int(window.height)
        )


class SyntheticDetection(DetectionBackend):
    """Boxes the scene objects with jitter, misses, confusions and false positives."""

    def __init__(self, scene, config, taxonomy, avoid=()):
        self.scene = scene
        self.config = config
        self.taxonomy = taxonomy
        rng = np.random.default_rng([config.seed, DETECTION_STREAM])
        bounds = Box(0, 0, scene.width, scene.height)
        identifications = taxonomy.labels(3)

        self.missed_ids = []
        self.detections = []
        for obj in scene.objects:
            missed = rng.random() < config.miss_rate
            score = float(rng.uniform(*config.true_strength))
            j = config.localization_jitter
            shifts = rng.integers(-j, j + 1, size=4) if j else np.zeros(4, dtype=int)
            label = self._confuse(obj.label, rng, identifications)
            if missed:
                self.missed_ids.append(obj.id)
                continue
            box = obj.box
            x_min = box.x_min + shifts[0]
            y_min = box.y_min + shifts[1]
            x_max = max(box.x_max + shifts[2], x_min + 1)
            y_max = max(box.y_max + shifts[3], y_min + 1)
            jittered = Box(float(x_min), float(y_min), float(x_max), float(y_max))
            self.detections.append(Detection(jittered.clip(bounds), score, label))

        occupied = [obj.box for obj in scene.objects]
        if config.disjoint:
            occupied.extend(avoid)
        self.false_positives = _false_positive_boxes(scene, config, rng, occupied)
        for box, strength, _ in self.false_positives:
            label = identifications[int(rng.integers(len(identifications)))]
            self.detections.append(Detection(box, strength, label))

    def _confuse(self, label, rng, identifications):
        draw = rng.random()
        sibling = rng.random()
        pick = rng.random()
        if draw >= self.config.label_confusion_rate:
            return label
        function = self.taxonomy.ancestor(label, 2)
        if sibling < self.config.sibling_confusion:
            pool = [
                c for c in self.taxonomy.children(function.name) if c.name != label.name
            ]
        else:
            pool = [
                c for c in identifications if self.taxonomy.ancestor(c, 2) != function
            ]
        if not pool:
            pool = [c for c in identifications if c.name != label.name]
        if not pool:
            return label
        return pool[min(int(pick * len(pool)), len(pool) - 1)]

    def detect(self, image, window):
        return select_in_window(self.detections, window)


def synthetic_backends(scene, seg_config, det_config, taxonomy):
    """Segmentation and detection doubles for `scene`.

    Each backend draws from its own random stream, so the two make
    independent errors. With ``det_config.disjoint`` the detection false
    positives are kept clear of the segmentation blobs.
    """
    segmentation = SyntheticSegmentation(scene, seg_config)
    blobs = [box for box, _, _ in segmentation.false_positives]
    detection = SyntheticDetection(scene, det_config, taxonomy, avoid=blobs)
    return segmentation, detection
