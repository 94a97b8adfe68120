# -*- coding: utf-8 -*-
"""Synthetic airfield scenes.

Aircraft are cross-shaped footprints (fuselage, wings, tailplane) parked on
an apron band along the top of the scene; a share of them is parked in
pairs whose wing tips touch, so that segmentation merges them into one
region. The rest of the scene is open ground where far false positives of
the synthetic backends can be placed.
"""
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .backend import SyntheticBackendConfig, synthetic_backends, write_backend_outputs
from .exceptions import BadConfig
from .geometry import Box
from .ingest import (
    OVERLAP,
    TILE_SIZE,
    Footprint,
    GroundTruthObject,
    SceneManifest,
    make_grid,
    write_scene,
)

logger = logging.getLogger(__name__)

SEGMENTATION_DIR = "segmentation"
DETECTION_DIR = "detection"

IMAGE_STREAM = 2
BACKGROUND_LEVEL = 0.35
BACKGROUND_NOISE = 0.05
AIRCRAFT_LEVEL = 0.8
PLACEMENT_ATTEMPTS = 1000


@dataclass(frozen=True)
class SceneParams:
    width: int = 1024
    height: int = 1024
    aircraft: int = 25
    resolution_cm: float = 50.0
    pair_share: float = 0.1
    size_range: tuple = (40, 70)
    apron_fraction: float = 0.45
    gap: int = 8
    name: str = "scene"

    def __post_init__(self):
        low, high = self.size_range
        if self.width < 1 or self.height < 1:
            raise BadConfig("Scene size must be positive.")
        if self.aircraft < 0:
            raise BadConfig("Aircraft count should not be negative.")
        if not 0.0 <= self.pair_share <= 1.0:
            raise BadConfig("`pair_share` not in [0, 1]: {}".format(self.pair_share))
        if not 0 < self.apron_fraction <= 1.0:
            raise BadConfig(
                "`apron_fraction` not in (0, 1]: {}".format(self.apron_fraction)
            )
        if not 8 <= low <= high:
            raise BadConfig("`size_range` must satisfy 8 <= low <= high.")
        if high > self.width or high > self.apron_height:
            raise BadConfig("Aircraft of {} px do not fit on the apron.".format(high))
        if self.gap < 0:
            raise BadConfig("`gap` should not be negative.")

    @property
    def apron_height(self):
        return int(self.height * self.apron_fraction)

    @property
    def pair_count(self):
        return int(round(self.aircraft * self.pair_share / 2.0))


@dataclass(frozen=True)
class SimulationPreset:
    name: str
    scene: SceneParams
    segmentation: SyntheticBackendConfig
    detection: SyntheticBackendConfig
    scenes: int = 4


@dataclass(eq=False)
class SimulatedScene:
    scene: SceneManifest
    segmentation: SyntheticBackendConfig
    detection: SyntheticBackendConfig
    seed: int
    params: SceneParams = field(default=None)


PRESETS = {
    "noiseless": SimulationPreset(
        name="noiseless",
        scene=SceneParams(),
        segmentation=SyntheticBackendConfig(),
        detection=SyntheticBackendConfig(true_strength=(0.65, 1.0)),
    ),
    # Balanced-mode rates: segmentation R~0.91 P~0.78, detection R~0.87 P~0.75.
    "table2": SimulationPreset(
        name="table2",
        scene=SceneParams(width=2048, height=2048, aircraft=60),
        segmentation=SyntheticBackendConfig(
            miss_rate=0.05,
            false_positive_rate=41.7,
            near_share=0.19,
            true_strength=(0.85, 0.99),
        ),
        detection=SyntheticBackendConfig(
            miss_rate=0.13,
            false_positive_rate=83.0,
            label_confusion_rate=0.2,
            sibling_confusion=0.55,
            localization_jitter=2,
            true_strength=(0.65, 1.0),
            disjoint=True,
        ),
    ),
}


def preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise BadConfig(
            "Preset `{}` not valid, use one of {}.".format(name, sorted(PRESETS))
        )


def with_noise(simulation, segmentation=None, detection=None):
    """Copy of `simulation` with some synthetic backend settings replaced."""
    return replace(
        simulation,
        segmentation=simulation.segmentation.updated(**(segmentation or {})),
        detection=simulation.detection.updated(**(detection or {})),
    )


def aircraft_mask(size, quarter_turns=0):
    """Cross-shaped footprint filling a ``size x size`` box."""
    mask = np.zeros((size, size), dtype=bool)
    fuselage = max(4, size // 6)
    wing = max(4, size // 5)
    tail = max(3, size // 8)
    left = (size - fuselage) // 2
    mask[:, left:left + fuselage] = True
    wing_row = int(size * 0.35)
    mask[wing_row:wing_row + wing, :] = True
    span = size // 2
    tail_left = (size - span) // 2
    mask[size - tail:, tail_left:tail_left + span] = True
    return np.rot90(mask, quarter_turns).copy()


def _is_free(box, placed, gap):
    for other in placed:
        if not (
            other.x_max + gap <= box.x_min
            or box.x_max + gap <= other.x_min
            or other.y_max + gap <= box.y_min
            or box.y_max + gap <= other.y_min
        ):
            return False
    return True


def _place(rng, params, width, height, placed):
    for _ in range(PLACEMENT_ATTEMPTS):
        x = int(rng.integers(0, params.width - width + 1))
        y = int(rng.integers(0, params.apron_height - height + 1))
        box = Box(x, y, x + width, y + height)
        if _is_free(box, placed, params.gap):
            placed.append(box)
            return x, y
    raise BadConfig(
        "Cannot park {} aircraft on a {}x{} apron.".format(
            params.aircraft, params.width, params.apron_height
        )
    )


def simulate_scene(params, taxonomy, seed):
    """Lay out `params.aircraft` labelled aircraft; pure function of its inputs."""
    rng = np.random.default_rng(seed)
    low, high = params.size_range
    identifications = taxonomy.labels(3)

    pairs = min(params.pair_count, params.aircraft // 2)
    singles = params.aircraft - 2 * pairs
    placed = []
    footprints = []

    for _ in range(pairs):
        size = int(rng.integers(low, high + 1))
        x, y = _place(rng, params, 2 * size, size, placed)
        mask = aircraft_mask(size)
        footprints.append(Footprint.from_mask(mask, origin=(x, y)))
        footprints.append(Footprint.from_mask(mask, origin=(x + size, y)))

    for _ in range(singles):
        size = int(rng.integers(low, high + 1))
        turns = int(rng.integers(4))
        x, y = _place(rng, params, size, size, placed)
        mask = aircraft_mask(size, turns)
        footprints.append(Footprint.from_mask(mask, origin=(x, y)))

    objects = [
        GroundTruthObject(
            object_id,
            identifications[int(rng.integers(len(identifications)))],
            footprint,
        )
        for object_id, footprint in enumerate(footprints, start=1)
    ]
    return SceneManifest(
        name=params.name,
        width=params.width,
        height=params.height,
        resolution_cm=params.resolution_cm,
        objects=objects,
    )


def render_image(scene, seed):
    """Single-channel image: noisy ground with the aircraft painted bright."""
    rng = np.random.default_rng([seed, IMAGE_STREAM])
    image = rng.normal(BACKGROUND_LEVEL, BACKGROUND_NOISE, (scene.height, scene.width))
    image = np.clip(image, 0.0, 1.0).astype(np.float32)
    for obj in scene.objects:
        obj.footprint.paint(image, AIRCRAFT_LEVEL)
    return image[:, :, np.newaxis]


def scene_seeds(seed, count):
    """Independent per-scene seeds spawned from one seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1)[0]) for child in children]


def simulate_dataset(simulation, taxonomy, seed, scenes=None, **scene_overrides):
    """Scenes of a preset with their reseeded backend configs.

    :param scene_overrides:
        :class:`SceneParams` fields to change, such as ``aircraft=100``.
    """
    count = simulation.scenes if scenes is None else scenes
    params = simulation.scene
    if scene_overrides:
        params = replace(params, **scene_overrides)
    simulated = []
    for index, scene_seed in enumerate(scene_seeds(seed, count)):
        scene_params = replace(params, name="{}-{:02d}".format(params.name, index))
        simulated.append(
            SimulatedScene(
                scene=simulate_scene(scene_params, taxonomy, scene_seed),
                segmentation=simulation.segmentation.reseeded(scene_seed),
                detection=simulation.detection.reseeded(scene_seed),
                seed=scene_seed,
                params=scene_params,
            )
        )
    logger.info(
        "Simulated %d `%s` scenes from seed %s", len(simulated), simulation.name, seed
    )
    return simulated


def write_simulation(
    simulated, directory, taxonomy, tile_size=TILE_SIZE, overlap=OVERLAP
):
    """Write each scene with its image and both backends' per-tile outputs.

    Layout per scene: ``<name>/scene.yaml``, ``image.pmap``,
    ``instances.pmap``, ``segmentation/tiles/*`` and ``detection/dets/*``.
    """
    directory = Path(directory)
    written = []
    for item in simulated:
        scene_dir = directory / item.scene.name
        write_scene(item.scene, scene_dir, image=render_image(item.scene, item.seed))
        segmentation, detection = synthetic_backends(
            item.scene, item.segmentation, item.detection, taxonomy
        )
        grid = make_grid(item.scene.width, item.scene.height, tile_size, overlap)
        write_backend_outputs(
            scene_dir / SEGMENTATION_DIR, grid, segmentation=segmentation
        )
        write_backend_outputs(scene_dir / DETECTION_DIR, grid, detection=detection)
        written.append(scene_dir)
    return written
