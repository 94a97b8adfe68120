# -*- coding: utf-8 -*-
"""Hand-built scenes and scripted backends."""

import numpy as np

from aircraft_fusion.backend import (
    DetectionBackend,
    SegmentationBackend,
    select_in_window,
)
from aircraft_fusion.geometry import Box, Detection
from aircraft_fusion.ingest import Footprint, GroundTruthObject, SceneManifest
from aircraft_fusion.raster import PredictionMap


def square(object_id, label, x, y, size):
    footprint = Footprint.from_mask(np.ones((size, size), dtype=bool), origin=(x, y))
    return GroundTruthObject(object_id, label, footprint)


def scene_of(objects, width=1024, height=1024, name="fixture"):
    return SceneManifest(name=name, width=width, height=height, objects=objects)


def box_of(obj, score=0.9, label=None):
    return Detection(obj.box, score, obj.label if label is None else label)


def painted(scene, value=0.9, extra=()):
    """Foreground raster with the scene's objects and `extra` boxes painted."""
    foreground = np.zeros((scene.height, scene.width), dtype=np.float32)
    for obj in scene.objects:
        obj.footprint.paint(foreground, value)
    for box in extra:
        foreground[int(box.y_min):int(box.y_max), int(box.x_min):int(box.x_max)] = value
    return foreground


class ScriptedSegmentation(SegmentationBackend):
    def __init__(self, foreground):
        self.prediction = PredictionMap.binary(foreground)
        self.windows = []

    def predict(self, image, window):
        self.windows.append(window)
        return self.prediction.crop(
            int(window.x_min), int(window.y_min), int(window.width), int(window.height)
        )


class ScriptedDetection(DetectionBackend):
    def __init__(self, detections):
        self.detections = list(detections)
        self.windows = []

    def detect(self, image, window):
        self.windows.append(window)
        return select_in_window(self.detections, window)


class FailingDetection(DetectionBackend):
    def detect(self, image, window):
        raise RuntimeError("model crashed")


def label_box(x_min, y_min, x_max, y_max, score, label):
    return Detection(Box(x_min, y_min, x_max, y_max), score, label)


def survey_scenes(taxonomy):
    """Thirty untiled 50 cm images covering 403 km2 with 689 aircraft."""
    label = taxonomy.label("F-16")
    scenes = []
    for index in range(30):
        count = 22 if index == 29 else 23
        objects = [
            square(i + 1, label, 20 + 40 * i, 20 + 30 * (index % 10), 10)
            for i in range(count)
        ]
        scenes.append(
            SceneManifest(
                name="survey-{:02d}".format(index),
                width=10000,
                height=5373 if index < 20 else 5374,
                resolution_cm=50.0,
                objects=objects,
            )
        )
    return scenes
