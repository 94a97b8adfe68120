# -*- coding: utf-8 -*-
"""Run configuration.

Values come from the dataclass defaults, then a YAML file (given on the
command line, or through ``AIRCRAFT_FUSION_CONFIG``), then explicit
command-line flags.
"""
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .exceptions import BadConfig
from .fusion import MODE_PRESETS, OperatingMode, RecoveryParams
from .geometry import CRITERIA, DEFAULT_NMS_THRESHOLD, OVER_TARGET
from .ingest import BLENDS, MEAN, OVERLAP, TILE_SIZE

logger = logging.getLogger(__name__)

CONFIG_ENV = "AIRCRAFT_FUSION_CONFIG"
LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"
NOISE_SECTIONS = ("segmentation", "detection")


def _option(default, help):
    return field(default=default, metadata={"help": help})


@dataclass(frozen=True)
class Config:
    taxonomy: str = _option(None, "Taxonomy document; the bundled tree if unset.")
    mode: str = _option("balanced", "Operating mode preset.")
    seg_threshold: float = _option(None, "Segmentation threshold; preset if unset.")
    seg_min_size: int = _option(None, "Minimum region size in pixels; preset if unset.")
    det_threshold: float = _option(None, "Detection score threshold; preset if unset.")
    det_min_size: int = _option(None, "Minimum box area in pixels; preset if unset.")
    recovery: bool = _option(None, "Recover residual regions; preset if unset.")
    tile_size: int = _option(TILE_SIZE, "Tile side in pixels.")
    overlap: int = _option(OVERLAP, "Tile overlap in pixels.")
    max_iter: int = _option(3, "Maximum detection iterations.")
    nms_threshold: float = _option(DEFAULT_NMS_THRESHOLD, "NMS IoU threshold.")
    size_band: tuple = _option((0.5, 2.0), "Recovery area band, times the median.")
    max_distance: float = _option(200.0, "Recovery distance to a detection, pixels.")
    criterion: str = _option(OVER_TARGET, "Matching overlap criterion.")
    blend: str = _option(MEAN, "Stitching blend of overlapping tiles.")
    seed: int = _option(0, "Seed of every random draw.")
    seg_backend: str = _option(
        None, "Segmentation backend directory; `<scene>/segmentation` if unset."
    )
    det_backend: str = _option(
        None, "Detection backend directory; `<scene>/detection` if unset."
    )
    scenes: str = _option(None, "Directory holding one sub-directory per scene.")
    output: str = _option(None, "Output directory.")
    catalog: str = _option(
        None, "SQLAlchemy URI of the results catalog; nothing stored if unset."
    )
    noise: dict = _option(
        None, "Synthetic backend settings under `segmentation` and `detection`."
    )

    def __post_init__(self):
        if self.mode not in MODE_PRESETS:
            raise BadConfig(
                "Mode `{}` not valid, use one of {}.".format(
                    self.mode, sorted(MODE_PRESETS)
                )
            )
        if self.criterion not in CRITERIA:
            raise BadConfig("Criterion `{}` not valid.".format(self.criterion))
        if self.blend not in BLENDS:
            raise BadConfig("Blend `{}` not valid.".format(self.blend))
        if self.max_iter < 1:
            raise BadConfig("`max_iter` must be at least 1: {}".format(self.max_iter))
        if len(tuple(self.size_band)) != 2:
            raise BadConfig("`size_band` needs a min and a max.")
        if self.noise is not None and not _valid_noise(self.noise):
            raise BadConfig(
                "`noise` takes `segmentation` and `detection` mappings."
            )

    def override(self, **flags):
        """Copy with the given values; `None` flags are ignored."""
        values = {key: value for key, value in flags.items() if value is not None}
        unknown = sorted(set(values) - {f.name for f in fields(self)})
        if unknown:
            raise BadConfig("Unknown config key `{}`.".format(unknown[0]))
        return replace(self, **values)

    def operating_mode(self):
        return OperatingMode.preset(
            self.mode,
            seg_threshold=self.seg_threshold,
            seg_min_size=self.seg_min_size,
            det_threshold=self.det_threshold,
            det_min_size=self.det_min_size,
            enable_recovery=self.recovery,
        )

    def recovery_params(self):
        return RecoveryParams(
            size_band=tuple(self.size_band), max_distance=self.max_distance
        )

    def as_dict(self):
        return asdict(self)


def _valid_noise(noise):
    return (
        isinstance(noise, dict)
        and set(noise) <= set(NOISE_SECTIONS)
        and all(isinstance(values, dict) for values in noise.values())
    )


def help_for(name):
    for f in fields(Config):
        if f.name == name:
            text = f.metadata.get("help", "")
            if f.default is not None:
                text = "{} (default: {})".format(text, f.default)
            return text
    raise KeyError(name)


def load_config(path):
    """Read a YAML config file.

    :raise BadConfig:
        If the file cannot be read, is not a mapping or holds an unknown key.
    """
    path = Path(path)
    try:
        document = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as error:
        raise BadConfig("Cannot read config `{}`: {}".format(path, error))
    except yaml.YAMLError as error:
        raise BadConfig("Config `{}` is not valid YAML: {}".format(path, error))
    document = document or {}
    if not isinstance(document, dict):
        raise BadConfig("Config `{}` must be a mapping.".format(path))

    if isinstance(document.get("size_band"), list):
        document["size_band"] = tuple(document["size_band"])
    logger.info("Loaded config %s", path)
    return Config().override(**document)


def config_from_env(environ=None):
    """Config from the file named by ``AIRCRAFT_FUSION_CONFIG``, else defaults."""
    environ = os.environ if environ is None else environ
    path = environ.get(CONFIG_ENV)
    if path:
        return load_config(path)
    return Config()


def configure_logging(verbosity):
    """WARNING by default, INFO with one ``-v``, DEBUG with two."""
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger(__package__).setLevel(level)
    return level
