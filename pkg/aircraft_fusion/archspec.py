# -*- coding: utf-8 -*-
"""Declarative descriptions of the segmentation and detection networks.

Nothing here holds weights: the descriptors are validated, their feature
shapes are propagated and their anchors are counted so that a trainer built
elsewhere can be checked against them.
"""
from collections import namedtuple
from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from .exceptions import BadArchSpec

CONVS_PER_IM_BLOCK = 2

TRAINING_METADATA = {
    "segmentation": {
        "loss": "weighted categorical cross-entropy (median frequency weights)",
        "optimizer": "adam",
        "learning_rate": 0.001,
        "schedule": "reduce on plateau of the validation loss",
    },
    "detection": {
        "loss": "focal (classification) + smooth L1 (regression)",
        "classification_weight": 1.5,
        "optimizer": "adam",
        "learning_rate": 0.0004,
        "nms_threshold": 0.35,
    },
}

Stage = namedtuple("Stage", ("name", "height", "width", "channels"))
Violation = namedtuple("Violation", ("field", "rule"))


@dataclass(frozen=True)
class UNetSpec:
    """U-Net with identity-mapping blocks and strided-conv downsampling.

    `encoder_partition` splits the encoder blocks over the
    ``downsample_count + 1`` resolutions; `decoder_partition` splits the
    decoder blocks over the ``downsample_count`` upsampled resolutions.
    Both default to an even split.
    """

    input_size: int = 512
    in_channels: int = 3
    base_filters: int = 64
    downsample_count: int = 2
    encoder_im_blocks: int = 36
    decoder_im_blocks: int = 8
    num_classes: int = 2
    encoder_partition: tuple = None
    decoder_partition: tuple = None

    def encoder_blocks(self):
        return self.encoder_partition or _even_split(
            self.encoder_im_blocks, self.downsample_count + 1
        )

    def decoder_blocks(self):
        return self.decoder_partition or _even_split(
            self.decoder_im_blocks, self.downsample_count
        )


@dataclass(frozen=True)
class RetinaSpec:
    """RetinaNet with one extra, finer pyramid level (stride 4)."""

    backbone_name: str = "ResNet101"
    pyramid_strides: tuple = (4, 8, 16, 32, 64, 128)
    anchors_per_location: int = 9
    num_classes: int = 61
    nms_threshold: float = 0.35


def _even_split(total, parts):
    if parts < 1:
        return ()
    base, extra = divmod(total, parts)
    return tuple(base + 1 if i < extra else base for i in range(parts))


def _is_power_of_two(value):
    return isinstance(value, int) and value > 0 and value & (value - 1) == 0


def _validate_unet(spec):
    violations = []
    if spec.downsample_count < 1:
        violations.append(Violation("downsample_count", "must be at least 1"))
    elif spec.input_size % (2 ** spec.downsample_count):
        violations.append(
            Violation(
                "input_size",
                "must be divisible by 2^{}".format(spec.downsample_count),
            )
        )
    for name in ("input_size", "in_channels", "base_filters", "num_classes"):
        if getattr(spec, name) < 1:
            violations.append(Violation(name, "must be positive"))
    for name in ("encoder_im_blocks", "decoder_im_blocks"):
        if getattr(spec, name) < 1:
            violations.append(Violation(name, "must be positive"))

    if spec.downsample_count >= 1:
        checks = (
            ("encoder_partition", spec.encoder_blocks(), spec.encoder_im_blocks,
             spec.downsample_count + 1),
            ("decoder_partition", spec.decoder_blocks(), spec.decoder_im_blocks,
             spec.downsample_count),
        )
        for name, partition, total, stages in checks:
            if len(partition) != stages:
                violations.append(
                    Violation(name, "needs one entry per stage ({})".format(stages))
                )
            elif sum(partition) != total:
                violations.append(
                    Violation(name, "must sum to {}".format(total))
                )
            elif any(count < 1 for count in partition):
                violations.append(Violation(name, "every stage needs a block"))
    return violations


def _validate_retina(spec):
    violations = []
    strides = tuple(spec.pyramid_strides)
    if not strides:
        violations.append(Violation("pyramid_strides", "needs at least one level"))
    if any(not _is_power_of_two(stride) for stride in strides):
        violations.append(Violation("pyramid_strides", "stride not power of two"))
    if any(a >= b for a, b in zip(strides, strides[1:])):
        violations.append(
            Violation("pyramid_strides", "strides must be strictly increasing")
        )
    if spec.anchors_per_location < 1:
        violations.append(Violation("anchors_per_location", "must be at least 1"))
    if spec.num_classes < 1:
        violations.append(Violation("num_classes", "must be positive"))
    if not 0.0 <= spec.nms_threshold <= 1.0:
        violations.append(Violation("nms_threshold", "must lie in [0, 1]"))
    return violations


def validate(spec):
    """List every rule `spec` breaks; empty when it is sound."""
    if isinstance(spec, UNetSpec):
        return _validate_unet(spec)
    if isinstance(spec, RetinaSpec):
        return _validate_retina(spec)
    raise BadArchSpec("Cannot validate `{}`.".format(type(spec).__name__))


def _raise_on_violations(spec):
    violations = validate(spec)
    if violations:
        raise BadArchSpec(
            "; ".join("`{}` {}".format(v.field, v.rule) for v in violations)
        )


def unet_layer_counts(spec):
    """Convolution layers in the encoder and decoder IM blocks."""
    return (
        spec.encoder_im_blocks * CONVS_PER_IM_BLOCK,
        spec.decoder_im_blocks * CONVS_PER_IM_BLOCK,
    )


def propagate_unet(spec):
    """Feature shapes from the input image to the per-class output map.

    Each downsampling is a stride-2 convolution that halves the resolution
    and doubles the filters; each upsampling restores the resolution and is
    followed by the concatenation of the matching encoder features.

    :returns:
        A list of :class:`Stage` tuples.

    :raise BadArchSpec:
        If the descriptor breaks an invariant, such as an input size not divisible
        by ``2 ** downsample_count``.
    """
    _raise_on_violations(spec)

    size = spec.input_size
    filters = spec.base_filters
    trace = [Stage("input", size, size, spec.in_channels)]
    trace.append(Stage("stem", size, size, filters))

    skips = []
    encoder = spec.encoder_blocks()
    for level, blocks in enumerate(encoder):
        if level > 0:
            size //= 2
            filters *= 2
            trace.append(Stage("down_{}".format(level), size, size, filters))
        name = "bottleneck" if level == len(encoder) - 1 else "encoder_{}".format(level)
        trace.append(Stage("{}[{}]".format(name, blocks), size, size, filters))
        skips.append(filters)

    for level, blocks in enumerate(spec.decoder_blocks(), start=1):
        size *= 2
        filters //= 2
        skip = skips[-(level + 1)]
        trace.append(Stage("up_{}".format(level), size, size, filters))
        trace.append(Stage("concat_{}".format(level), size, size, filters + skip))
        trace.append(
            Stage("decoder_{}[{}]".format(level, blocks), size, size, filters)
        )

    trace.append(Stage("output", size, size, spec.num_classes))
    return trace


def anchor_count_per_level(spec, image_size):
    _raise_on_violations(spec)
    largest = max(spec.pyramid_strides)
    if image_size % largest:
        raise BadArchSpec(
            "Image size `{}` is not divisible by stride {}.".format(
                image_size, largest
            )
        )
    return {
        stride: (image_size // stride) ** 2 * spec.anchors_per_location
        for stride in spec.pyramid_strides
    }


def anchor_count(spec, image_size):
    """Total anchors over all pyramid levels for a square image."""
    return sum(anchor_count_per_level(spec, image_size).values())


def _build(cls, section, values):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise BadArchSpec(
            "Unknown key `{}` in section `{}`.".format(unknown[0], section)
        )
    values = {
        key: tuple(value) if isinstance(value, list) else value
        for key, value in values.items()
    }
    return cls(**values)


def load_arch_spec(path):
    """Read ``unet:`` and ``retina:`` sections from a YAML spec file.

    Missing sections fall back to the defaults.
    """
    document = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(document, dict):
        raise BadArchSpec("Spec file `{}` must hold sections.".format(path))
    unknown = sorted(set(document) - {"unet", "retina"})
    if unknown:
        raise BadArchSpec("Unknown section `{}`.".format(unknown[0]))
    return (
        _build(UNetSpec, "unet", document.get("unet") or {}),
        _build(RetinaSpec, "retina", document.get("retina") or {}),
    )
