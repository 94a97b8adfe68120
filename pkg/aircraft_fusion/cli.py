# -*- coding: utf-8 -*-
"""The ``aircraft-fusion`` command."""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .archspec import (
    TRAINING_METADATA,
    RetinaSpec,
    UNetSpec,
    anchor_count_per_level,
    load_arch_spec,
    propagate_unet,
    unet_layer_counts,
    validate,
)
from .backend import (
    file_backend_load,
    parse_tile_key,
    read_detections,
    write_detections,
)
from .catalog import create_catalog, load_boards, record_boards
from .config import Config, config_from_env, configure_logging, help_for, load_config
from .evaluation import (
    board_document,
    board_from_document,
    compare,
    evaluate,
    format_report,
    format_table,
    merge_boards,
    report_document,
)
from .exceptions import (
    BadArchSpec,
    BadBox,
    BadCatalogSpec,
    BadConfig,
    BadDetectionFormat,
    BadGrid,
    BadLevel,
    BadManifest,
    BadMode,
    BadRaster,
    BadStitch,
    BadTaxonomyFormat,
    FieldNotFound,
    InvalidPage,
    LabelNotFound,
    MissingPrediction,
    StageError,
)
from .fusion import detection_only, run_pipeline, segmentation_only, stage
from .geometry import CRITERIA
from .ingest import BLENDS, MANIFEST_NAME, load_manifest, make_grid, stitch
from .raster import PredictionMap, read_pmap, read_prediction_map, write_pmap
from .simulate import (
    DETECTION_DIR,
    PRESETS,
    SEGMENTATION_DIR,
    preset,
    simulate_dataset,
    with_noise,
    write_simulation,
)
from .taxonomy import default_taxonomy, load_taxonomy_file

logger = logging.getLogger(__name__)

USER_ERRORS = (
    BadArchSpec,
    BadBox,
    BadCatalogSpec,
    BadConfig,
    BadDetectionFormat,
    BadGrid,
    BadLevel,
    BadManifest,
    BadMode,
    BadRaster,
    BadStitch,
    BadTaxonomyFormat,
    FieldNotFound,
    InvalidPage,
    LabelNotFound,
    MissingPrediction,
    StageError,
)

SYSTEMS = ("segmentation", "detection", "fused")
FUSED_NAME = "fused.txt"
SEGMENTATION_NAME = "segmentation.txt"
DETECTION_NAME = "detection.txt"
RESIDUAL_NAME = "residual.pmap"
TRACE_NAME = "trace.json"
REPORT_TEXT = "report.txt"
REPORT_JSON = "report.json"


def _dump_json(path, document):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(document, indent=2, sort_keys=True) + "\n"
    path.write_text(text, encoding="utf-8")
    logger.info("Wrote %s", path)


class HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Shows defaults, except unset ones and those the help already names."""

    def _get_help_string(self, action):
        text = action.help or ""
        if action.default is None or "(default:" in text:
            return text
        return super()._get_help_string(action)


def _on_off(value):
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError(
            "expected `on` or `off`, got `{}`".format(value)
        )
    return value == "on"


# flag, backend, setting, type, help
NOISE_FLAGS = (
    ("--seg-miss-rate", "segmentation", "miss_rate", float, "Segmentation miss rate"),
    (
        "--seg-fp-rate",
        "segmentation",
        "false_positive_rate",
        float,
        "Segmentation false positives per km2",
    ),
    ("--det-miss-rate", "detection", "miss_rate", float, "Detection miss rate"),
    (
        "--det-fp-rate",
        "detection",
        "false_positive_rate",
        float,
        "Detection false positives per km2",
    ),
    (
        "--label-confusion",
        "detection",
        "label_confusion_rate",
        float,
        "Share of detections with a wrong type",
    ),
    (
        "--jitter",
        "detection",
        "localization_jitter",
        int,
        "Largest shift of a detection box side, in pixels",
    ),
    (
        "--disjoint",
        "detection",
        "disjoint",
        _on_off,
        "Draw detection errors apart from segmentation ones, on or off",
    ),
)


def _config(args):
    """Defaults, then the config file, then the flags given on the command line."""
    config = load_config(args.config) if args.config else config_from_env()
    flags = {
        name: getattr(args, name, None)
        for name in Config.__dataclass_fields__
        if name != "size_band"
    }
    return config.override(**flags)


def _taxonomy(config):
    if config.taxonomy:
        return load_taxonomy_file(config.taxonomy)
    return default_taxonomy()


def _flag(name):
    return "--" + name.replace("_", "-")


def _add_pipeline_options(parser):
    parser.add_argument("--mode", help=help_for("mode"))
    for name in ("seg_threshold", "det_threshold"):
        parser.add_argument(_flag(name), type=float, help=help_for(name))
    for name in ("seg_min_size", "det_min_size", "max_iter", "tile_size", "overlap"):
        parser.add_argument(_flag(name), type=int, help=help_for(name))
    parser.add_argument("--recovery", type=_on_off, help=help_for("recovery"))
    parser.add_argument("--max-distance", type=float, help=help_for("max_distance"))
    parser.add_argument("--nms-threshold", type=float, help=help_for("nms_threshold"))
    parser.add_argument("--blend", choices=BLENDS, help=help_for("blend"))
    parser.add_argument("--criterion", choices=CRITERIA, help=help_for("criterion"))
    parser.add_argument("--taxonomy", help=help_for("taxonomy"))


def cmd_tile(args):
    config = _config(args)
    image = read_pmap(args.image)
    height, width = image.shape[:2]
    grid = make_grid(width, height, config.tile_size, config.overlap)
    out = Path(args.out)
    for x, y in grid.origins:
        tile = image[y:y + grid.tile_size, x:x + grid.tile_size]
        write_pmap(out / "{}_{}.pmap".format(x, y), tile)
    print("{} tiles written to {}".format(len(grid), out))
    return 0


def cmd_stitch(args):
    config = _config(args)
    tiles = [
        (parse_tile_key(path.stem), read_prediction_map(path))
        for path in sorted(Path(args.directory).glob("*.pmap"))
    ]
    prediction = stitch(tiles, args.width, args.height, config.blend)
    write_pmap(args.out, prediction.values)
    print("Stitched {} tiles into {}".format(len(tiles), args.out))
    return 0


def cmd_arch_check(args):
    if args.spec:
        unet, retina = load_arch_spec(args.spec)
    else:
        unet, retina = UNetSpec(), RetinaSpec()

    violations = validate(unet) + validate(retina)
    if violations:
        for violation in violations:
            print("violation: `{}` {}".format(violation.field, violation.rule))
        return 1

    for item in propagate_unet(unet):
        print("{:<20} {:>5} x {:<5} {:>5}".format(*item))
    encoder, decoder = unet_layer_counts(unet)
    print("encoder conv layers: {}".format(encoder))
    print("decoder conv layers: {}".format(decoder))
    per_level = anchor_count_per_level(retina, args.image_size)
    for stride, count in per_level.items():
        print("anchors at stride {:>3}: {}".format(stride, count))
    print("anchors total: {}".format(sum(per_level.values())))
    print(json.dumps(TRAINING_METADATA, indent=2, sort_keys=True))
    return 0


def _noise(config, args):
    """Backend settings from the config `noise` section, then the flags."""
    noise = {
        section: dict(values) for section, values in (config.noise or {}).items()
    }
    for flag, section, key, _, _ in NOISE_FLAGS:
        value = getattr(args, flag[2:].replace("-", "_"))
        if value is not None:
            noise.setdefault(section, {})[key] = value
    return noise


def cmd_simulate(args):
    taxonomy = default_taxonomy()
    config = _config(args)
    overrides = {
        key: value
        for key, value in (
            ("aircraft", args.aircraft),
            ("width", args.width),
            ("height", args.height),
        )
        if value is not None
    }
    simulation = with_noise(preset(args.preset), **_noise(config, args))
    simulated = simulate_dataset(
        simulation, taxonomy, args.seed, scenes=args.scene_count, **overrides
    )
    written = write_simulation(
        simulated, args.out, taxonomy, config.tile_size, config.overlap
    )
    for directory in written:
        print(directory)
    return 0


def _backend_dirs(config, scene_dir, scene_name=None):
    """Backend directories of a scene; configured roots hold one entry per scene."""
    dirs = []
    for root, default in (
        (config.seg_backend, SEGMENTATION_DIR),
        (config.det_backend, DETECTION_DIR),
    ):
        if not root:
            dirs.append(Path(scene_dir) / default)
        elif scene_name is None:
            dirs.append(Path(root))
        else:
            dirs.append(Path(root) / scene_name)
    return dirs


def _load_backends(config, taxonomy, scene_dir, scene_name=None):
    seg_dir, det_dir = _backend_dirs(config, scene_dir, scene_name)
    with stage("load", detail="backends of `{}`".format(scene_dir)):
        seg = file_backend_load(seg_dir, taxonomy, config.tile_size)
        det = file_backend_load(det_dir, taxonomy, config.tile_size)
    return seg, det


def _load_scene(path, taxonomy):
    with stage("load", detail="scene `{}`".format(path)):
        scene = load_manifest(path, taxonomy)
        image = scene.load_image() if scene.image_path is not None else None
    return scene, image


def _run_systems(config, scene, image, taxonomy, seg, det):
    """Fused, segmentation-only and detection-only detections of one scene."""
    mode = config.operating_mode()
    size = (scene.width, scene.height)
    result = run_pipeline(
        image,
        seg,
        det,
        mode,
        recovery=config.recovery_params(),
        taxonomy=taxonomy,
        size=size,
        tile_size=config.tile_size,
        overlap=config.overlap,
        blend=config.blend,
        max_iter=config.max_iter,
        nms_threshold=config.nms_threshold,
    )
    segmentation = segmentation_only(
        image,
        seg,
        mode,
        taxonomy,
        size=size,
        tile_size=config.tile_size,
        overlap=config.overlap,
        blend=config.blend,
    )
    detection = detection_only(
        image,
        det,
        mode,
        size=size,
        tile_size=config.tile_size,
        overlap=config.overlap,
        nms_threshold=config.nms_threshold,
    )
    return result, {
        "segmentation": segmentation,
        "detection": detection,
        "fused": result.detections,
    }


def _write_run(out, result, systems):
    out = Path(out)
    write_detections(out / FUSED_NAME, systems["fused"])
    write_detections(out / SEGMENTATION_NAME, systems["segmentation"])
    write_detections(out / DETECTION_NAME, systems["detection"])
    write_pmap(out / RESIDUAL_NAME, result.residual_mask.bits.astype(np.float32))
    _dump_json(out / TRACE_NAME, result.trace.as_dict())


def cmd_run(args):
    config = _config(args)
    taxonomy = _taxonomy(config)
    scene, image = _load_scene(args.scene, taxonomy)
    scene_dir = Path(args.scene)
    if not scene_dir.is_dir():
        scene_dir = scene_dir.parent
    seg, det = _load_backends(config, taxonomy, scene_dir)
    result, systems = _run_systems(config, scene, image, taxonomy, seg, det)
    _write_run(args.out, result, systems)
    print(
        "{} detections ({} recovered) written to {}".format(
            len(result.detections), len(result.trace.recovered), args.out
        )
    )
    return 0


def _record(config, name, boards):
    if not config.catalog:
        return
    with stage("record", detail=config.catalog):
        Session = create_catalog(config.catalog)
        session = Session()
        try:
            record_boards(
                session, name, config.mode, config.seed, config.criterion, boards
            )
        finally:
            session.close()


def cmd_evaluate(args):
    config = _config(args)
    taxonomy = _taxonomy(config)
    scene, _ = _load_scene(args.scene, taxonomy)
    with stage("evaluate", detail=args.detections):
        detections = read_detections(args.detections, taxonomy)
        board = evaluate(scene.objects, detections, taxonomy, config.criterion)
    name = args.name or Path(args.detections).stem
    print(format_table([(name, board)], args.level), end="")
    if args.out:
        _dump_json(args.out, board_document(name, board))
    _record(config, name, [(name, scene.name, board)])
    return 0


def _parse_report(value):
    name, sep, path = value.partition("=")
    if not sep or not name or not path:
        raise argparse.ArgumentTypeError("expected NAME=FILE, got `{}`".format(value))
    return name, path


def cmd_compare(args):
    if not args.report and not args.catalog:
        raise BadConfig("Give `--report NAME=FILE` at least twice, or `--catalog`.")
    with stage("compare"):
        if args.report:
            boards = []
            for name, path in args.report:
                document = json.loads(Path(path).read_text(encoding="utf-8"))
                boards.append((name, board_from_document(document)))
        else:
            Session = create_catalog(args.catalog)
            session = Session()
            try:
                boards = load_boards(
                    session,
                    json.loads(args.filter) if args.filter else None,
                    json.loads(args.sort) if args.sort else None,
                    page_number=args.page,
                    page_size=args.page_size,
                )
            finally:
                session.close()
        comparison = compare(boards)
    print(format_report(comparison, args.level), end="")
    if args.out:
        _dump_json(args.out, report_document(comparison))
    return 0


def _scene_dirs(config):
    if not config.scenes:
        raise BadConfig("No scene directory: set `scenes` or pass `--scenes`.")
    root = Path(config.scenes)
    if (root / MANIFEST_NAME).is_file():
        return [root]
    directories = sorted(path.parent for path in root.glob("*/" + MANIFEST_NAME))
    if not directories:
        raise BadConfig("No scene found under `{}`.".format(root))
    return directories


def cmd_end_to_end(args):
    config = _config(args)
    if not config.output:
        raise BadConfig("No output directory: set `output` or pass `--out`.")
    taxonomy = _taxonomy(config)
    out = Path(config.output)

    per_system = {system: [] for system in SYSTEMS}
    records = []
    for scene_dir in _scene_dirs(config):
        scene, image = _load_scene(scene_dir, taxonomy)
        seg, det = _load_backends(config, taxonomy, scene_dir, scene.name)
        result, systems = _run_systems(config, scene, image, taxonomy, seg, det)
        _write_run(out / scene.name, result, systems)
        with stage("evaluate", detail="scene `{}`".format(scene.name)):
            for system in SYSTEMS:
                board = evaluate(
                    scene.objects, systems[system], taxonomy, config.criterion
                )
                per_system[system].append(board)
                records.append((system, scene.name, board))

    merged = [(system, merge_boards(per_system[system])) for system in SYSTEMS]
    with stage("compare"):
        comparison = compare(merged)
    report = format_report(comparison)
    (out / REPORT_TEXT).write_text(report, encoding="utf-8")
    _dump_json(out / REPORT_JSON, report_document(comparison))
    _record(
        config,
        args.name or out.name,
        records + [(system, None, board) for system, board in merged],
    )
    print(report, end="")
    return 0


def build_parser():
    formatter = HelpFormatter
    parser = argparse.ArgumentParser(
        prog="aircraft-fusion",
        description="Aircraft recognition by fused segmentation and detection.",
        formatter_class=formatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="INFO with -v, DEBUG with -vv.",
    )
    parser.add_argument(
        "--config",
        help="YAML config file; defaults to $AIRCRAFT_FUSION_CONFIG when set.",
    )
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    sub = commands.add_parser(
        "tile", help="Cut an image into tiles.", formatter_class=formatter
    )
    sub.add_argument("image", help="PMAP image.")
    sub.add_argument("--out", required=True, help="Directory of the tiles.")
    sub.add_argument("--tile-size", type=int, help=help_for("tile_size"))
    sub.add_argument("--overlap", type=int, help=help_for("overlap"))
    sub.set_defaults(handler=cmd_tile)

    sub = commands.add_parser(
        "stitch", help="Blend per-tile prediction maps.", formatter_class=formatter
    )
    sub.add_argument("directory", help="Directory of `<x>_<y>.pmap` tiles.")
    sub.add_argument("--width", type=int, required=True, help="Image width.")
    sub.add_argument("--height", type=int, required=True, help="Image height.")
    sub.add_argument("--out", required=True, help="Stitched PMAP file.")
    sub.add_argument("--blend", choices=BLENDS, help=help_for("blend"))
    sub.set_defaults(handler=cmd_stitch)

    sub = commands.add_parser(
        "arch-check",
        help="Validate the network descriptors.",
        formatter_class=formatter,
    )
    sub.add_argument(
        "--spec",
        help="YAML file with `unet` and `retina` sections; the built-in if unset.",
    )
    sub.add_argument("--image-size", type=int, default=512, help="Square input side.")
    sub.set_defaults(handler=cmd_arch_check)

    sub = commands.add_parser(
        "simulate",
        help="Write synthetic scenes with their backend outputs.",
        formatter_class=formatter,
    )
    sub.add_argument("--out", required=True, help="Output directory.")
    sub.add_argument(
        "--preset", choices=sorted(PRESETS), default="table2", help="Noise preset."
    )
    sub.add_argument(
        "--scenes",
        dest="scene_count",
        type=int,
        help="Scene count; the preset's if unset.",
    )
    sub.add_argument(
        "--aircraft", type=int, help="Aircraft per scene; the preset's if unset."
    )
    sub.add_argument("--width", type=int, help="Scene width; the preset's if unset.")
    sub.add_argument(
        "--height", type=int, help="Scene height; the preset's if unset."
    )
    for flag, _, _, kind, text in NOISE_FLAGS:
        sub.add_argument(flag, type=kind, help=text + "; the preset's if unset.")
    sub.add_argument("--seed", type=int, default=0, help=help_for("seed"))
    sub.add_argument("--tile-size", type=int, help=help_for("tile_size"))
    sub.add_argument("--overlap", type=int, help=help_for("overlap"))
    sub.set_defaults(handler=cmd_simulate)

    sub = commands.add_parser(
        "run", help="Run the fusion pipeline on one scene.", formatter_class=formatter
    )
    sub.add_argument("--scene", required=True, help="Scene manifest or its directory.")
    sub.add_argument("--seg-backend", help=help_for("seg_backend"))
    sub.add_argument("--det-backend", help=help_for("det_backend"))
    sub.add_argument("--out", required=True, help="Output directory.")
    _add_pipeline_options(sub)
    sub.set_defaults(handler=cmd_run)

    sub = commands.add_parser(
        "evaluate", help="Score a detection list.", formatter_class=formatter
    )
    sub.add_argument("--scene", required=True, help="Scene manifest or its directory.")
    sub.add_argument("--detections", required=True, help="Detection list file.")
    sub.add_argument("--criterion", choices=CRITERIA, help=help_for("criterion"))
    sub.add_argument(
        "--level", type=int, choices=(2, 3), help="Identification level; both if unset."
    )
    sub.add_argument("--taxonomy", help=help_for("taxonomy"))
    sub.add_argument("--out", help="JSON report file; none written if unset.")
    sub.add_argument("--catalog", help=help_for("catalog"))
    sub.add_argument("--name", help="Board name; the detection file stem if unset.")
    sub.set_defaults(handler=cmd_evaluate)

    sub = commands.add_parser(
        "compare", help="Compare evaluated systems.", formatter_class=formatter
    )
    sub.add_argument(
        "--report", type=_parse_report, action="append", help="NAME=FILE board report."
    )
    sub.add_argument("--catalog", help=help_for("catalog"))
    sub.add_argument("--filter", help="JSON filter spec; every stored board if unset.")
    sub.add_argument("--sort", help="JSON sort spec; stored order if unset.")
    sub.add_argument("--page", type=int, help="Page of stored boards, from 1.")
    sub.add_argument("--page-size", type=int, help="Boards per page; all if unset.")
    sub.add_argument(
        "--level", type=int, choices=(2, 3), help="Identification level; both if unset."
    )
    sub.add_argument("--out", help="JSON report file; none written if unset.")
    sub.set_defaults(handler=cmd_compare)

    sub = commands.add_parser(
        "end-to-end",
        help="Run, evaluate and compare the three systems on every scene.",
        formatter_class=formatter,
    )
    sub.add_argument("--scenes", help=help_for("scenes"))
    sub.add_argument("--out", dest="output", help=help_for("output"))
    sub.add_argument("--seg-backend", help=help_for("seg_backend"))
    sub.add_argument("--det-backend", help=help_for("det_backend"))
    sub.add_argument("--catalog", help=help_for("catalog"))
    sub.add_argument("--name", help="Catalog run name; the output name if unset.")
    sub.add_argument("--seed", type=int, help=help_for("seed"))
    _add_pipeline_options(sub)
    sub.set_defaults(handler=cmd_end_to_end)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.handler(args)
    except USER_ERRORS as error:
        print("aircraft-fusion: error: {}".format(error), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
