# -*- coding: utf-8 -*-

__version__ = "0.1.0"

from .evaluation import compare, evaluate, merge_boards  # noqa: F401, E402
from .fusion import (  # noqa: F401, E402
    OperatingMode,
    RecoveryParams,
    detection_only,
    run_pipeline,
    segmentation_only,
)
from .geometry import Box, Detection, nms  # noqa: F401, E402
from .ingest import load_manifest, make_grid, stitch  # noqa: F401, E402
from .taxonomy import default_taxonomy, load_taxonomy  # noqa: F401, E402
