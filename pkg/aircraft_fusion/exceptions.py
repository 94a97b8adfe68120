# -*- coding: utf-8 -*-


class BadTaxonomyFormat(Exception):
    pass


class LabelNotFound(Exception):
    pass


class BadLevel(Exception):
    pass


class BadBox(Exception):
    pass


class BadRaster(Exception):
    pass


class BadGrid(Exception):
    pass


class BadStitch(Exception):
    pass


class BadManifest(Exception):
    pass


class BadArchSpec(Exception):
    pass


class BadLossInput(Exception):
    pass


class BadDetectionFormat(Exception):
    pass


class MissingPrediction(Exception):
    pass


class BadConfig(Exception):
    pass


class BadMode(Exception):
    pass


class BadCatalogSpec(Exception):
    pass


class FieldNotFound(Exception):
    pass


class InvalidPage(Exception):
    pass


class StageError(Exception):
    """An error raised inside one pipeline stage.

    The message names the stage so the CLI can report where a run failed.
    """

    def __init__(self, stage, cause, detail=None):
        self.stage = stage
        self.cause = cause
        self.detail = detail
        where = "`{}`".format(stage)
        if detail:
            where = "{} ({})".format(where, detail)
        super().__init__("Stage {} failed: {}".format(where, cause))
