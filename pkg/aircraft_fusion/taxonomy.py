# -*- coding: utf-8 -*-
"""Three-level aircraft label hierarchy.

A taxonomy document is line oriented UTF-8 text::

    # comments and blank lines are ignored
    level1: aircraft
    level2: combat
    level3: F-16 -> combat

``level1`` is optional and defaults to ``aircraft``. Records may appear in
any order; level-3 parents are resolved once the whole document is read.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType

from .exceptions import BadLevel, BadTaxonomyFormat, LabelNotFound

logger = logging.getLogger(__name__)

DEFAULT_ROOT = "aircraft"
STRICT_COUNTS = (1, 6, 61)
DEFAULT_TAXONOMY_PATH = Path(__file__).parent / "data" / "taxonomy.txt"

LEVELS = (1, 2, 3)


@dataclass(frozen=True)
class Label:
    name: str
    level: int

    def __str__(self):
        return self.name


class Taxonomy(object):
    """Immutable label tree: one root, level-2 functions, level-3 types."""

    def __init__(self, level1, level2, level3, parent_of):
        self._level1 = level1
        self._level2 = tuple(level2)
        self._level3 = tuple(level3)
        self._parent_of = MappingProxyType(dict(parent_of))
        self._levels = {level1: 1}
        self._levels.update((name, 2) for name in self._level2)
        self._levels.update((name, 3) for name in self._level3)

    @property
    def level1(self):
        return self._level1

    @property
    def level2(self):
        return self._level2

    @property
    def level3(self):
        return self._level3

    @property
    def parent_of(self):
        return self._parent_of

    @property
    def root(self):
        return Label(self._level1, 1)

    def __contains__(self, name):
        return name in self._levels

    def __eq__(self, other):
        return (
            isinstance(other, Taxonomy)
            and self._level1 == other._level1
            and self._level2 == other._level2
            and self._level3 == other._level3
            and dict(self._parent_of) == dict(other._parent_of)
        )

    def __hash__(self):
        return hash((self._level1, self._level2, self._level3))

    def __repr__(self):
        return "Taxonomy({}: {}/{}/{})".format(
            self._level1, 1, len(self._level2), len(self._level3)
        )

    def label(self, name):
        """Return the :class:`Label` called `name`, at whatever level it is."""
        try:
            return Label(name, self._levels[name])
        except KeyError:
            raise LabelNotFound("Label `{}` not found in taxonomy.".format(name))

    def labels(self, level):
        if level == 1:
            return (self.root,)
        if level == 2:
            return tuple(Label(name, 2) for name in self._level2)
        if level == 3:
            return tuple(Label(name, 3) for name in self._level3)
        raise BadLevel("Level `{}` not valid.".format(level))

    def children(self, name):
        label = self.label(name)
        if label.level == 1:
            return self.labels(2)
        if label.level == 2:
            return tuple(
                Label(child, 3)
                for child in self._level3
                if self._parent_of[child] == name
            )
        return ()

    def validate(self, label):
        if self._levels.get(label.name) != label.level:
            raise LabelNotFound(
                "Label `{}` not found at level {}.".format(label.name, label.level)
            )
        return label

    def ancestor(self, label, target_level):
        """Walk up the tree from `label` to `target_level`.

        :param label:
            A :class:`Label` (or a label name) known to this taxonomy.

        :param target_level:
            1, 2 or 3, not deeper than the level of `label`.

        :returns:
            The unique ancestor at `target_level`; `label` itself when the
            levels are equal.

        :raise BadLevel:
            If `target_level` is deeper than `label`.
        """
        if isinstance(label, str):
            label = self.label(label)
        self.validate(label)

        if target_level not in LEVELS:
            raise BadLevel("Level `{}` not valid.".format(target_level))
        if target_level > label.level:
            raise BadLevel(
                "Cannot go down from level {} to level {}.".format(
                    label.level, target_level
                )
            )

        current = label
        while current.level > target_level:
            if current.level == 3:
                current = Label(self._parent_of[current.name], 2)
            else:
                current = self.root
        return current


def _parse_record(line, number):
    key, sep, value = line.partition(":")
    if not sep:
        raise BadTaxonomyFormat(
            "Line {}: `{}` is not a `level: name` record.".format(number, line)
        )
    key = key.strip()
    value = value.strip()
    if key not in ("level1", "level2", "level3"):
        raise BadTaxonomyFormat("Line {}: unknown record `{}`.".format(number, key))
    if key == "level3":
        name, arrow, parent = value.partition("->")
        if not arrow or not name.strip() or not parent.strip():
            raise BadTaxonomyFormat(
                "Line {}: level-3 record `{}` needs `name -> parent`.".format(
                    number, value
                )
            )
        return key, name.strip(), parent.strip()
    if not value:
        raise BadTaxonomyFormat("Line {}: empty `{}` name.".format(number, key))
    return key, value, None


def load_taxonomy(definition, strict=False):
    """Parse a taxonomy document.

    :param definition:
        The document text.

    :param strict:
        Enforce the 1 / 6 / 61 label counts of the shipped taxonomy.

    :returns:
        A validated :class:`Taxonomy`. Label order follows the document.

    :raise BadTaxonomyFormat:
        On malformed records, duplicate labels, orphan level-3 labels or, in
        strict mode, wrong per-level counts.
    """
    root = None
    level2 = []
    level3 = []
    parent_of = {}
    seen = set()

    def claim(name):
        if name in seen:
            raise BadTaxonomyFormat("Duplicate label `{}`.".format(name))
        seen.add(name)

    for number, raw in enumerate(definition.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, name, parent = _parse_record(line, number)
        if key == "level1":
            if root is not None:
                raise BadTaxonomyFormat("Only one `level1` record is allowed.")
            root = name
        elif key == "level2":
            claim(name)
            level2.append(name)
        else:
            claim(name)
            level3.append(name)
            parent_of[name] = parent

    root = root or DEFAULT_ROOT
    claim(root)

    if not level2:
        raise BadTaxonomyFormat("Taxonomy defines no level-2 label.")

    functions = set(level2)
    for name in level3:
        if parent_of[name] not in functions:
            raise BadTaxonomyFormat(
                "Label `{}` has unknown parent `{}`.".format(name, parent_of[name])
            )

    if strict:
        counts = (1, len(level2), len(level3))
        if counts != STRICT_COUNTS:
            raise BadTaxonomyFormat(
                "Expected {}/{}/{} labels per level, found {}/{}/{}.".format(
                    *(STRICT_COUNTS + counts)
                )
            )

    logger.debug(
        "Loaded taxonomy with %d functions and %d identifications",
        len(level2),
        len(level3),
    )
    return Taxonomy(root, level2, level3, parent_of)


def load_taxonomy_file(path, strict=False):
    return load_taxonomy(Path(path).read_text(encoding="utf-8"), strict=strict)


def default_taxonomy(strict=True):
    """The shipped 1 / 6 / 61 aircraft taxonomy."""
    return load_taxonomy_file(DEFAULT_TAXONOMY_PATH, strict=strict)
