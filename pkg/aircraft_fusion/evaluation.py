# -*- coding: utf-8 -*-
"""Scoring detections against ground truth.

A detection matches a ground-truth object when their overlap reaches
``MATCH_THRESHOLD`` (see :func:`aircraft_fusion.geometry.overlap` for the
two criteria). Recall and precision count the matched pairs; the
identification rates only look at pairs whose detection claims a level-3
label.
"""
import logging
from collections import Counter, namedtuple
from dataclasses import dataclass, field, fields

import numpy as np

from .exceptions import BadConfig
from .geometry import OVER_TARGET, overlap

logger = logging.getLogger(__name__)

MATCH_THRESHOLD = 0.5

Pair = namedtuple(
    "Pair", ("gt_id", "detection_index", "overlap", "gt_label", "detection_label")
)
Rates = namedtuple(
    "Rates",
    ("recall", "precision", "identification_rate_l2", "identification_rate_l3"),
)


@dataclass(eq=False)
class MatchResult:
    pairs: list
    false_negatives: list
    false_positives: list
    n_gt: int
    n_detections: int


def _ratio(numerator, denominator):
    if denominator == 0:
        return None
    return numerator / denominator


@dataclass
class Counts:
    n_gt: int = 0
    n_detections: int = 0
    n_pairs: int = 0
    n_labelled: int = 0
    n_identified_l2: int = 0
    n_identified_l3: int = 0

    def __add__(self, other):
        return Counts(
            **{
                f.name: getattr(self, f.name) + getattr(other, f.name)
                for f in fields(self)
            }
        )


@dataclass(eq=False)
class Scoreboard:
    counts: Counts = field(default_factory=Counts)
    confusion: Counter = field(default_factory=Counter)

    @property
    def recall(self):
        return _ratio(self.counts.n_pairs, self.counts.n_gt)

    @property
    def precision(self):
        return _ratio(self.counts.n_pairs, self.counts.n_detections)

    @property
    def identification_rate_l2(self):
        return _ratio(self.counts.n_identified_l2, self.counts.n_labelled)

    @property
    def identification_rate_l3(self):
        return _ratio(self.counts.n_identified_l3, self.counts.n_labelled)

    def identification_rate(self, level):
        if level == 2:
            return self.identification_rate_l2
        if level == 3:
            return self.identification_rate_l3
        raise BadConfig("Identification level `{}` not valid.".format(level))

    def rates(self):
        return Rates(
            self.recall,
            self.precision,
            self.identification_rate_l2,
            self.identification_rate_l3,
        )

    def confusion_matrix(self, names):
        """Dense level-3 confusion matrix, rows ground truth, columns predictions."""
        index = {name: i for i, name in enumerate(names)}
        matrix = np.zeros((len(names), len(names)), dtype=np.int64)
        for (truth, predicted), count in self.confusion.items():
            matrix[index[truth], index[predicted]] += count
        return matrix


def _overlaps(gt_objects, detections, criterion):
    values = np.zeros((len(detections), len(gt_objects)), dtype=np.float64)
    for j, obj in enumerate(gt_objects):
        footprint = obj.footprint
        for i, detection in enumerate(detections):
            if detection.box.intersection(footprint.box) is None:
                continue
            values[i, j] = overlap(
                detection.box, footprint.mask, footprint.origin, criterion
            )
    return values


def match(gt_objects, detections, criterion=OVER_TARGET, threshold=MATCH_THRESHOLD):
    """Greedy one-to-one matching in descending detection score.

    Each detection takes the unmatched ground-truth object with the highest
    qualifying overlap. Detections with equal scores are visited by
    decreasing best overlap, then in input order.
    """
    overlaps = _overlaps(gt_objects, detections, criterion)
    qualifying = np.where(overlaps >= threshold, overlaps, -1.0)
    if gt_objects:
        best = qualifying.max(axis=1)
    else:
        best = np.full(len(detections), -1.0)
    order = sorted(
        range(len(detections)), key=lambda i: (-detections[i].score, -best[i], i)
    )

    taken = np.zeros(len(gt_objects), dtype=bool)
    pairs = []
    matched_detections = set()
    for i in order:
        candidates = np.where(taken, -1.0, qualifying[i])
        if not candidates.size:
            continue
        j = int(np.argmax(candidates))
        if candidates[j] < threshold:
            continue
        taken[j] = True
        matched_detections.add(i)
        obj = gt_objects[j]
        pairs.append(
            Pair(obj.id, i, float(overlaps[i, j]), obj.label, detections[i].label)
        )

    logger.debug(
        "Matched %d of %d objects with %d detections",
        len(pairs),
        len(gt_objects),
        len(detections),
    )
    return MatchResult(
        pairs=pairs,
        false_negatives=[obj.id for j, obj in enumerate(gt_objects) if not taken[j]],
        false_positives=[
            i for i in range(len(detections)) if i not in matched_detections
        ],
        n_gt=len(gt_objects),
        n_detections=len(detections),
    )


def score(result, taxonomy):
    """Scoreboard of a :class:`MatchResult`.

    Pairs whose detection carries no level-3 label (recovered objects,
    segmentation boxes) count toward recall and precision only.
    """
    counts = Counts(
        n_gt=result.n_gt,
        n_detections=result.n_detections,
        n_pairs=len(result.pairs),
    )
    confusion = Counter()
    for pair in result.pairs:
        predicted = pair.detection_label
        if predicted is None or predicted.level != 3:
            continue
        counts.n_labelled += 1
        confusion[(pair.gt_label.name, predicted.name)] += 1
        if predicted.name == pair.gt_label.name:
            counts.n_identified_l3 += 1
        if taxonomy.ancestor(predicted, 2) == taxonomy.ancestor(pair.gt_label, 2):
            counts.n_identified_l2 += 1
    return Scoreboard(counts, confusion)


def evaluate(gt_objects, detections, taxonomy, criterion=OVER_TARGET):
    return score(match(gt_objects, detections, criterion), taxonomy)


def merge_boards(boards):
    """Sum the counts of per-scene boards, so ratios are computed once."""
    merged = Scoreboard()
    for board in boards:
        merged.counts = merged.counts + board.counts
        merged.confusion.update(board.confusion)
    return merged


def _dominates(a, b):
    if None in (a.recall, a.precision, b.recall, b.precision):
        return False
    return (
        a.recall >= b.recall
        and a.precision >= b.precision
        and (a.recall > b.recall or a.precision > b.precision)
    )


@dataclass(eq=False)
class Comparison:
    names: list
    boards: list
    dominance: list
    dominant: str = None

    def board(self, name):
        return self.boards[self.names.index(name)]


def compare(boards):
    """Compare named boards on recall and precision.

    :param boards:
        ``(name, board)`` pairs or a mapping; a board is anything with
        `recall` and `precision` attributes (:class:`Scoreboard`,
        :class:`Rates`).

    :returns:
        A :class:`Comparison`; `dominance` lists ``(winner, loser)`` pairs
        where the winner is at least as good on both ratios and better on
        one, `dominant` names the system dominating every other one.
    """
    items = list(boards.items()) if isinstance(boards, dict) else list(boards)
    if len(items) < 2:
        raise BadConfig(
            "Comparing needs at least two boards, got {}.".format(len(items))
        )
    names = [name for name, _ in items]
    if len(set(names)) != len(names):
        raise BadConfig("Board names must be unique: `{}`.".format(names))
    values = [board for _, board in items]

    dominance = [
        (names[i], names[j])
        for i in range(len(items))
        for j in range(len(items))
        if i != j and _dominates(values[i], values[j])
    ]
    dominant = None
    for name in names:
        beaten = {loser for winner, loser in dominance if winner == name}
        if len(beaten) == len(names) - 1:
            dominant = name
    return Comparison(names, values, dominance, dominant)


def _format_ratio(value):
    return "-" if value is None else "{:.3f}".format(value)


def format_table(named_boards, level=None):
    """Plain-text table, one row per ``(name, board)``.

    `level` restricts the identification columns to level 2 or 3.
    """
    levels = (2, 3) if level is None else (level,)
    header = ["system", "recall", "precision"]
    header += ["id_l{}".format(lv) for lv in levels]
    rows = []
    for name, board in named_boards:
        cells = [name, _format_ratio(board.recall), _format_ratio(board.precision)]
        for lv in levels:
            rate = getattr(board, "identification_rate_l{}".format(lv))
            cells.append(_format_ratio(rate))
        rows.append(cells)

    table = [header] + rows
    widths = [max(len(row[c]) for row in table) for c in range(len(header))]
    lines = [
        "  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip()
        for row in table
    ]
    return "\n".join(lines) + "\n"


def format_report(comparison, level=None):
    """Table of a comparison followed by its dominance flags."""
    lines = [format_table(zip(comparison.names, comparison.boards), level).rstrip()]
    for winner, loser in comparison.dominance:
        lines.append("{} dominates {}".format(winner, loser))
    if comparison.dominant:
        lines.append("dominant: {}".format(comparison.dominant))
    elif not comparison.dominance:
        lines.append("no dominance")
    return "\n".join(lines) + "\n"


def board_document(name, board):
    """Ratios of a board, plus its counts and confusion when it is a Scoreboard."""
    entry = {
        "name": name,
        "recall": board.recall,
        "precision": board.precision,
        "identification_rate_l2": board.identification_rate_l2,
        "identification_rate_l3": board.identification_rate_l3,
    }
    if isinstance(board, Scoreboard):
        entry["counts"] = {
            f.name: getattr(board.counts, f.name) for f in fields(board.counts)
        }
        entry["confusion"] = [
            {"truth": truth, "predicted": predicted, "count": count}
            for (truth, predicted), count in sorted(board.confusion.items())
        ]
    return entry


def board_from_document(entry):
    """Board of a document; one without counts gives :class:`Rates`."""
    if "counts" not in entry:
        return Rates(
            entry.get("recall"),
            entry.get("precision"),
            entry.get("identification_rate_l2"),
            entry.get("identification_rate_l3"),
        )
    try:
        counts = Counts(**entry["counts"])
    except TypeError as error:
        raise BadConfig("Malformed board counts: {}".format(error))
    confusion = Counter(
        {
            (item["truth"], item["predicted"]): item["count"]
            for item in entry.get("confusion", [])
        }
    )
    return Scoreboard(counts, confusion)


def report_document(comparison):
    """Machine-readable form of a comparison."""
    return {
        "systems": [
            board_document(name, board)
            for name, board in zip(comparison.names, comparison.boards)
        ],
        "dominance": [list(pair) for pair in comparison.dominance],
        "dominant": comparison.dominant,
    }
