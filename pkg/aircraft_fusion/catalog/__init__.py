# -*- coding: utf-8 -*-
"""SQL catalog of evaluated runs.

Each run stores one :class:`BoardRecord` per system and scene plus the
merged totals (``scene`` null). Stored boards are queried with declarative
filter, sort and pagination specs::

    boards = load_boards(
        session,
        filter_spec=[{'field': 'run.mode', 'op': '==', 'value': 'recall'}],
        sort_spec={'field': 'precision', 'direction': 'desc'},
    )
"""
import logging

from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker

from .filters import apply_filters  # noqa: F401
from .models import Base, BoardRecord, RunRecord  # noqa: F401
from .pagination import Pagination, apply_pagination  # noqa: F401
from .sorting import apply_sort  # noqa: F401

logger = logging.getLogger(__name__)

MERGED_ONLY = {"field": "scene", "op": "is_null"}


def create_catalog(uri):
    """Session factory bound to the catalog at `uri`; tables are created."""
    engine = create_engine(uri)
    Base.metadata.create_all(engine)
    return sessionmaker(bind=engine)


def record_boards(session, name, mode, seed, criterion, boards):
    """Store a run.

    :param boards:
        ``(system, scene, Scoreboard)`` triples; `scene` is `None` for the
        merged totals of a system.
    """
    run = RunRecord(name=name, mode=mode, seed=seed, criterion=criterion)
    run.boards = [
        BoardRecord.from_scoreboard(system, board, scene)
        for system, scene, board in boards
    ]
    session.add(run)
    session.commit()
    logger.info("Recorded run `%s` with %d boards", name, len(run.boards))
    return run


def query_boards(session, filter_spec=None, sort_spec=None):
    query = session.query(BoardRecord)
    if filter_spec:
        query = apply_filters(BoardRecord, query, filter_spec)
    if sort_spec:
        query = apply_sort(BoardRecord, query, sort_spec)
    else:
        query = query.order_by(BoardRecord.id)
    return query


def load_boards(
    session, filter_spec=None, sort_spec=None, page_number=None, page_size=None
):
    """Stored boards as ``(label, Scoreboard)`` pairs ready for comparison.

    Labels read ``run:system`` for merged totals and ``run:system:scene``
    for per-scene boards. Without a filter, merged totals only are loaded.
    """
    if filter_spec is None:
        filter_spec = MERGED_ONLY
    query = query_boards(session, filter_spec, sort_spec)
    query, pagination = apply_pagination(query, page_number, page_size)
    logger.debug("Loading page %s", pagination)
    records = query.all()
    return [(record.label, record.scoreboard()) for record in records]
