# -*- coding: utf-8 -*-
from sqlalchemy import BigInteger, Column, Float, ForeignKey, Integer, String
from sqlalchemy.exc import InvalidRequestError
from sqlalchemy.inspection import inspect
from sqlalchemy.orm import declarative_base, relationship
from sqlalchemy.util import symbol

from ..evaluation import Counts, Scoreboard
from ..exceptions import FieldNotFound

Base = declarative_base()


class RunRecord(Base):
    """One evaluated run: a mode applied to a set of scenes."""

    __tablename__ = "run"

    id = Column(Integer, primary_key=True)
    name = Column(String(100), nullable=False)
    mode = Column(String(20), nullable=False)
    seed = Column(BigInteger, nullable=True)
    criterion = Column(String(20), nullable=False)

    boards = relationship(
        "BoardRecord", back_populates="run", order_by="BoardRecord.id"
    )


class BoardRecord(Base):
    """Counts of one system on one scene; `scene` is null for merged totals."""

    __tablename__ = "board"

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("run.id"), nullable=False)
    system = Column(String(50), nullable=False)
    scene = Column(String(100), nullable=True)
    n_gt = Column(Integer, nullable=False)
    n_det = Column(Integer, nullable=False)
    n_pairs = Column(Integer, nullable=False)
    n_labelled = Column(Integer, nullable=False)
    n_identified_l2 = Column(Integer, nullable=False)
    n_identified_l3 = Column(Integer, nullable=False)
    recall = Column(Float, nullable=True)
    precision = Column(Float, nullable=True)

    run = relationship("RunRecord", back_populates="boards")

    @classmethod
    def from_scoreboard(cls, system, board, scene=None):
        counts = board.counts
        return cls(
            system=system,
            scene=scene,
            n_gt=counts.n_gt,
            n_det=counts.n_detections,
            n_pairs=counts.n_pairs,
            n_labelled=counts.n_labelled,
            n_identified_l2=counts.n_identified_l2,
            n_identified_l3=counts.n_identified_l3,
            recall=board.recall,
            precision=board.precision,
        )

    def scoreboard(self):
        return Scoreboard(
            Counts(
                n_gt=self.n_gt,
                n_detections=self.n_det,
                n_pairs=self.n_pairs,
                n_labelled=self.n_labelled,
                n_identified_l2=self.n_identified_l2,
                n_identified_l3=self.n_identified_l3,
            )
        )

    @property
    def label(self):
        parts = [self.run.name, self.system]
        if self.scene:
            parts.append(self.scene)
        return ":".join(parts)


def get_relationships(model, field):
    """Relationship attributes crossed by a dotted `field`, in join order."""
    parts = field.split(".")
    relationships = []
    mapper = inspect(model)
    for part in parts[:-1]:
        if part not in mapper.relationships:
            break
        prop = mapper.relationships[part]
        relationships.append(prop.class_attribute)
        mapper = prop.mapper
    return relationships


def get_column(model, field):
    """Column attribute named by `field`, following relationships on dots.

    :raise FieldNotFound:
        If any part of `field` is neither a relationship nor a column.
    """
    parts = field.split(".")
    mapper = inspect(model)
    for part in parts[:-1]:
        if part not in mapper.relationships:
            raise FieldNotFound(
                "Model {} has no relationship `{}`.".format(
                    mapper.class_.__name__, part
                )
            )
        mapper = mapper.relationships[part].mapper
    name = parts[-1]
    if name not in mapper.columns:
        raise FieldNotFound(
            "Model {} has no column `{}`.".format(mapper.class_.__name__, name)
        )
    return getattr(mapper.class_, name)


def should_outer_join(relationships):
    for attribute in relationships:
        prop = attribute.property
        if prop.direction == symbol("ONETOMANY"):
            return True
        if any(column.nullable for column in prop.local_columns):
            return True
    return False


def get_query_models(query):
    """Models selected or already joined by `query`, keyed by class name."""
    models = [
        description["entity"]
        for description in query.column_descriptions
        if description["entity"]
    ]
    try:
        joined = query._compile_state()._join_entities
        models.extend(mapper.class_ for mapper in joined)
    except InvalidRequestError:
        pass
    return {model.__name__: model for model in models}


def auto_join(query, relationships, outer=False):
    """Join the related models of `relationships` not yet in `query`."""
    for attribute in relationships:
        model = attribute.property.entity.class_
        if model in get_query_models(query).values():
            continue
        try:
            query = query.join(attribute, isouter=outer)
        except InvalidRequestError:
            pass
    return query
