# -*- coding: utf-8 -*-
"""Declarative filters over catalog records.

A filter spec is a condition dict, a list of specs (all must hold) or a
single-key dict combining specs with ``and``, ``or`` or ``not``.
"""
import operator
from collections.abc import Iterable

from sqlalchemy import and_, not_, or_

from ..exceptions import BadCatalogSpec
from .models import auto_join, get_column, get_relationships

DEFAULT_OPERATOR = "=="

# name -> (takes a value, clause builder)
OPERATORS = {
    "is_null": (False, lambda column: column.is_(None)),
    "is_not_null": (False, lambda column: column.isnot(None)),
    "==": (True, operator.eq),
    "!=": (True, operator.ne),
    ">": (True, operator.gt),
    "<": (True, operator.lt),
    ">=": (True, operator.ge),
    "<=": (True, operator.le),
    "like": (True, lambda column, value: column.like(value)),
    "ilike": (True, lambda column, value: column.ilike(value)),
    "in": (True, lambda column, value: column.in_(value)),
    "not_in": (True, lambda column, value: ~column.in_(value)),
}
ALIASES = {"eq": "==", "ne": "!=", "gt": ">", "lt": "<", "ge": ">=", "le": "<="}

# key -> (clause combinator, exactly one argument)
COMBINATORS = {
    "or": (or_, False),
    "and": (and_, False),
    "not": (not_, True),
}


class Condition(object):
    """One ``{'field', 'op', 'value'}`` test on a column."""

    def __init__(self, spec):
        if not isinstance(spec, dict):
            raise BadCatalogSpec(
                "Filter spec `{}` should be a dictionary.".format(spec)
            )
        if "field" not in spec:
            raise BadCatalogSpec("`field` is a mandatory filter attribute.")

        name = spec.get("op") or DEFAULT_OPERATOR
        name = ALIASES.get(name, name)
        if name not in OPERATORS:
            raise BadCatalogSpec("Operator `{}` not valid.".format(spec.get("op")))
        self.takes_value, self.build = OPERATORS[name]
        if self.takes_value and "value" not in spec:
            raise BadCatalogSpec("`value` must be provided.")

        self.field = spec["field"]
        self.op = name
        self.value = spec.get("value")

    def joins(self, model):
        return get_relationships(model, self.field)

    def clause(self, model):
        column = get_column(model, self.field)
        if self.takes_value:
            return self.build(column, self.value)
        return self.build(column)


class Combination(object):
    def __init__(self, combinator, parts):
        self.combinator = combinator
        self.parts = parts

    def joins(self, model):
        return [join for part in self.parts for join in part.joins(model)]

    def clause(self, model):
        return self.combinator(*[part.clause(model) for part in self.parts])


def _is_spec_list(spec):
    return isinstance(spec, Iterable) and not isinstance(spec, (str, dict))


def _combination(key, arguments):
    combinator, single = COMBINATORS[key]
    if not _is_spec_list(arguments):
        raise BadCatalogSpec(
            "`{}` value must be an iterable across the function "
            "arguments".format(key)
        )
    if single and len(arguments) != 1:
        raise BadCatalogSpec("`{}` must have one argument".format(key))
    if not arguments:
        raise BadCatalogSpec("`{}` must have one or more arguments".format(key))
    return Combination(combinator, parse_filters(arguments))


def parse_filters(spec):
    """Flat list of conditions and combinations; all of them must hold."""
    if _is_spec_list(spec):
        return [part for item in spec for part in parse_filters(item)]
    if isinstance(spec, dict):
        key = next((key for key in COMBINATORS if key in spec), None)
        if key is not None:
            return [_combination(key, spec[key])]
    return [Condition(spec)]


def apply_filters(model, query, filter_spec):
    """Apply a filter spec to a catalog query.

    :param model:
        The record class the query selects, :class:`RunRecord` or
        :class:`BoardRecord`.

    :param filter_spec:
        A dict or an iterable of dicts with `field`, `op` and `value` keys.
        Fields of the related run are reached with a dotted name, and
        filters may be combined with ``and``, ``or`` and ``not``.

        Example::

            filter_spec = {
                'or': [
                    {'field': 'run.mode', 'op': '==', 'value': 'recall'},
                    {'field': 'precision', 'op': '>=', 'value': 0.8},
                ]
            }

    :returns:
        The filtered :class:`sqlalchemy.orm.Query`.
    """
    parts = parse_filters(filter_spec)
    query = auto_join(query, [join for part in parts for join in part.joins(model)])
    if not parts:
        return query
    return query.filter(*[part.clause(model) for part in parts])
