# -*- coding: utf-8 -*-

from ..exceptions import BadCatalogSpec
from .models import auto_join, get_column, get_relationships, should_outer_join

SORT_ASCENDING = "asc"
SORT_DESCENDING = "desc"
DIRECTIONS = (SORT_ASCENDING, SORT_DESCENDING)


class Ordering(object):
    """One ``{'field', 'direction'}`` entry of a sort spec."""

    def __init__(self, spec):
        if not isinstance(spec, dict):
            raise BadCatalogSpec("Sort spec `{}` should be a dictionary.".format(spec))
        if "field" not in spec or "direction" not in spec:
            raise BadCatalogSpec("`field` and `direction` are mandatory attributes.")
        if spec["direction"] not in DIRECTIONS:
            raise BadCatalogSpec("Direction `{}` not valid.".format(spec["direction"]))

        self.field = spec["field"]
        self.descending = spec["direction"] == SORT_DESCENDING
        self.nulls = None
        if spec.get("nullsfirst"):
            self.nulls = "first"
        elif spec.get("nullslast"):
            self.nulls = "last"

    def clause(self, model):
        column = get_column(model, self.field)
        clause = column.desc() if self.descending else column.asc()
        if self.nulls == "first":
            clause = clause.nullsfirst()
        elif self.nulls == "last":
            clause = clause.nullslast()
        return clause


def apply_sort(model, query, sort_spec):
    """Order a catalog query.

    :param sort_spec:
        A dict or a list of dicts with `field` and `direction` (``asc`` or
        ``desc``), optionally ``nullsfirst`` or ``nullslast``.

        Example::

            sort_spec = [
                {'field': 'precision', 'direction': 'desc', 'nullslast': True},
                {'field': 'run.name', 'direction': 'asc'},
            ]
    """
    specs = [sort_spec] if isinstance(sort_spec, dict) else sort_spec
    orderings = [Ordering(spec) for spec in specs]
    if not orderings:
        return query

    for ordering in orderings:
        joins = get_relationships(model, ordering.field)
        query = auto_join(query, joins, should_outer_join(joins))
    return query.order_by(*[ordering.clause(model) for ordering in orderings])
