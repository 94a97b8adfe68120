# -*- coding: utf-8 -*-
import math
from dataclasses import dataclass

from ..exceptions import InvalidPage


@dataclass(frozen=True)
class Pagination:
    page_number: int
    page_size: int
    total_results: int

    @property
    def num_pages(self):
        if self.page_size == 0:
            return 0
        return math.ceil(self.total_results / self.page_size)

    @property
    def offset(self):
        return (self.page_number - 1) * self.page_size


def apply_pagination(query, page_number=None, page_size=None):
    """Restrict a catalog query to one page of stored boards.

    :param page_number:
        Page to be returned, from 1 (the default).

    :param page_size:
        Maximum number of boards in the page; all of them when unset or
        larger than the result count.

    :returns:
        ``(query, Pagination)``.

    :raise InvalidPage:
        On a negative page size or a page number below 1.
    """
    if page_size is not None and page_size < 0:
        raise InvalidPage("Page size should not be negative: {}".format(page_size))
    if page_number is not None and page_number < 1:
        raise InvalidPage("Page number should be positive: {}".format(page_number))

    total_results = query.count()
    if page_size is not None:
        query = query.limit(page_size)
    if page_size is None or 0 < total_results < page_size:
        page_size = total_results

    pagination = Pagination(page_number or 1, page_size, total_results)
    if page_number is not None:
        query = query.offset(pagination.offset)
    return query, pagination
