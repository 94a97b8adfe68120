# -*- coding: utf-8 -*-


def error_value(exception):
    return exception.value.args[0]
