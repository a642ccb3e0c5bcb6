import json as _json

from . import _judgebench as _ext
from ._judgebench import *  # noqa: F401,F403
from ._judgebench import DataError, ProviderError, UsageError  # noqa: F401

__doc__ = _ext.__doc__


def specificity_report(*args, **kwargs):
    return _json.loads(_ext.specificity_report(*args, **kwargs))
