"""Select the linking kernels at import time.

The compiled extension is used when it is importable; otherwise the numpy
fallback is. ``TUBELINK_BACKEND=python`` forces the fallback and
``TUBELINK_BACKEND=compiled`` makes a missing extension an import error.
"""

import importlib
import os

from . import _pykernels

BACKENDS = ("compiled", "python")


def _load_compiled():
    return importlib.import_module("tubelink._ckernels")


def get(name=None):
    """Return the kernel module for ``name`` (default: the active backend)."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "compiled":
        return _load_compiled()
    raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")


def available():
    try:
        _load_compiled()
    except ImportError:
        return ("python",)
    return BACKENDS


_requested = os.environ.get("TUBELINK_BACKEND", "").strip().lower()
if _requested == "python":
    kernels = _pykernels
elif _requested == "compiled":
    kernels = _load_compiled()
else:
    try:
        kernels = _load_compiled()
    except ImportError:
        kernels = _pykernels

NAME = kernels.NAME
