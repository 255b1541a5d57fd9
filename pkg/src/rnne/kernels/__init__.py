"""Window-kernel backends: compiled extension when built, numpy otherwise.

The active backend is chosen at import time (``RNNE_BACKEND`` may force
``python`` or ``compiled``) and can be switched at runtime with
:func:`set_backend`.
"""

import logging
import os

from . import reference
from .reference import forward_sequence, mlp_forward, sigmoid

log = logging.getLogger(__name__)

_BACKENDS = {"python": reference.window_forward_backward}

try:
    from . import _speedups

    _BACKENDS["compiled"] = _speedups.window_forward_backward
    HAVE_COMPILED = True
except ImportError:
    HAVE_COMPILED = False

_active = os.environ.get("RNNE_BACKEND", "auto")
if _active == "auto":
    _active = "compiled" if HAVE_COMPILED else "python"
if _active not in _BACKENDS:
    log.warning("backend %r unavailable, using pure python", _active)
    _active = "python"


def available_backends():
    return tuple(sorted(_BACKENDS))


def get_backend():
    return _active


def set_backend(name):
    global _active
    if name == "auto":
        name = "compiled" if HAVE_COMPILED else "python"
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    _active = name


def window_forward_backward(*args, **kwargs):
    """Dispatch one window iteration to the active backend."""
    return _BACKENDS[_active](*args, **kwargs)
