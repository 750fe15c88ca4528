"""Backend selection for the chain integrator hot loop.

The compiled Cython extension is preferred; the NumPy implementation is the
fallback when the extension is missing (no compiler at install time) or when
the environment variable ``OROWAN_PURE_PY=1`` forces it.  Both expose the
same module-level contract: ``NAME``, ``forces``, ``advance`` and the
``STATUS_*`` codes.
"""

from __future__ import annotations

import os

from . import numpy_backend

try:  # pragma: no cover - exercised only when the extension is missing
    from . import _chain as _compiled
except ImportError:  # pragma: no cover
    _compiled = None

STATUS_DONE = numpy_backend.STATUS_DONE
STATUS_PINNED = numpy_backend.STATUS_PINNED
STATUS_CROSSING = numpy_backend.STATUS_CROSSING
STATUS_COINCIDENT = numpy_backend.STATUS_COINCIDENT


def available_backends():
    """Names of the usable backends, preferred first."""
    names = []
    if _compiled is not None:
        names.append(_compiled.NAME)
    names.append(numpy_backend.NAME)
    return names


def get_backend(name: str | None = None):
    """Return the backend module by name, or the default selection."""
    if name is None:
        if os.environ.get("OROWAN_PURE_PY", "") == "1":
            return numpy_backend
        return _compiled if _compiled is not None else numpy_backend
    if name == numpy_backend.NAME:
        return numpy_backend
    if _compiled is not None and name == _compiled.NAME:
        return _compiled
    raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")


default_backend = get_backend()
