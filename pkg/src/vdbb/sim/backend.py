"""Kernel backend selection.

The compiled kernel is used when it was built; otherwise the numpy
pipeline. ``VDBB_BACKEND=python`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _pykernel

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

BACKENDS = {"python": _pykernel.run}
if _ckernel is not None:
    BACKENDS["c"] = _ckernel.run

DEFAULT = "python" if os.environ.get("VDBB_BACKEND") == "python" or _ckernel is None else "c"


def get(name: str | None = None):
    name = name or DEFAULT
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
