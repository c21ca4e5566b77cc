"""Kernel backend selection.

The package ships a small compiled core for the sequential hot loops
(isotonic PAVA, per-loan panel scans). Importing this module picks the
compiled implementation when it was built and silently falls back to the
pure-NumPy one otherwise. Set ``DRIFTSURV_PURE_PYTHON=1`` to force the
fallback, e.g. to benchmark the two against each other.
"""

from __future__ import annotations

import os

from driftsurv import _kernels_py

if os.environ.get("DRIFTSURV_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from driftsurv import _kernels_cy as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

pava = _impl.pava
segment_cummin = _impl.segment_cummin
segment_linfit = _impl.segment_linfit

BACKEND = "cython" if _impl.__name__.endswith("_cy") else "numpy"


def backend() -> str:
    """Name of the active kernel backend: ``"cython"`` or ``"numpy"``."""
    return BACKEND
