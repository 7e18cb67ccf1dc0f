"""Kernel backend selection.

The compiled extension is preferred; if it is missing (no compiler at install
time) the pure-Python twin is used. ``ELECFLOW_KERNELS=python`` forces the
fallback.
"""

from __future__ import annotations

import os

BACKEND: str

if os.environ.get("ELECFLOW_KERNELS", "").lower() == "python":
    from ._kernels_py import cancel_cycles, etree, numeric, solve, symbolic

    BACKEND = "python"
else:
    try:
        from ._kernels import cancel_cycles, etree, numeric, solve, symbolic

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        from ._kernels_py import cancel_cycles, etree, numeric, solve, symbolic

        BACKEND = "python"

__all__ = ["BACKEND", "etree", "symbolic", "numeric", "solve", "cancel_cycles"]
