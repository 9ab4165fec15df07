"""Pick the compiled kernels when importable, else the pure-Python ones.

Set ``QSTAIL_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
kernels = _fallback

if os.environ.get("QSTAIL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:  # extension not built
        kernels = _fallback


def default_threads() -> int:
    raw = os.environ.get("QST_THREADS", "")
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(1, value)
