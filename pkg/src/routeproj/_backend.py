"""Import-time selection of the compiled core.

ROUTEPROJ_BACKEND=auto     use the compiled extension when importable (default)
ROUTEPROJ_BACKEND=python   ignore the extension even if present
ROUTEPROJ_BACKEND=compiled require the extension, fail loudly when missing
"""

from __future__ import annotations

import os

_mode = os.environ.get("ROUTEPROJ_BACKEND", "auto").lower()
if _mode not in ("auto", "python", "compiled"):
    raise RuntimeError(f"ROUTEPROJ_BACKEND must be auto|python|compiled, got {_mode!r}")

if _mode == "python":
    speedups = None
else:
    try:
        from . import _speedups as speedups  # type: ignore[attr-defined]
    except ImportError:
        if _mode == "compiled":
            raise RuntimeError(
                "ROUTEPROJ_BACKEND=compiled but the routeproj._speedups extension is not built"
            )
        speedups = None

BACKEND = "compiled" if speedups is not None else "python"


def has_speedups() -> bool:
    return speedups is not None
