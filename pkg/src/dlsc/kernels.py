"""Kernel backend selection.

The compiled extension is used when it was built; otherwise, or when
``DLSC_PURE_PYTHON=1`` is set, the numpy twin is used.  ``BACKEND`` names the
active one.
"""

import os

from . import _kernels_py

if os.environ.get("DLSC_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"

hungarian = _impl.hungarian
contingency = _impl.contingency
lloyd_assign = _impl.lloyd_assign


def backends() -> dict:
    """Every importable backend by name (for tests and benchmarks)."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]

        out["compiled"] = _kernels
    except ImportError:
        pass
    return out
