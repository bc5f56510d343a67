"""Pick the simulation kernels at import time.

The compiled extension is used when it imports; ``FLOWVAR_PURE_PYTHON=1``
forces the pure Python fallback.
"""

import os

from . import _kernels_py

if os.environ.get("FLOWVAR_PURE_PYTHON", "") not in ("", "0"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels
    except ImportError:  # extension not built
        kernels = _kernels_py

BACKEND = kernels.NAME


def available() -> dict:
    """All importable kernel implementations by name."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels

        found["cython"] = _kernels
    except ImportError:
        pass
    return found
