"""Select the simulation kernel backend at import time.

The compiled extension is preferred when present; setting the environment
variable ``MINREV_PURE_PYTHON=1`` before import forces the NumPy fallback
(used by the benchmark and the backend-equivalence tests).
"""

import os

from minrev import _kernels_py

if os.environ.get("MINREV_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from minrev import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

fill_paths = _impl.fill_paths
extremal_stats = _impl.extremal_stats
BACKEND = _impl.BACKEND
USING_COMPILED_KERNELS = BACKEND == "cython"

__all__ = ["fill_paths", "extremal_stats", "BACKEND", "USING_COMPILED_KERNELS"]
