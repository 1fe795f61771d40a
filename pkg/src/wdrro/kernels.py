"""Backend selection for the one-dimensional worst-case kernel.

The compiled extension is used when it imports; setting WDRRO_PURE_PYTHON=1
forces the numpy implementation.
"""

import os

from . import _kernels_py

BACKEND = "python"
clip_worst_case = _kernels_py.clip_worst_case

if not os.environ.get("WDRRO_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None
    if _compiled is not None:
        clip_worst_case = _compiled.clip_worst_case
        BACKEND = "cython"

budget_used = _kernels_py.budget_used

__all__ = ["BACKEND", "clip_worst_case", "budget_used"]
