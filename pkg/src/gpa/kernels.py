"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set ``GPA_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

if os.environ.get("GPA_PURE_PYTHON", "") not in ("", "0"):
    from gpa import _kernels_py as _impl
else:
    try:
        from gpa import _kernels as _impl
    except ImportError:  # extension not built
        from gpa import _kernels_py as _impl

BACKEND = _impl.BACKEND
neighbor_sum = _impl.neighbor_sum
segment_sum = _impl.segment_sum
random_walk = _impl.random_walk
