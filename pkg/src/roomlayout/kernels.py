"""Selects the compiled kernel backend when available, else the numpy fallback.

Set ``ROOMLAYOUT_PURE_PYTHON=1`` to force the fallback.
"""
import os

from roomlayout import _pykernels as python_backend

try:
    if os.environ.get("ROOMLAYOUT_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("compiled kernels disabled by ROOMLAYOUT_PURE_PYTHON")
    from roomlayout import _ckernels as compiled_backend
except ImportError:
    compiled_backend = None

_impl = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

KdTree = _impl.KdTree
tsdf_integrate = _impl.tsdf_integrate
