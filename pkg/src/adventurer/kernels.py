"""Kernel dispatch: the compiled extension when it was built, else pure Python.

Set ``ADVENTURER_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("ADVENTURER_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

gae = _impl.gae
histogram = _impl.histogram
smoothed_kl = _impl.smoothed_kl

__all__ = ["BACKEND", "gae", "histogram", "smoothed_kl"]
