"""Kernel backend selection.

The compiled extension is used when it was built; set
``HYPEXT_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

if os.environ.get("HYPEXT_PURE_PYTHON", "") not in ("", "0"):
    from ._kernels_py import derivative, rhs
    BACKEND = "python"
else:
    try:
        from ._kernels import derivative, rhs
        BACKEND = "compiled"
    except ImportError:
        from ._kernels_py import derivative, rhs
        BACKEND = "python"

__all__ = ["BACKEND", "derivative", "rhs"]
