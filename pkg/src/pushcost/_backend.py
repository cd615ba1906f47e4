"""Kernel backend selection.

The compiled extension is used when importable. Set ``PUSHCOST_BACKEND`` to
``python`` to force the pure-Python kernels, or ``cython`` to fail loudly if
the extension is missing.
"""
import os

from . import _kernels_py

_requested = os.environ.get("PUSHCOST_BACKEND", "auto").lower()

if _requested == "python":
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        if _requested == "cython":
            raise
        kernels = _kernels_py

python_kernels = _kernels_py


def compiled_kernels():
    """The compiled module, or ``None`` when it was not built."""
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


name = kernels.BACKEND
