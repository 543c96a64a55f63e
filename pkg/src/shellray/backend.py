"""Kernel backend selection.

The compiled Cython extension is preferred when importable; the pure-NumPy
fallback is bit-identical (the extension is built with FMA contraction off
and mirrors the fallback's expression order).  Set SHELLRAY_PURE=1 to force
the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("SHELLRAY_PURE"):
    kernels = _kernels_py
    BACKEND = "pure"
else:
    try:
        from . import _kernels as _compiled

        kernels = _compiled
        BACKEND = "compiled"
    except ImportError:
        kernels = _kernels_py
        BACKEND = "pure"
