"""Select the numeric kernel implementation at import time.

The compiled core ``hoilab._kernels`` is used when it has been built;
otherwise, or when the environment variable ``HOILAB_PURE`` is set to a
non-empty value other than ``0``, the numpy module ``hoilab._kernels_py``
is used. Both expose the same functions.
"""
import os

from . import _kernels_py

_force_pure = os.environ.get("HOILAB_PURE", "") not in ("", "0")

if _force_pure:
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _kernels_py

NAME = "python" if kernels is _kernels_py else "cython"
