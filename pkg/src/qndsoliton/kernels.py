"""Select the compiled kernels when available, else the numpy fallback.

Set ``QNDSOLITON_KERNELS=python`` to force the fallback.
"""

import os

BACKEND = "python"

if os.environ.get("QNDSOLITON_KERNELS", "").lower() != "python":
    try:
        from ._kernels import kerr_step, max_abs2, spectral_multiply
        BACKEND = "cython"
    except ImportError:  # extension not built
        pass

if BACKEND == "python":
    from ._kernels_py import kerr_step, max_abs2, spectral_multiply

from . import _kernels_py as python_kernels


def compiled_kernels():
    """Return the compiled kernel module, or None if it is not built."""
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


__all__ = ["BACKEND", "kerr_step", "spectral_multiply", "max_abs2",
           "python_kernels", "compiled_kernels"]
