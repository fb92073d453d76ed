"""Hot-loop kernels with a compiled core and a pure-numpy fallback.

The Cython extension is used when it was built; setting the environment
variable ``FISSURA_PURE_PYTHON=1`` forces the fallback. ``IMPLEMENTATION``
reports which one is active.
"""

import os

from fissura.kernels import _py

if os.environ.get("FISSURA_PURE_PYTHON", "0") not in ("", "0"):
    _impl = _py
    IMPLEMENTATION = "python"
else:
    try:
        from fissura.kernels import _ext as _impl

        IMPLEMENTATION = "cython"
    except ImportError:
        _impl = _py
        IMPLEMENTATION = "python"

resize_bicubic = _impl.resize_bicubic
block_mean_std = _impl.block_mean_std

__all__ = ["resize_bicubic", "block_mean_std", "IMPLEMENTATION"]
