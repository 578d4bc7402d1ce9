"""Backend selection for the numerical hot loops.

The compiled Cython module is used when it was built at install time.
Setting ``IRSBREATH_PURE_PYTHON=1`` forces the numpy fallback, which is
also what the benchmark compares against.
"""

import os

from . import _pykernels

if os.environ.get("IRSBREATH_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

irs_response = _impl.irs_response
weighted_on_ratio = _impl.weighted_on_ratio
unwrap = _impl.unwrap

__all__ = ["BACKEND", "irs_response", "weighted_on_ratio", "unwrap"]
