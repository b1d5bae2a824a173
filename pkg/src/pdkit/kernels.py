"""Backend selection for the hot kernels.

The compiled extension is used when it was built; set PDKIT_PURE_PYTHON=1
to force the numpy fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("PDKIT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "compiled"

popcount = _impl.popcount
byte_histogram = _impl.byte_histogram
pattern_counts = _impl.pattern_counts
wom_encode = _impl.wom_encode
wom_decode = _impl.wom_decode
wom_convert = _impl.wom_convert
first_clear_violation = _impl.first_clear_violation

__all__ = [
    "BACKEND", "popcount", "byte_histogram", "pattern_counts", "wom_encode",
    "wom_decode", "wom_convert", "first_clear_violation",
]
