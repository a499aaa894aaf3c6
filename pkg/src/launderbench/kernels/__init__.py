"""Hot-kernel dispatch: compiled Cython extension with a numpy fallback.

The compiled module is preferred when built; set LAUNDERBENCH_PURE=1 to
force the numpy path (used by the benchmark and the parity tests).
"""

import os

from . import numpy_ref

if os.environ.get("LAUNDERBENCH_PURE", "") == "1":
    _impl = numpy_ref
    COMPILED = False
else:
    try:
        from . import _hot as _impl
        COMPILED = True
    except ImportError:
        _impl = numpy_ref
        COMPILED = False

rir_accumulate = _impl.rir_accumulate
cqt_direct = _impl.cqt_direct

__all__ = ["COMPILED", "rir_accumulate", "cqt_direct", "numpy_ref"]
