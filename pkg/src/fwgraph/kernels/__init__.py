"""Exit-time sampling kernels.

The numba-compiled implementation is used unless ``FWGRAPH_DISABLE_NUMBA`` is
set to a non-empty value other than ``0`` (or numba is not importable), in
which case the plain-Python / numpy fallback is loaded. Both implement the
same inversion algorithm and agree to rounding.
"""
import os

from . import _numpy

_disabled = os.environ.get("FWGRAPH_DISABLE_NUMBA", "") not in ("", "0")

if _disabled:
    _impl = _numpy
    BACKEND = "numpy"
else:
    try:
        from . import _numba as _impl
        BACKEND = "numba"
    except ImportError:  # pragma: no cover
        _impl = _numpy
        BACKEND = "numpy"

cdf0 = _impl.cdf0
pdf0 = _impl.pdf0
conditional_time = _impl.conditional_time
interval_exit = _impl.interval_exit
ball_exit_time = _impl.ball_exit_time
interval_exit_many = _impl.interval_exit_many
conditional_time_many = _impl.conditional_time_many
warmup = _impl.warmup

__all__ = [
    "BACKEND", "cdf0", "pdf0", "conditional_time", "interval_exit", "ball_exit_time",
    "interval_exit_many", "conditional_time_many", "warmup",
]
