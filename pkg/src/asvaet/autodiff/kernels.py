"""Kernel backend selection.

The compiled Cython module is used when it was built and importable;
otherwise the numpy fallback is used.  Setting ``ASVAET_PURE_PYTHON=1``
forces the fallback.
"""
import os

from . import _pykernels

if os.environ.get("ASVAET_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

softmax_fwd = _impl.softmax_fwd
softmax_bwd = _impl.softmax_bwd
log_softmax_fwd = _impl.log_softmax_fwd
log_softmax_bwd = _impl.log_softmax_bwd
layer_norm_fwd = _impl.layer_norm_fwd
layer_norm_bwd = _impl.layer_norm_bwd
scatter_add_rows = _impl.scatter_add_rows

__all__ = [
    "BACKEND",
    "softmax_fwd",
    "softmax_bwd",
    "log_softmax_fwd",
    "log_softmax_bwd",
    "layer_norm_fwd",
    "layer_norm_bwd",
    "scatter_add_rows",
]
