"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
versions in ``_kernels_py`` are used. Setting ``HANDPD_PURE=1`` forces the
fallback. ``BACKEND`` names the active choice.
"""
import os

from . import _kernels_py

_compiled = None
if not os.environ.get("HANDPD_PURE"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

_impl = _compiled if _compiled is not None else _kernels_py
BACKEND = "compiled" if _compiled is not None else "python"

xorshift_uniform = _impl.xorshift_uniform
lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward


def backends():
    """Map of available backend name -> module, for benchmarks and parity tests."""
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out
