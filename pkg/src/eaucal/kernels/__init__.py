"""Elementwise numeric kernels with backend selection at import time.

The compiled extension is preferred when present; otherwise the NumPy
fallback is used.  EAUCAL_BACKEND=python|c forces one backend (`c` raises
if the extension is unavailable).  Results are reproducible within a
backend; the two backends may differ in the last few ulps of libm calls.
"""

import os

_FUNCTIONS = (
    "tanh", "sigmoid", "relu", "exp", "log", "sqrt", "clamp",
    "add", "sub", "mul", "neg", "scale",
    "acc_add", "acc_sub", "acc_scaled", "acc_prod",
    "acc_tanh", "acc_sigmoid", "acc_relu", "acc_exp", "acc_log",
    "acc_sqrt", "acc_clamp",
)


def load_backend(name):
    """Return the kernel module for `name` ("c" or "python")."""
    if name == "python":
        from . import _npkernels
        return _npkernels
    if name == "c":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends():
    names = ["python"]
    try:
        load_backend("c")
        names.insert(0, "c")
    except ImportError:
        pass
    return names


_requested = os.environ.get("EAUCAL_BACKEND", "auto")
if _requested == "auto":
    _impl = load_backend(available_backends()[0])
else:
    _impl = load_backend(_requested)

BACKEND = _impl.BACKEND_NAME
globals().update({_name: getattr(_impl, _name) for _name in _FUNCTIONS})

__all__ = ["BACKEND", "available_backends", "load_backend", *_FUNCTIONS]
