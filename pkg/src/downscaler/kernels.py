"""Backend selection for the hot conv2d kernels.

The compiled extension is used when importable; set ``DOWNSCALER_BACKEND=python``
to force the numpy fallback. ``BACKEND`` names the active one.
"""
import os

import numpy as np

from . import _pykernels

_choice = os.environ.get("DOWNSCALER_BACKEND", "auto").lower()
_ext = None
if _choice != "python":
    try:
        from . import _ckernels as _ext
    except ImportError:
        if _choice == "ext":
            raise
        _ext = None

BACKEND = "ext" if _ext is not None else "python"
_impl = _ext if _ext is not None else _pykernels


def available_backends():
    names = ["python"]
    if _ext is not None:
        names.append("ext")
    return names


def get_impl(name=None):
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "ext":
        if _ext is None:
            raise ImportError("compiled kernels are not built")
        return _ext
    raise ValueError(f"unknown backend {name!r}")


def _c(a):
    return np.ascontiguousarray(a)


def conv2d_forward(x, w, b, pad, backend=None):
    return get_impl(backend).conv2d_forward(_c(x), _c(w), _c(b), int(pad))


def conv2d_backward(x, w, g, pad, backend=None):
    """Return ``(grad_input, grad_kernel, grad_bias)``."""
    return get_impl(backend).conv2d_backward(_c(x), _c(w), _c(g), int(pad))
