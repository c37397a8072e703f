"""Kernel dispatch: compiled backend when available, NumPy otherwise.

The active backend is chosen once at import.  ``WWDET_KERNELS`` overrides
the choice: ``auto`` (default), ``cython`` (fail if not built) or ``numpy``.
Padding is handled here so both backends only ever see pad-free inputs.
"""

import os

import numpy as np

from . import reference

_requested = os.environ.get("WWDET_KERNELS", "auto")
if _requested not in ("auto", "cython", "numpy"):
    raise ValueError(f"WWDET_KERNELS must be auto|cython|numpy, got {_requested!r}")

_impl = reference
_backend = "numpy"
if _requested in ("auto", "cython"):
    try:
        from . import _fast
        _impl = _fast
        _backend = "cython"
    except ImportError:
        if _requested == "cython":
            raise


def backend():
    """Name of the active kernel backend ('cython' or 'numpy')."""
    return _backend


def set_backend(name):
    """Switch backends at runtime (used by tests and benchmarks)."""
    global _impl, _backend
    if name == "numpy":
        _impl, _backend = reference, "numpy"
    elif name == "cython":
        from . import _fast
        _impl, _backend = _fast, "cython"
    elif name == "auto":
        try:
            set_backend("cython")
        except ImportError:
            set_backend("numpy")
    else:
        raise ValueError(f"unknown kernel backend {name!r}")


def _pad_hw(x, padding, fill=0.0):
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)),
                  constant_values=fill)


def conv_output_hw(h, w, kh, kw, stride, padding):
    return ((h + 2 * padding - kh) // stride + 1,
            (w + 2 * padding - kw) // stride + 1)


def conv2d_forward(x, w, stride=1, padding=0):
    return _impl.conv2d_forward(np.ascontiguousarray(_pad_hw(x, padding)),
                                np.ascontiguousarray(w), stride)


def conv2d_backward_input(gy, w, stride, padding, input_hw):
    h, wid = input_hw
    gx = _impl.conv2d_backward_input(np.ascontiguousarray(gy),
                                     np.ascontiguousarray(w), stride,
                                     h + 2 * padding, wid + 2 * padding)
    if padding:
        gx = np.ascontiguousarray(gx[:, :, padding:padding + h, padding:padding + wid])
    return gx


def conv2d_backward_weight(x, gy, stride, padding, kernel_hw):
    kh, kw = kernel_hw
    return _impl.conv2d_backward_weight(np.ascontiguousarray(_pad_hw(x, padding)),
                                        np.ascontiguousarray(gy), stride, kh, kw)


def max_pool_forward(x, size, stride, padding=0):
    xp = _pad_hw(x, padding, fill=-np.inf) if padding else x
    return _impl.max_pool_forward(np.ascontiguousarray(xp), size, stride)


def max_pool_backward(gy, idx, input_hw, padding=0):
    h, w = input_hw
    gx = _impl.max_pool_backward(np.ascontiguousarray(gy), idx,
                                 h + 2 * padding, w + 2 * padding)
    if padding:
        gx = np.ascontiguousarray(gx[:, :, padding:padding + h, padding:padding + w])
    return gx
