"""Backend selection for the convolution kernels.

The compiled extension is used when it imports; otherwise the numpy
implementation is used. Setting ``MGST_PURE_PYTHON=1`` forces numpy.
"""

import contextlib
import os

import numpy as np

from . import _kernels_py

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"numpy": _kernels_py}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

if os.environ.get("MGST_PURE_PYTHON", "") not in ("", "0") or _ckernels is None:
    _active = "numpy"
else:
    _active = "cython"


def available_backends():
    return sorted(_BACKENDS)


def get_backend():
    return _active


def set_backend(name):
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}; have {available_backends()}")
    _active = name


@contextlib.contextmanager
def using_backend(name):
    previous = _active
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def conv3x3_forward(x, weight, bias):
    return _BACKENDS[_active].conv3x3_forward(
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(weight, dtype=np.float64),
        np.ascontiguousarray(bias, dtype=np.float64),
    )


def conv3x3_backward(grad_out, weight):
    return _BACKENDS[_active].conv3x3_backward(
        np.ascontiguousarray(grad_out, dtype=np.float64),
        np.ascontiguousarray(weight, dtype=np.float64),
    )


def avgpool2_forward(x):
    c, h, w = x.shape
    return x.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def avgpool2_backward(grad_out):
    return np.repeat(np.repeat(grad_out, 2, axis=1), 2, axis=2) * 0.25
