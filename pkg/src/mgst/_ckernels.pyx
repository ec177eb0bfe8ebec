# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled 3x3 'same' convolution kernels.

Loops run in a fixed order so results are reproducible run to run. The GIL
is released around the arithmetic so batch jobs on threads overlap.
"""

import numpy as np


cdef void _correlate(const double[:, :, ::1] xpad, const double[:, :, :, ::1] k,
                     double[:, :, ::1] out) noexcept nogil:
    # out[o, y, x] += sum_i sum_{a,b} k[o, i, a, b] * xpad[i, y + a, x + b]
    cdef Py_ssize_t n_out = out.shape[0], h = out.shape[1], w = out.shape[2]
    cdef Py_ssize_t n_in = xpad.shape[0]
    cdef Py_ssize_t o, i, y, x
    cdef double k00, k01, k02, k10, k11, k12, k20, k21, k22
    cdef const double* r0
    cdef const double* r1
    cdef const double* r2
    cdef double* orow
    for o in range(n_out):
        for i in range(n_in):
            k00 = k[o, i, 0, 0]; k01 = k[o, i, 0, 1]; k02 = k[o, i, 0, 2]
            k10 = k[o, i, 1, 0]; k11 = k[o, i, 1, 1]; k12 = k[o, i, 1, 2]
            k20 = k[o, i, 2, 0]; k21 = k[o, i, 2, 1]; k22 = k[o, i, 2, 2]
            for y in range(h):
                r0 = &xpad[i, y, 0]
                r1 = &xpad[i, y + 1, 0]
                r2 = &xpad[i, y + 2, 0]
                orow = &out[o, y, 0]
                for x in range(w):
                    orow[x] += (k00 * r0[x] + k01 * r0[x + 1] + k02 * r0[x + 2]
                                + k10 * r1[x] + k11 * r1[x + 1] + k12 * r1[x + 2]
                                + k20 * r2[x] + k21 * r2[x + 1] + k22 * r2[x + 2])


def _pad(a):
    c, h, w = a.shape[0], a.shape[1], a.shape[2]
    padded = np.zeros((c, h + 2, w + 2), dtype=np.float64)
    padded[:, 1:-1, 1:-1] = a
    return padded


def conv3x3_forward(const double[:, :, ::1] x, const double[:, :, :, ::1] weight,
                    const double[::1] bias):
    cdef Py_ssize_t h = x.shape[1], w = x.shape[2]
    out_arr = np.empty((weight.shape[0], h, w), dtype=np.float64)
    out_arr[...] = np.asarray(bias)[:, None, None]
    cdef double[:, :, ::1] out = out_arr
    cdef const double[:, :, ::1] xpad = _pad(np.asarray(x))
    with nogil:
        _correlate(xpad, weight, out)
    return out_arr


def conv3x3_backward(const double[:, :, ::1] grad_out, const double[:, :, :, ::1] weight):
    """Gradient with respect to the convolution input.

    Equal to a forward correlation of the padded output gradient with the
    kernel transposed over channels and flipped in both spatial axes.
    """
    cdef Py_ssize_t h = grad_out.shape[1], w = grad_out.shape[2]
    flipped = np.ascontiguousarray(np.asarray(weight).transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    out_arr = np.zeros((weight.shape[1], h, w), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef const double[:, :, ::1] gpad = _pad(np.asarray(grad_out))
    cdef const double[:, :, :, ::1] k = flipped
    with nogil:
        _correlate(gpad, k, out)
    return out_arr
