"""Pure numpy 3x3 'same' convolution kernels (fallback backend).

Layout is (channels, height, width). Each of the nine kernel taps becomes
one matrix product over the channel axis.
"""

import numpy as np


def conv3x3_forward(x, weight, bias):
    cin, h, w = x.shape
    padded = np.zeros((cin, h + 2, w + 2), dtype=np.float64)
    padded[:, 1:-1, 1:-1] = x
    out = np.empty((weight.shape[0], h, w), dtype=np.float64)
    out[...] = bias[:, None, None]
    for ky in range(3):
        for kx in range(3):
            out += np.tensordot(weight[:, :, ky, kx], padded[:, ky:ky + h, kx:kx + w], axes=1)
    return out


def conv3x3_backward(grad_out, weight):
    """Gradient with respect to the convolution input."""
    cout, h, w = grad_out.shape
    padded = np.zeros((weight.shape[1], h + 2, w + 2), dtype=np.float64)
    for ky in range(3):
        for kx in range(3):
            padded[:, ky:ky + h, kx:kx + w] += np.tensordot(weight[:, :, ky, kx].T, grad_out, axes=1)
    return np.ascontiguousarray(padded[:, 1:-1, 1:-1])
