"""Dense-layer kernels on top of numpy.

Same signatures as the compiled module built from _core.pyx; the package
selects one of the two at import time (see __init__). All arrays are
float64 and C-contiguous.
"""

import numpy as np

NAME = "numpy"


def linear_forward(x, w, b):
    # y[k, o] = b[o] + sum_i x[k, i] * w[o, i]
    return x @ w.T + b


def relu(y):
    return np.maximum(y, 0.0)


def relu_backward(out, g):
    # out is the post-activation value; its positive support equals the
    # pre-activation's, so the gate can be read off the output.
    return np.where(out > 0.0, g, 0.0)


def linear_backward(x, w, gy):
    gw = gy.T @ x
    gb = gy.sum(axis=0)
    gx = gy @ w
    return gw, gb, gx


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    """One Adam step with bias correction, in place on flat arrays p/m/v."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)
