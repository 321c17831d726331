# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
# Compiled dense-layer kernels. Mirrors _numpy.py; keep both in sync.
import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

NAME = "cython"


def linear_forward(double[:, ::1] x, double[:, ::1] w, double[::1] b):
    cdef Py_ssize_t B = x.shape[0], I = x.shape[1], O = w.shape[0]
    y_arr = np.empty((B, O), dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef Py_ssize_t k, o, i
    cdef double acc
    for k in range(B):
        for o in range(O):
            acc = b[o]
            for i in range(I):
                acc += x[k, i] * w[o, i]
            y[k, o] = acc
    return y_arr


def relu(double[:, ::1] y):
    cdef Py_ssize_t B = y.shape[0], O = y.shape[1]
    out_arr = np.empty((B, O), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t k, o
    for k in range(B):
        for o in range(O):
            out[k, o] = y[k, o] if y[k, o] > 0.0 else 0.0
    return out_arr


def relu_backward(double[:, ::1] out, double[:, ::1] g):
    cdef Py_ssize_t B = out.shape[0], O = out.shape[1]
    gy_arr = np.empty((B, O), dtype=np.float64)
    cdef double[:, ::1] gy = gy_arr
    cdef Py_ssize_t k, o
    for k in range(B):
        for o in range(O):
            gy[k, o] = g[k, o] if out[k, o] > 0.0 else 0.0
    return gy_arr


def linear_backward(double[:, ::1] x, double[:, ::1] w, double[:, ::1] gy):
    cdef Py_ssize_t B = x.shape[0], I = x.shape[1], O = w.shape[0]
    gw_arr = np.zeros((O, I), dtype=np.float64)
    gb_arr = np.zeros(O, dtype=np.float64)
    gx_arr = np.zeros((B, I), dtype=np.float64)
    cdef double[:, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef double[:, ::1] gx = gx_arr
    cdef Py_ssize_t k, o, i
    cdef double gko
    for k in range(B):
        for o in range(O):
            gko = gy[k, o]
            gb[o] += gko
            for i in range(I):
                gw[o, i] += gko * x[k, i]
                gx[k, i] += gko * w[o, i]
    return gw_arr, gb_arr, gx_arr


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                long t, double lr, double beta1, double beta2, double eps):
    cdef Py_ssize_t n = p.shape[0]
    cdef double c1 = 1.0 - beta1 ** t
    cdef double c2 = 1.0 - beta2 ** t
    cdef Py_ssize_t i
    cdef double mh, vh
    for i in range(n):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        mh = m[i] / c1
        vh = v[i] / c2
        p[i] -= lr * mh / (sqrt(vh) + eps)
