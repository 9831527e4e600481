# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``; identical signatures."""
import numpy as np
from libc.math cimport exp, log, sqrt


def softmax_fwd(const double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    out_arr = np.empty((n, m))
    cdef double[:, ::1] out = out_arr
    cdef double mx, s
    for i in range(n):
        mx = x[i, 0]
        for j in range(1, m):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(m):
            out[i, j] = exp(x[i, j] - mx)
            s += out[i, j]
        for j in range(m):
            out[i, j] /= s
    return out_arr


def softmax_bwd(const double[:, ::1] y, const double[:, ::1] g):
    cdef Py_ssize_t n = y.shape[0], m = y.shape[1], i, j
    out_arr = np.empty((n, m))
    cdef double[:, ::1] out = out_arr
    cdef double dot
    for i in range(n):
        dot = 0.0
        for j in range(m):
            dot += g[i, j] * y[i, j]
        for j in range(m):
            out[i, j] = y[i, j] * (g[i, j] - dot)
    return out_arr


def log_softmax_fwd(const double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    out_arr = np.empty((n, m))
    cdef double[:, ::1] out = out_arr
    cdef double mx, s, lse
    for i in range(n):
        mx = x[i, 0]
        for j in range(1, m):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(m):
            s += exp(x[i, j] - mx)
        lse = log(s)
        for j in range(m):
            out[i, j] = x[i, j] - mx - lse
    return out_arr


def log_softmax_bwd(const double[:, ::1] out, const double[:, ::1] g):
    cdef Py_ssize_t n = out.shape[0], m = out.shape[1], i, j
    dx_arr = np.empty((n, m))
    cdef double[:, ::1] dx = dx_arr
    cdef double s
    for i in range(n):
        s = 0.0
        for j in range(m):
            s += g[i, j]
        for j in range(m):
            dx[i, j] = g[i, j] - exp(out[i, j]) * s
    return dx_arr


def layer_norm_fwd(const double[:, ::1] x, const double[::1] gain,
                   const double[::1] bias, double eps):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    out_arr = np.empty((n, m))
    xhat_arr = np.empty((n, m))
    rstd_arr = np.empty(n)
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] xhat = xhat_arr
    cdef double[::1] rstd = rstd_arr
    cdef double mean, var, d, r
    for i in range(n):
        mean = 0.0
        for j in range(m):
            mean += x[i, j]
        mean /= m
        var = 0.0
        for j in range(m):
            d = x[i, j] - mean
            var += d * d
        var /= m
        r = 1.0 / sqrt(var + eps)
        rstd[i] = r
        for j in range(m):
            xhat[i, j] = (x[i, j] - mean) * r
            out[i, j] = xhat[i, j] * gain[j] + bias[j]
    return out_arr, xhat_arr, rstd_arr


def layer_norm_bwd(const double[:, ::1] g, const double[:, ::1] xhat,
                   const double[::1] rstd, const double[::1] gain):
    cdef Py_ssize_t n = g.shape[0], m = g.shape[1], i, j
    dx_arr = np.empty((n, m))
    dgain_arr = np.zeros(m)
    dbias_arr = np.zeros(m)
    cdef double[:, ::1] dx = dx_arr
    cdef double[::1] dgain = dgain_arr
    cdef double[::1] dbias = dbias_arr
    cdef double s1, s2, gx, scale
    for i in range(n):
        s1 = 0.0
        s2 = 0.0
        for j in range(m):
            gx = g[i, j] * gain[j]
            s1 += gx
            s2 += gx * xhat[i, j]
            dgain[j] += g[i, j] * xhat[i, j]
            dbias[j] += g[i, j]
        scale = rstd[i] / m
        for j in range(m):
            gx = g[i, j] * gain[j]
            dx[i, j] = scale * (m * gx - s1 - xhat[i, j] * s2)
    return dx_arr, dgain_arr, dbias_arr


def scatter_add_rows(Py_ssize_t n_rows, const long[::1] idx, const double[:, ::1] src):
    cdef Py_ssize_t m = src.shape[0], d = src.shape[1], i, j, r
    out_arr = np.zeros((n_rows, d))
    cdef double[:, ::1] out = out_arr
    for i in range(m):
        r = idx[i]
        for j in range(d):
            out[r, j] += src[i, j]
    return out_arr
