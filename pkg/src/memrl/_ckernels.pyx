# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled versions of the hot kernels.

All reductions accumulate left-to-right, matching the rounding of the numpy
fallback (which sums sequentially at these sizes) and of the scalar oracles
used in the tests. Compiled with -ffp-contract=off so no FMA sneaks in.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()


cdef inline double _sigmoid(double a) noexcept nogil:
    if a >= 0.0:
        return 1.0 / (1.0 + exp(-a))
    else:
        return exp(a) / (1.0 + exp(a))


def affine_fwd(double[:, ::1] x, double[:, ::1] w, double[::1] b):
    cdef Py_ssize_t t = x.shape[0], nin = x.shape[1], nout = w.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((t, nout), dtype=np.float64)
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(t):
        for k in range(nout):
            acc = 0.0
            for j in range(nin):
                acc += x[i, j] * w[j, k]
            y[i, k] = acc + b[k]
    return out


def affine_bwd(double[:, ::1] x, double[:, ::1] w, double[:, ::1] gy):
    cdef Py_ssize_t t = x.shape[0], nin = x.shape[1], nout = w.shape[1]
    cdef cnp.ndarray[double, ndim=2] gxa = np.zeros((t, nin), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] gwa = np.zeros((nin, nout), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] gba = np.zeros(nout, dtype=np.float64)
    cdef double[:, ::1] gx = gxa
    cdef double[:, ::1] gw = gwa
    cdef double[::1] gb = gba
    cdef Py_ssize_t i, j, k
    cdef double g
    for i in range(t):
        for k in range(nout):
            g = gy[i, k]
            gb[k] += g
            for j in range(nin):
                gx[i, j] += g * w[j, k]
                gw[j, k] += x[i, j] * g
    return gxa, gwa, gba


def gru_cell_fwd(double[::1] x, double[::1] h, double[:, ::1] w,
                 double[:, ::1] u, double[::1] b):
    cdef Py_ssize_t nin = x.shape[0], nh = h.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(nh, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] za = np.empty(nh, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] ra = np.empty(nh, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] na = np.empty(nh, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] rha = np.empty(nh, dtype=np.float64)
    cdef double[::1] hn = out, z = za, r = ra, n = na, rh = rha
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(nh):
        acc = 0.0
        for j in range(nin):
            acc += w[i, j] * x[j]
        acc += b[i]
        for j in range(nh):
            acc += u[i, j] * h[j]
        z[i] = _sigmoid(acc)
    for i in range(nh):
        acc = 0.0
        for j in range(nin):
            acc += w[nh + i, j] * x[j]
        acc += b[nh + i]
        for j in range(nh):
            acc += u[nh + i, j] * h[j]
        r[i] = _sigmoid(acc)
    for i in range(nh):
        rh[i] = r[i] * h[i]
    for i in range(nh):
        acc = 0.0
        for j in range(nin):
            acc += w[2 * nh + i, j] * x[j]
        acc += b[2 * nh + i]
        for j in range(nh):
            acc += u[2 * nh + i, j] * rh[j]
        n[i] = tanh(acc)
    for i in range(nh):
        hn[i] = (1.0 - z[i]) * n[i] + z[i] * h[i]
    cache = (np.asarray(x), np.asarray(h), za, ra, na, rha)
    return out, cache


def gru_cell_bwd(double[:, ::1] w, double[:, ::1] u, cache, double[::1] g):
    x_a, h_a, z_a, r_a, n_a, rh_a = cache
    cdef double[::1] x = x_a, h = h_a, z = z_a, r = r_a, n = n_a, rh = rh_a
    cdef Py_ssize_t nin = x.shape[0], nh = h.shape[0]
    cdef cnp.ndarray[double, ndim=1] gxa = np.zeros(nin, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] gha = np.zeros(nh, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] gwa = np.zeros((3 * nh, nin), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] gua = np.zeros((3 * nh, nh), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] gba = np.zeros(3 * nh, dtype=np.float64)
    cdef double[::1] gx = gxa, gh = gha, gb = gba
    cdef double[:, ::1] gw = gwa, gu = gua
    cdef cnp.ndarray[double, ndim=1] da_a = np.empty(3 * nh, dtype=np.float64)
    cdef double[::1] da = da_a
    cdef cnp.ndarray[double, ndim=1] drh_a = np.zeros(nh, dtype=np.float64)
    cdef double[::1] drh = drh_a
    cdef Py_ssize_t i, j
    cdef double dz, dn, dr, gv

    for i in range(nh):
        gh[i] = g[i] * z[i]
        dn = g[i] * (1.0 - z[i])
        da[2 * nh + i] = dn * (1.0 - n[i] * n[i])
    for i in range(nh):
        gv = da[2 * nh + i]
        for j in range(nh):
            drh[j] += u[2 * nh + i, j] * gv
    for i in range(nh):
        dr = drh[i] * h[i]
        gh[i] += drh[i] * r[i]
        dz = g[i] * (h[i] - n[i])
        da[i] = dz * z[i] * (1.0 - z[i])
        da[nh + i] = dr * r[i] * (1.0 - r[i])
    for i in range(3 * nh):
        gv = da[i]
        gb[i] = gv
        for j in range(nin):
            gx[j] += w[i, j] * gv
            gw[i, j] = gv * x[j]
    for i in range(2 * nh):
        gv = da[i]
        for j in range(nh):
            gu[i, j] = gv * h[j]
            gh[j] += u[i, j] * gv
    for i in range(nh):
        gv = da[2 * nh + i]
        for j in range(nh):
            gu[2 * nh + i, j] = gv * rh[j]
    return gxa, gha, gwa, gua, gba
