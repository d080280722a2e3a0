# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Signatures mirror ``canet._kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, sqrt, sin, cos, floor, pow, M_PI

cnp.import_array()

cdef double SELU_ALPHA = 1.6732632423543772
cdef double SELU_SCALE = 1.0507009873554805


def selu(z):
    cdef cnp.ndarray[double, ndim=1] zf = np.ascontiguousarray(z, dtype=np.float64).ravel()
    cdef cnp.ndarray[double, ndim=1] out = np.empty_like(zf)
    cdef Py_ssize_t i, n = zf.shape[0]
    cdef double x
    for i in range(n):
        x = zf[i]
        if x > 0:
            out[i] = SELU_SCALE * x
        else:
            out[i] = SELU_SCALE * SELU_ALPHA * expm1(x)
    return out.reshape(np.shape(z))


def selu_grad(z, da):
    cdef cnp.ndarray[double, ndim=1] zf = np.ascontiguousarray(z, dtype=np.float64).ravel()
    cdef cnp.ndarray[double, ndim=1] df = np.ascontiguousarray(da, dtype=np.float64).ravel()
    cdef cnp.ndarray[double, ndim=1] out = np.empty_like(zf)
    cdef Py_ssize_t i, n = zf.shape[0]
    cdef double x
    for i in range(n):
        x = zf[i]
        if x > 0:
            out[i] = SELU_SCALE * df[i]
        else:
            out[i] = SELU_SCALE * SELU_ALPHA * exp(x) * df[i]
    return out.reshape(np.shape(z))


def adam_update(param, grad, m, v, mask, double lr, double beta1, double beta2,
                double eps, long t):
    cdef double[::1] p = param.reshape(-1)
    cdef double[::1] g = np.ascontiguousarray(grad, dtype=np.float64).reshape(-1)
    cdef double[::1] mm = m.reshape(-1)
    cdef double[::1] vv = v.reshape(-1)
    cdef double[::1] mk
    cdef bint masked = mask is not None
    if masked:
        mk = np.ascontiguousarray(mask, dtype=np.float64).reshape(-1)
    cdef double c1 = 1.0 - pow(beta1, t)
    cdef double c2 = 1.0 - pow(beta2, t)
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double gi, mi, vi
    for i in range(n):
        gi = g[i]
        if masked:
            gi = gi * mk[i]
        mi = beta1 * mm[i] + (1.0 - beta1) * gi
        vi = beta2 * vv[i] + (1.0 - beta2) * gi * gi
        mm[i] = mi
        vv[i] = vi
        if masked and mk[i] == 0.0:
            continue
        p[i] -= lr * (mi / c1) / (sqrt(vi / c2) + eps)


def quantize(x, int bits):
    cdef cnp.ndarray[double, ndim=1] xf = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(xf.shape[0], dtype=np.int64)
    cdef long levels = 1 << bits
    cdef double step = 2.0 / levels
    cdef double c
    cdef Py_ssize_t i
    for i in range(xf.shape[0]):
        c = floor((xf[i] + 1.0) / step)
        if c < 0:
            c = 0
        elif c > levels - 1:
            c = levels - 1
        out[i] = <cnp.int64_t>c
    return out.reshape(np.shape(x))


def synthesize(aods, gains, int n_ant, double d_over_lambda):
    cdef double[:, ::1] th = np.ascontiguousarray(np.atleast_2d(aods), dtype=np.float64)
    g = np.atleast_2d(np.asarray(gains, dtype=np.complex128))
    cdef double[:, ::1] gr = np.ascontiguousarray(g.real)
    cdef double[:, ::1] gi = np.ascontiguousarray(g.imag)
    cdef Py_ssize_t n = th.shape[0], n_paths = th.shape[1]
    cdef cnp.ndarray[double, ndim=3] acc = np.zeros((n, n_ant, 2), dtype=np.float64)
    cdef double[:, :, ::1] a = acc
    cdef Py_ssize_t s, p, k
    cdef double w, ph, c, sn
    for s in range(n):
        for p in range(n_paths):
            w = -2.0 * M_PI * d_over_lambda * sin(th[s, p])
            for k in range(n_ant):
                ph = w * k
                c = cos(ph)
                sn = sin(ph)
                a[s, k, 0] += gr[s, p] * c - gi[s, p] * sn
                a[s, k, 1] += gr[s, p] * sn + gi[s, p] * c
    return acc.view(np.complex128)[:, :, 0]


def pilot_apply(p_re, p_im, h_re, h_im):
    cdef double[:, :, ::1] pr = np.ascontiguousarray(p_re, dtype=np.float64)
    cdef double[:, :, ::1] pi = np.ascontiguousarray(p_im, dtype=np.float64)
    cdef double[:, ::1] hr = np.ascontiguousarray(h_re, dtype=np.float64)
    cdef double[:, ::1] hi = np.ascontiguousarray(h_im, dtype=np.float64)
    cdef Py_ssize_t b, i, j, nb = pr.shape[0], nm = pr.shape[1], nn = pr.shape[2]
    yr_arr = np.zeros((nb, nm), dtype=np.float64)
    yi_arr = np.zeros((nb, nm), dtype=np.float64)
    cdef double[:, ::1] yr = yr_arr
    cdef double[:, ::1] yi = yi_arr
    cdef double sr, si
    for b in range(nb):
        for i in range(nm):
            sr = 0.0
            si = 0.0
            for j in range(nn):
                sr += pr[b, i, j] * hr[b, j] - pi[b, i, j] * hi[b, j]
                si += pi[b, i, j] * hr[b, j] + pr[b, i, j] * hi[b, j]
            yr[b, i] = sr
            yi[b, i] = si
    return yr_arr, yi_arr


def pilot_grad(dy_re, dy_im, h_re, h_im):
    cdef double[:, ::1] dr = np.ascontiguousarray(dy_re, dtype=np.float64)
    cdef double[:, ::1] di = np.ascontiguousarray(dy_im, dtype=np.float64)
    cdef double[:, ::1] hr = np.ascontiguousarray(h_re, dtype=np.float64)
    cdef double[:, ::1] hi = np.ascontiguousarray(h_im, dtype=np.float64)
    cdef Py_ssize_t b, i, j, nb = dr.shape[0], nm = dr.shape[1], nn = hr.shape[1]
    gr_arr = np.empty((nb, nm, nn), dtype=np.float64)
    gi_arr = np.empty((nb, nm, nn), dtype=np.float64)
    cdef double[:, :, ::1] gr = gr_arr
    cdef double[:, :, ::1] gi = gi_arr
    for b in range(nb):
        for i in range(nm):
            for j in range(nn):
                gr[b, i, j] = dr[b, i] * hr[b, j] + di[b, i] * hi[b, j]
                gi[b, i, j] = di[b, i] * hr[b, j] - dr[b, i] * hi[b, j]
    return gr_arr, gi_arr
