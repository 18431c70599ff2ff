# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the pixel kernels.

Each function mirrors its twin in _fallback.py operation for operation so the
two backends stay bit-identical; see that module for the contracts.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


cdef inline double _sample(const double[:, ::1] img, double x, double y) nogil:
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    cdef Py_ssize_t x0, y0, x1, y1
    cdef double fx, fy, v00, v01, v10, v11, top, bot
    if x < 0.0:
        x = 0.0
    if x > w - 1.0:
        x = w - 1.0
    if y < 0.0:
        y = 0.0
    if y > h - 1.0:
        y = h - 1.0
    x0 = <Py_ssize_t>floor(x)
    y0 = <Py_ssize_t>floor(y)
    x1 = x0 + 1
    if x1 > w - 1:
        x1 = w - 1
    y1 = y0 + 1
    if y1 > h - 1:
        y1 = h - 1
    fx = x - <double>x0
    fy = y - <double>y0
    v00 = img[y0, x0]
    v01 = img[y0, x1]
    v10 = img[y1, x0]
    v11 = img[y1, x1]
    top = v00 + fx * (v01 - v00)
    bot = v10 + fx * (v11 - v10)
    return top + fy * (bot - top)


cdef inline double _sample_ch(const double[:, :, ::1] img, double x, double y,
                              Py_ssize_t c) nogil:
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    cdef Py_ssize_t x0, y0, x1, y1
    cdef double fx, fy, v00, v01, v10, v11, top, bot
    if x < 0.0:
        x = 0.0
    if x > w - 1.0:
        x = w - 1.0
    if y < 0.0:
        y = 0.0
    if y > h - 1.0:
        y = h - 1.0
    x0 = <Py_ssize_t>floor(x)
    y0 = <Py_ssize_t>floor(y)
    x1 = x0 + 1
    if x1 > w - 1:
        x1 = w - 1
    y1 = y0 + 1
    if y1 > h - 1:
        y1 = h - 1
    fx = x - <double>x0
    fy = y - <double>y0
    v00 = img[y0, x0, c]
    v01 = img[y0, x1, c]
    v10 = img[y1, x0, c]
    v11 = img[y1, x1, c]
    top = v00 + fx * (v01 - v00)
    bot = v10 + fx * (v11 - v10)
    return top + fy * (bot - top)


def bilinear_map(const double[:, ::1] img, xs, ys):
    xs_arr = np.ascontiguousarray(xs, dtype=np.float64)
    shape = xs_arr.shape
    flat_x = xs_arr.reshape(-1)
    flat_y = np.ascontiguousarray(ys, dtype=np.float64).reshape(-1)
    out = np.empty(flat_x.shape[0], dtype=np.float64)
    cdef double[::1] xv = flat_x
    cdef double[::1] yv = flat_y
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = flat_x.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = _sample(img, xv[i], yv[i])
    return out.reshape(shape)


def lbp_maps(const double[:, ::1] patch, const double[:, ::1] offs8):
    cdef Py_ssize_t h = patch.shape[0]
    cdef Py_ssize_t w = patch.shape[1]
    code8_arr = np.zeros((h - 2, w - 2), dtype=np.uint8)
    code4_arr = np.zeros((h - 2, w - 2), dtype=np.uint8)
    cdef unsigned char[:, ::1] code8 = code8_arr
    cdef unsigned char[:, ::1] code4 = code4_arr
    cdef Py_ssize_t x, y, i
    cdef double cen, v
    cdef unsigned char c8, c4
    with nogil:
        for y in range(1, h - 1):
            for x in range(1, w - 1):
                cen = patch[y, x]
                c8 = 0
                for i in range(8):
                    v = _sample(patch, <double>x + offs8[i, 0], <double>y + offs8[i, 1])
                    if v >= cen:
                        c8 |= <unsigned char>(1 << i)
                c4 = 0
                if patch[y, x + 1] >= cen:
                    c4 |= 1
                if patch[y - 1, x] >= cen:
                    c4 |= 2
                if patch[y, x - 1] >= cen:
                    c4 |= 4
                if patch[y + 1, x] >= cen:
                    c4 |= 8
                code8[y - 1, x - 1] = c8
                code4[y - 1, x - 1] = c4
    return code8_arr, code4_arr


def warp_tris(const double[:, :, ::1] src, const double[:, :, ::1] minv,
              const double[:, :, ::1] aff, const cnp.int64_t[:, ::1] bbox,
              double[:, :, ::1] out, unsigned char[:, ::1] covered, int nearest):
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t channels = src.shape[2]
    cdef Py_ssize_t ntri = minv.shape[0]
    cdef Py_ssize_t t, c, px, py, nx, ny
    cdef long long x0, y0, x1, y1
    cdef double gx, gy, l0, l1, l2, sx, sy, fnx, fny
    with nogil:
        for t in range(ntri):
            x0 = bbox[t, 0]
            y0 = bbox[t, 1]
            x1 = bbox[t, 2]
            y1 = bbox[t, 3]
            if x1 < x0 or y1 < y0:
                continue
            for py in range(y0, y1 + 1):
                gy = <double>py
                for px in range(x0, x1 + 1):
                    gx = <double>px
                    l0 = minv[t, 0, 0] * gx + minv[t, 0, 1] * gy + minv[t, 0, 2]
                    if l0 < -1e-9:
                        continue
                    l1 = minv[t, 1, 0] * gx + minv[t, 1, 1] * gy + minv[t, 1, 2]
                    if l1 < -1e-9:
                        continue
                    l2 = minv[t, 2, 0] * gx + minv[t, 2, 1] * gy + minv[t, 2, 2]
                    if l2 < -1e-9:
                        continue
                    sx = aff[t, 0, 0] * gx + aff[t, 0, 1] * gy + aff[t, 0, 2]
                    sy = aff[t, 1, 0] * gx + aff[t, 1, 1] * gy + aff[t, 1, 2]
                    if nearest:
                        fnx = floor(sx + 0.5)
                        if fnx < 0.0:
                            fnx = 0.0
                        if fnx > w - 1.0:
                            fnx = w - 1.0
                        fny = floor(sy + 0.5)
                        if fny < 0.0:
                            fny = 0.0
                        if fny > h - 1.0:
                            fny = h - 1.0
                        nx = <Py_ssize_t>fnx
                        ny = <Py_ssize_t>fny
                        for c in range(channels):
                            out[py, px, c] = src[ny, nx, c]
                    else:
                        for c in range(channels):
                            out[py, px, c] = _sample_ch(src, sx, sy, c)
                    covered[py, px] = 1
