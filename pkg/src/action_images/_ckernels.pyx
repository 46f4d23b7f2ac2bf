# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_pykernels``; same signatures."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, floor


cdef inline Py_ssize_t _clampi(Py_ssize_t i, Py_ssize_t n) noexcept nogil:
    if i < 0:
        return 0
    if i >= n:
        return n - 1
    return i


cdef inline void _keys(double t, double* w) noexcept nogil:
    cdef double t2 = t * t
    cdef double t3 = t2 * t
    w[0] = 0.5 * (-t3 + 2.0 * t2 - t)
    w[1] = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0)
    w[2] = 0.5 * (-3.0 * t3 + 4.0 * t2 + t)
    w[3] = 0.5 * (t3 - t2)

cnp.import_array()


cdef void _profile(double[::1] out, Py_ssize_t n, double center, double sigma) noexcept nogil:
    cdef Py_ssize_t i
    cdef double d
    cdef double inv = 1.0 / (2.0 * sigma * sigma)
    for i in range(n):
        d = i + 0.5 - center
        out[i] = exp(-(d * d) * inv)


def gaussian_map(double ux, double uy, double sigma, Py_ssize_t width, Py_ssize_t height):
    cdef double[::1] gx = np.empty(width, dtype=np.float64)
    cdef double[::1] gy = np.empty(height, dtype=np.float64)
    out = np.empty((height, width), dtype=np.float32)
    cdef float[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double ry
    with nogil:
        _profile(gx, width, ux, sigma)
        _profile(gy, height, uy, sigma)
        for j in range(height):
            ry = gy[j]
            for i in range(width):
                o[j, i] = <float>(ry * gx[i])
    return out


def gaussian_map_gripper(double ux, double uy, double sigma, Py_ssize_t width,
                         Py_ssize_t height, double threshold, double gripper):
    cdef double[::1] gx = np.empty(width, dtype=np.float64)
    cdef double[::1] gy = np.empty(height, dtype=np.float64)
    out = np.empty((height, width), dtype=np.float32)
    cdef float[:, ::1] o = out
    cdef float bg = <float>(threshold * gripper)
    cdef float v
    cdef Py_ssize_t i, j
    cdef double ry
    with nogil:
        _profile(gx, width, ux, sigma)
        _profile(gy, height, uy, sigma)
        for j in range(height):
            ry = gy[j]
            for i in range(width):
                v = <float>(ry * gx[i])
                o[j, i] = v if v > threshold else bg
    return out


def _as_f32(h):
    return np.ascontiguousarray(h, dtype=np.float32)


def centroid(h):
    cdef float[:, ::1] a = _as_f32(h)
    cdef Py_ssize_t H = a.shape[0], W = a.shape[1]
    cdef Py_ssize_t i, j
    cdef double total = 0.0, sx = 0.0, sy = 0.0, row, v
    with nogil:
        for j in range(H):
            row = 0.0
            for i in range(W):
                v = a[j, i]
                row = row + v
                sx = sx + v * (i + 0.5)
            total = total + row
            sy = sy + row * (j + 0.5)
    if total <= 0.0:
        return 0.0, 0.0, total
    return sx / total, sy / total, total


def bilinear(h, xs, ys):
    cdef float[:, ::1] a = _as_f32(h)
    xs_arr = np.ascontiguousarray(xs, dtype=np.float64)
    ys_arr = np.ascontiguousarray(ys, dtype=np.float64)
    shape = xs_arr.shape
    cdef double[::1] x = xs_arr.reshape(-1)
    cdef double[::1] y = ys_arr.reshape(-1)
    out = np.zeros(x.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t H = a.shape[0], W = a.shape[1]
    cdef Py_ssize_t n = x.shape[0], k, x0, y0, x1, y1
    cdef Py_ssize_t xmax0 = W - 2 if W >= 2 else 0
    cdef Py_ssize_t ymax0 = H - 2 if H >= 2 else 0
    cdef double px, py, fx, fy, top, bot
    with nogil:
        for k in range(n):
            px = x[k]
            py = y[k]
            if not (px >= 0.0 and px <= W and py >= 0.0 and py <= H):
                continue
            px = px - 0.5
            py = py - 0.5
            if px < 0.0:
                px = 0.0
            elif px > W - 1.0:
                px = W - 1.0
            if py < 0.0:
                py = 0.0
            elif py > H - 1.0:
                py = H - 1.0
            x0 = <Py_ssize_t>floor(px)
            y0 = <Py_ssize_t>floor(py)
            if x0 > xmax0:
                x0 = xmax0
            if y0 > ymax0:
                y0 = ymax0
            x1 = x0 + 1 if x0 + 1 < W else W - 1
            y1 = y0 + 1 if y0 + 1 < H else H - 1
            fx = px - x0
            fy = py - y0
            top = a[y0, x0] * (1.0 - fx) + a[y0, x1] * fx
            bot = a[y1, x0] * (1.0 - fx) + a[y1, x1] * fx
            o[k] = top * (1.0 - fy) + bot * fy
    return out.reshape(shape)


def low_response(h, double level):
    cdef float[:, ::1] a = _as_f32(h)
    cdef Py_ssize_t H = a.shape[0], W = a.shape[1], i, j
    cdef double s = 0.0
    cdef Py_ssize_t count = 0
    cdef float v
    with nogil:
        for j in range(H):
            for i in range(W):
                v = a[j, i]
                if v <= level:
                    s = s + v
                    count = count + 1
    return s, count


def zero_below(h, double level):
    out = np.array(h, dtype=np.float32, order="C", copy=True)
    cdef float[:, ::1] o = out
    cdef Py_ssize_t H = o.shape[0], W = o.shape[1], i, j
    with nogil:
        for j in range(H):
            for i in range(W):
                if o[j, i] <= level:
                    o[j, i] = 0.0
    return out


def bicubic(h, xs, ys):
    cdef float[:, ::1] a = _as_f32(h)
    xs_arr = np.ascontiguousarray(xs, dtype=np.float64)
    ys_arr = np.ascontiguousarray(ys, dtype=np.float64)
    shape = xs_arr.shape
    cdef double[::1] x = xs_arr.reshape(-1)
    cdef double[::1] y = ys_arr.reshape(-1)
    out = np.zeros(x.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t H = a.shape[0], W = a.shape[1]
    cdef Py_ssize_t n = x.shape[0], k, x0, y0, r, c, yi
    cdef double px, py, acc, row
    cdef double wx[4]
    cdef double wy[4]
    with nogil:
        for k in range(n):
            px = x[k]
            py = y[k]
            if not (px >= 0.0 and px <= W and py >= 0.0 and py <= H):
                continue
            px = px - 0.5
            py = py - 0.5
            if px < 0.0:
                px = 0.0
            elif px > W - 1.0:
                px = W - 1.0
            if py < 0.0:
                py = 0.0
            elif py > H - 1.0:
                py = H - 1.0
            x0 = <Py_ssize_t>floor(px)
            y0 = <Py_ssize_t>floor(py)
            _keys(px - x0, wx)
            _keys(py - y0, wy)
            acc = 0.0
            for r in range(4):
                yi = _clampi(y0 + r - 1, H)
                row = 0.0
                for c in range(4):
                    row = row + wx[c] * a[yi, _clampi(x0 + c - 1, W)]
                acc = acc + wy[r] * row
            o[k] = acc
    return out.reshape(shape)
