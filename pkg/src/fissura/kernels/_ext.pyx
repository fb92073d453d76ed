# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Arithmetic mirrors fissura.kernels._py term by term
(same accumulation order, float64 intermediates) so both implementations
produce identical output tiles; the build disables FP contraction to keep
that true."""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, rint, sqrt

cnp.import_array()


cdef void _axis_taps(Py_ssize_t src_len, Py_ssize_t dst_len,
                     Py_ssize_t[:, ::1] idx, double[:, ::1] w) noexcept nogil:
    cdef double scale = <double> src_len / <double> dst_len
    cdef Py_ssize_t d, t, tap
    cdef double s, f
    for d in range(dst_len):
        s = (<double> d + 0.5) * scale - 0.5
        f = s - floor(s)
        for t in range(4):
            tap = <Py_ssize_t> floor(s) - 1 + t
            if tap < 0:
                tap = 0
            elif tap > src_len - 1:
                tap = src_len - 1
            idx[d, t] = tap
        w[d, 0] = ((-0.5 * f + 1.0) * f - 0.5) * f
        w[d, 1] = (1.5 * f - 2.5) * f * f + 1.0
        w[d, 2] = ((-1.5 * f + 2.0) * f + 0.5) * f
        w[d, 3] = (0.5 * f - 0.5) * f * f


def resize_bicubic(src, Py_ssize_t out_h, Py_ssize_t out_w):
    """Resize an 8-bit H x W x 3 image with Catmull-Rom bicubic interpolation."""
    cdef cnp.ndarray[cnp.uint8_t, ndim=3, mode="c"] s = np.ascontiguousarray(src, dtype=np.uint8)
    cdef Py_ssize_t src_h = s.shape[0], src_w = s.shape[1]
    cdef Py_ssize_t[:, ::1] idx_x = np.empty((out_w, 4), dtype=np.intp)
    cdef double[:, ::1] w_x = np.empty((out_w, 4), dtype=np.float64)
    cdef Py_ssize_t[:, ::1] idx_y = np.empty((out_h, 4), dtype=np.intp)
    cdef double[:, ::1] w_y = np.empty((out_h, 4), dtype=np.float64)
    cdef double[:, :, ::1] tmp = np.empty((src_h, out_w, 3), dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=3, mode="c"] out = np.empty((out_h, out_w, 3), dtype=np.uint8)
    cdef cnp.uint8_t[:, :, ::1] sv = s
    cdef cnp.uint8_t[:, :, ::1] ov = out
    cdef Py_ssize_t y, x, c
    cdef double acc

    with nogil:
        _axis_taps(src_w, out_w, idx_x, w_x)
        _axis_taps(src_h, out_h, idx_y, w_y)
        for y in range(src_h):
            for x in range(out_w):
                for c in range(3):
                    acc = <double> sv[y, idx_x[x, 0], c] * w_x[x, 0]
                    acc = acc + <double> sv[y, idx_x[x, 1], c] * w_x[x, 1]
                    acc = acc + <double> sv[y, idx_x[x, 2], c] * w_x[x, 2]
                    acc = acc + <double> sv[y, idx_x[x, 3], c] * w_x[x, 3]
                    tmp[y, x, c] = acc
        for y in range(out_h):
            for x in range(out_w):
                for c in range(3):
                    acc = tmp[idx_y[y, 0], x, c] * w_y[y, 0]
                    acc = acc + tmp[idx_y[y, 1], x, c] * w_y[y, 1]
                    acc = acc + tmp[idx_y[y, 2], x, c] * w_y[y, 2]
                    acc = acc + tmp[idx_y[y, 3], x, c] * w_y[y, 3]
                    if acc < 0.0:
                        acc = 0.0
                    elif acc > 255.0:
                        acc = 255.0
                    ov[y, x, c] = <cnp.uint8_t> rint(acc)
    return out


def block_mean_std(batch, Py_ssize_t grid=8):
    """Per-block mean and population std; see fissura.kernels._py for layout."""
    cdef cnp.ndarray[cnp.float32_t, ndim=4, mode="c"] b = np.ascontiguousarray(batch, dtype=np.float32)
    cdef Py_ssize_t n = b.shape[0], s = b.shape[1], bs = s // grid
    cdef cnp.ndarray[cnp.float32_t, ndim=2, mode="c"] out = np.empty(
        (n, grid * grid * 3 * 2), dtype=np.float32)
    cdef cnp.float32_t[:, :, :, ::1] bv = b
    cdef cnp.float32_t[:, ::1] ov = out
    cdef Py_ssize_t i, by, bx, c, yy, xx, k
    cdef double total, dev, mean, var
    cdef double cnt = <double> (bs * bs)

    with nogil:
        for i in range(n):
            k = 0
            for by in range(grid):
                for bx in range(grid):
                    for c in range(3):
                        total = 0.0
                        for yy in range(by * bs, (by + 1) * bs):
                            for xx in range(bx * bs, (bx + 1) * bs):
                                total += <double> bv[i, yy, xx, c]
                        mean = total / cnt
                        total = 0.0
                        for yy in range(by * bs, (by + 1) * bs):
                            for xx in range(bx * bs, (bx + 1) * bs):
                                dev = <double> bv[i, yy, xx, c] - mean
                                total += dev * dev
                        var = total / cnt
                        ov[i, k] = <cnp.float32_t> mean
                        ov[i, k + 1] = <cnp.float32_t> sqrt(var)
                        k += 2
    return out
