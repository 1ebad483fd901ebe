# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-pixel kernels.

Mirrors ``_kernels_py`` operation for operation; the build disables FMA
contraction so both paths round identically. Loops run over flat buffers
so the compiler can vectorize them.
"""

import numpy as np

from libc.math cimport floor

NAME = "cython"


cdef inline unsigned char _byte(float v) noexcept nogil:
    # clamping before truncation equals floor-then-clamp, and truncation of a
    # non-negative double is floor
    cdef double s = <double>v * 255.0 + 0.5
    s = 0.0 if s < 0.0 else s
    s = 255.0 if s > 255.0 else s
    return <unsigned char><int>s


def _flat_f32(values):
    arr = np.ascontiguousarray(values, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {arr.shape}")
    return arr


def rescale_clip(values, lo, hi):
    arr = _flat_f32(values)
    cdef float flo = lo, fhi = hi, span
    if not fhi > flo or arr.size == 0:
        return np.zeros(arr.shape, dtype=np.float32)
    out_arr = np.empty(arr.shape, dtype=np.float32)
    cdef const float[::1] src = arr.reshape(-1)
    cdef float[::1] out = out_arr.reshape(-1)
    cdef Py_ssize_t n = src.shape[0]
    span = fhi - flo
    _rescale(&src[0], &out[0], n, flo, fhi, span)
    return out_arr


cdef void _rescale(const float* src, float* out, Py_ssize_t n, float flo, float fhi, float span) noexcept nogil:
    cdef Py_ssize_t i
    cdef float v
    for i in range(n):
        v = src[i]
        v = flo if v < flo else v
        v = fhi if v > fhi else v
        out[i] = (v - flo) / span


def to_byte(values):
    arr = _flat_f32(values)
    out_arr = np.empty(arr.shape, dtype=np.uint8)
    cdef const float[::1] src = arr.reshape(-1)
    cdef unsigned char[::1] out = out_arr.reshape(-1)
    cdef Py_ssize_t n = src.shape[0], i
    with nogil:
        for i in range(n):
            out[i] = _byte(src[i])
    return out_arr


def normalized_difference(plus, minus):
    parr, marr = _flat_f32(plus), _flat_f32(minus)
    if parr.shape != marr.shape:
        raise ValueError(f"shape mismatch: {parr.shape} vs {marr.shape}")
    out_arr = np.empty(parr.shape, dtype=np.float32)
    cdef const float[::1] p = parr.reshape(-1)
    cdef const float[::1] m = marr.reshape(-1)
    cdef float[::1] out = out_arr.reshape(-1)
    cdef Py_ssize_t n = p.shape[0], i
    cdef double a, b, den
    with nogil:
        for i in range(n):
            a = p[i]
            b = m[i]
            den = a + b
            out[i] = 0.0 if den == 0.0 else <float>((a - b) / (1.0 if den == 0.0 else den))
    return out_arr


def colormap(values, points, double lo, double hi):
    arr = _flat_f32(values)
    cdef const double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    out_arr = np.empty(arr.shape + (3,), dtype=np.uint8)
    cdef const float[::1] src = arr.reshape(-1)
    cdef unsigned char[::1] out = out_arr.reshape(-1)
    cdef Py_ssize_t n = src.shape[0], npts = pts.shape[0], i, c, k
    cdef double v, pos, frac, base
    with nogil:
        for i in range(n):
            v = src[i]
            if v <= lo:
                pos = 0.0
            elif v >= hi:
                pos = <double>(npts - 1)
            else:
                pos = ((v - lo) / (hi - lo)) * (npts - 1)
            k = <Py_ssize_t>floor(pos)
            k = 0 if k < 0 else k
            k = npts - 2 if k > npts - 2 else k
            frac = pos - k
            for c in range(3):
                base = pts[k, c]
                out[3 * i + c] = _byte(<float>(base + (pts[k + 1, c] - base) * frac))
    return out_arr
