# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled aggregation kernels.

Arithmetic mirrors the numpy backend operation for operation (sequential
row accumulation, NaN mapped to +inf before sorting) so that both backends
return bitwise-identical results.  Sorting is insertion sort per column,
which is the right tool for the small candidate counts (B up to a few
dozen) this library works with.
"""

import numpy as np

from libc.math cimport INFINITY, isnan


cdef inline void _gather_column(const double[:, ::1] stack, Py_ssize_t j,
                                double[::1] scratch, Py_ssize_t b) noexcept nogil:
    cdef Py_ssize_t i
    cdef double v
    for i in range(b):
        v = stack[i, j]
        if isnan(v):
            v = INFINITY
        scratch[i] = v


cdef inline void _insertion_sort(double[::1] a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, k
    cdef double key
    for i in range(1, n):
        key = a[i]
        k = i - 1
        while k >= 0 and a[k] > key:
            a[k + 1] = a[k]
            k -= 1
        a[k + 1] = key


def mean_axis0(const double[:, ::1] stack):
    cdef Py_ssize_t b = stack.shape[0]
    cdef Py_ssize_t d = stack.shape[1]
    out = np.zeros(d, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(b):
            for j in range(d):
                o[j] += stack[i, j]
        for j in range(d):
            o[j] /= b
    return out


def median_axis0(const double[:, ::1] stack):
    cdef Py_ssize_t b = stack.shape[0]
    cdef Py_ssize_t d = stack.shape[1]
    cdef Py_ssize_t mid = b // 2
    cdef bint odd = b % 2
    out = np.empty(d, dtype=np.float64)
    scratch = np.empty(b, dtype=np.float64)
    cdef double[::1] o = out
    cdef double[::1] s = scratch
    cdef Py_ssize_t j
    with nogil:
        for j in range(d):
            _gather_column(stack, j, s, b)
            _insertion_sort(s, b)
            if odd:
                o[j] = s[mid]
            else:
                o[j] = (s[mid - 1] + s[mid]) / 2.0
    return out


def trimmed_mean_axis0(const double[:, ::1] stack, Py_ssize_t q):
    cdef Py_ssize_t b = stack.shape[0]
    cdef Py_ssize_t d = stack.shape[1]
    cdef Py_ssize_t kept = b - 2 * q
    out = np.empty(d, dtype=np.float64)
    scratch = np.empty(b, dtype=np.float64)
    cdef double[::1] o = out
    cdef double[::1] s = scratch
    cdef Py_ssize_t i, j
    cdef double acc
    with nogil:
        for j in range(d):
            _gather_column(stack, j, s, b)
            _insertion_sort(s, b)
            acc = 0.0
            for i in range(q, b - q):
                acc += s[i]
            o[j] = acc / kept
    return out


def accumulate_mean(double[::1] h, const double[::1] g, double count):
    cdef Py_ssize_t d = h.shape[0]
    cdef Py_ssize_t j
    with nogil:
        for j in range(d):
            h[j] = ((count - 1.0) * h[j] + g[j]) / count
