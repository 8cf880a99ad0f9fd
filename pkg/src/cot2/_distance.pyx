# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: per-dimension weighted Minkowski distances of one
query against every train row. Semantics must match the numpy fallbacks in
cot2.retrieval exactly (same operation order per row)."""

from libc.math cimport fabs, sqrt

import numpy as np


def manhattan_weighted(double[:, ::1] rows, double[::1] query, double[::1] weights):
    """sum_l w_l * |rows[i, l] - query[l]| for every row i."""
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t d = rows.shape[1]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, l
    cdef double acc
    for i in range(n):
        acc = 0.0
        for l in range(d):
            acc += weights[l] * fabs(rows[i, l] - query[l])
        out[i] = acc
    return out_arr


def euclidean_weighted(double[:, ::1] rows, double[::1] query, double[::1] weights):
    """sqrt(sum_l w_l * (rows[i, l] - query[l])**2) for every row i."""
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t d = rows.shape[1]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, l
    cdef double acc, diff
    for i in range(n):
        acc = 0.0
        for l in range(d):
            diff = rows[i, l] - query[l]
            acc += weights[l] * diff * diff
        out[i] = sqrt(acc)
    return out_arr
