# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""C implementation of the weighted PAVA kernel."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def pava(cnp.float64_t[::1] values, cnp.float64_t[::1] weights):
    cdef Py_ssize_t n = values.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mean_arr = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wsum_arr = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] start_arr = np.empty(n + 1, dtype=np.intp)
    cdef cnp.float64_t[::1] mean = mean_arr
    cdef cnp.float64_t[::1] wsum = wsum_arr
    cdef cnp.intp_t[::1] start = start_arr
    cdef Py_ssize_t i, b, m = 0, out_m = 0
    cdef double tot

    for i in range(n):
        mean[m] = values[i]
        wsum[m] = weights[i]
        start[m] = i
        m += 1
        while m > 1 and mean[m - 2] > mean[m - 1]:
            tot = wsum[m - 2] + wsum[m - 1]
            mean[m - 2] = (wsum[m - 2] * mean[m - 2] + wsum[m - 1] * mean[m - 1]) / tot
            wsum[m - 2] = tot
            m -= 1

    for b in range(m):
        if out_m > 0 and mean[out_m - 1] == mean[b]:
            continue
        mean[out_m] = mean[b]
        start[out_m] = start[b]
        out_m += 1
    start[out_m] = n

    cdef cnp.ndarray[cnp.float64_t, ndim=1] fitted_arr = np.empty(n, dtype=np.float64)
    cdef cnp.float64_t[::1] fitted = fitted_arr
    for b in range(out_m):
        for i in range(start[b], start[b + 1]):
            fitted[i] = mean[b]
    return fitted_arr, start_arr[:out_m + 1].copy()
