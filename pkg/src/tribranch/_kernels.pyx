# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: XNOR-popcount GEMM and COO scatter-accumulate."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


def xnor_popcount_gemm(const uint64_t[:, ::1] x, const uint64_t[:, ::1] w, Py_ssize_t cols):
    cdef Py_ssize_t n_rows = x.shape[0]
    cdef Py_ssize_t n_out = w.shape[0]
    cdef Py_ssize_t n_words = x.shape[1]
    cdef Py_ssize_t i, j, t, last = n_words - 1
    cdef int tail = cols % 64
    cdef uint64_t last_mask = (<uint64_t>1 << tail) - 1 if tail else ~(<uint64_t>0)
    cdef int64_t matches
    out = np.empty((n_rows, n_out), dtype=np.int64)
    cdef int64_t[:, ::1] res = out
    if n_words == 0:
        res[:, :] = 0
        return out
    with nogil:
        for i in range(n_rows):
            for j in range(n_out):
                matches = 0
                for t in range(last):
                    matches += __builtin_popcountll(~(x[i, t] ^ w[j, t]))
                matches += __builtin_popcountll(~(x[i, last] ^ w[j, last]) & last_mask)
                res[i, j] = 2 * matches - cols
    return out


def coo_scatter(const double[:, ::1] x, const cnp.int64_t[::1] rows,
                const cnp.int64_t[::1] cols, const double[::1] values, Py_ssize_t n_out):
    cdef Py_ssize_t n_tok = x.shape[0]
    cdef Py_ssize_t k = values.shape[0]
    cdef Py_ssize_t i, t, r, c
    cdef double v
    out = np.zeros((n_tok, n_out), dtype=np.float64)
    cdef double[:, ::1] res = out
    with nogil:
        for i in range(n_tok):
            for t in range(k):
                res[i, cols[t]] += x[i, rows[t]] * values[t]
    return out
