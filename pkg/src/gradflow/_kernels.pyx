# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled dense/sparse matrix kernels with a fixed summation order.

Both kernels accumulate strictly left to right along the reduction axis
(ascending inner index), so results are bit-identical across runs, builds,
and thread counts.  The pure-Python fallback in ``_kernels_py`` implements
the same surface.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "compiled"


def matmul(double[:, ::1] a, double[:, ::1] b):
    """Dense product ``a @ b`` with ascending-k accumulation per entry."""
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t k = a.shape[1]
    cdef Py_ssize_t n = b.shape[1]
    if b.shape[0] != k:
        raise ValueError("inner dimensions do not match")
    out = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] c = out
    cdef Py_ssize_t i, p, j
    cdef double aip
    with nogil:
        for i in range(m):
            for p in range(k):
                aip = a[i, p]
                if aip != 0.0:
                    for j in range(n):
                        c[i, j] += aip * b[p, j]
    return out


def spmm(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
         const double[::1] data, double[:, ::1] b, Py_ssize_t rows):
    """Sparse-dense product: CSR ``(indptr, indices, data)`` times ``b``.

    Accumulates each output row in stored-column order (ascending within
    each row, by the CSR invariant), left to right.
    """
    cdef Py_ssize_t n = b.shape[1]
    out = np.zeros((rows, n), dtype=np.float64)
    cdef double[:, ::1] c = out
    cdef Py_ssize_t i, jj, j
    cdef cnp.int64_t col
    cdef double v
    with nogil:
        for i in range(rows):
            for jj in range(indptr[i], indptr[i + 1]):
                col = indices[jj]
                v = data[jj]
                for j in range(n):
                    c[i, j] += v * b[col, j]
    return out
