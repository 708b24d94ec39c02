# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Gaussian-kernel loops.

Every routine has a numpy twin in ``_fallback`` with the same signature.
Each output row is produced in two passes: scaled squared distances into a
contiguous buffer, then ``exp`` over that buffer.  The second pass is a
plain loop the compiler vectorizes against the SIMD ``exp`` of the C
library when one is available.  Rows are independent, so results do not
depend on the thread count.
"""
import numpy as np

from cython.parallel cimport prange, threadid
from libc.math cimport exp
from libc.stdlib cimport free, malloc

# anchors per block in gaussian_expand
DEF BLOCK = 512
# tile edge for the symmetric mirror copy
DEF TILE = 64


cdef inline void _scaled_sqdist(const double* x, const double* A, Py_ssize_t q, Py_ssize_t d,
                                double scale, double* out) noexcept nogil:
    cdef Py_ssize_t j, k
    cdef double acc, diff
    if d == 1:
        for j in range(q):
            diff = x[0] - A[j]
            out[j] = scale * (diff * diff)
        return
    for j in range(q):
        acc = 0.0
        for k in range(d):
            diff = x[k] - A[j * d + k]
            acc = acc + diff * diff
        out[j] = scale * acc


cdef inline void _exp_inplace(double* v, Py_ssize_t q) noexcept nogil:
    cdef Py_ssize_t j
    for j in range(q):
        v[j] = exp(v[j])


def gaussian_gram(const double[:, ::1] X, const double[:, ::1] Y, double sigma,
                  int num_threads=1):
    cdef Py_ssize_t n = X.shape[0], m = Y.shape[0], d = X.shape[1]
    cdef Py_ssize_t i
    cdef double scale = -0.5 / (sigma * sigma)
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] K = out
    if n == 0 or m == 0:
        return out
    for i in prange(n, nogil=True, num_threads=num_threads, schedule="static"):
        _scaled_sqdist(&X[i, 0], &Y[0, 0], m, d, scale, &K[i, 0])
        _exp_inplace(&K[i, 0], m)
    return out


def gaussian_gram_sym(const double[:, ::1] X, double sigma, int num_threads=1):
    """Upper triangle computed row by row, then mirrored, so the result is exactly symmetric."""
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, bi, bj, ihi, jhi, jlo
    cdef double scale = -0.5 / (sigma * sigma)
    out = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] K = out
    if n == 0:
        return out
    for i in prange(n, nogil=True, num_threads=num_threads, schedule="dynamic"):
        K[i, i] = 1.0
        if i + 1 < n:
            _scaled_sqdist(&X[i, 0], &X[i + 1, 0], n - i - 1, d, scale, &K[i, i + 1])
            _exp_inplace(&K[i, i + 1], n - i - 1)
    for bi in prange(0, n, TILE, nogil=True, num_threads=num_threads, schedule="dynamic"):
        ihi = bi + TILE
        if ihi > n:
            ihi = n
        for bj in range(bi, n, TILE):
            jhi = bj + TILE
            if jhi > n:
                jhi = n
            for i in range(bi, ihi):
                jlo = bj
                if jlo < i + 1:
                    jlo = i + 1
                for j in range(jlo, jhi):
                    K[j, i] = K[i, j]
    return out


def gaussian_expand(const double[:, ::1] X, const double[:, ::1] A,
                    const double[::1] w, double sigma, int num_threads=1):
    """out[i] = sum_j w[j] * exp(-|X[i] - A[j]|^2 / (2 sigma^2)) without forming the matrix."""
    cdef Py_ssize_t p = X.shape[0], q = A.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, start, width
    cdef double scale = -0.5 / (sigma * sigma)
    cdef double s
    cdef double* buf
    cdef double* mine
    cdef int nt = num_threads if num_threads > 0 else 1
    out = np.zeros(p, dtype=np.float64)
    cdef double[::1] f = out
    if p == 0 or q == 0:
        return out
    buf = <double*> malloc(nt * BLOCK * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    try:
        for i in prange(p, nogil=True, num_threads=nt, schedule="static"):
            mine = buf + threadid() * BLOCK
            s = 0.0
            start = 0
            while start < q:
                width = q - start
                if width > BLOCK:
                    width = BLOCK
                _scaled_sqdist(&X[i, 0], &A[start, 0], width, d, scale, mine)
                _exp_inplace(mine, width)
                for j in range(width):
                    s = s + w[start + j] * mine[j]
                start = start + width
            f[i] = s
    finally:
        free(buf)
    return out
