# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled row-wise top-k selection.

Per row, a size-k min-heap ordered by (score asc, index desc) sweeps the
row: an element enters only when it beats the heap root, so the hot loop
is one comparison per element plus O(log k) work for the rare
replacements (expected O(m + k log k) per row).  The k winners are then
merge-sorted by (score desc, index asc).  Output is bit-identical to the
numpy fallback in _topk_np.
"""

import numpy as np

cimport numpy as cnp
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy

cnp.import_array()


cdef inline bint _weaker(double va, cnp.int64_t ia,
                         double vb, cnp.int64_t ib) noexcept nogil:
    """True when (va, ia) ranks below (vb, ib): lower score, or the same
    score with a higher index (ties prefer low indices)."""
    return va < vb or (va == vb and ia > ib)


cdef void _sift_down(double* hv, cnp.int64_t* hi,
                     Py_ssize_t k, Py_ssize_t root) noexcept nogil:
    cdef Py_ssize_t child
    cdef double v = hv[root]
    cdef cnp.int64_t i = hi[root]
    while True:
        child = 2 * root + 1
        if child >= k:
            break
        if child + 1 < k and _weaker(hv[child + 1], hi[child + 1],
                                     hv[child], hi[child]):
            child += 1
        if _weaker(hv[child], hi[child], v, i):
            hv[root] = hv[child]
            hi[root] = hi[child]
            root = child
        else:
            break
    hv[root] = v
    hi[root] = i


cdef void _merge_sort_desc(double* vals, cnp.int64_t* idx,
                           double* tmp_v, cnp.int64_t* tmp_i,
                           Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    """Sort vals[lo:hi] by (value desc, index asc); idx rides along."""
    cdef Py_ssize_t mid, a, b, out
    if hi - lo < 2:
        return
    mid = lo + (hi - lo) // 2
    _merge_sort_desc(vals, idx, tmp_v, tmp_i, lo, mid)
    _merge_sort_desc(vals, idx, tmp_v, tmp_i, mid, hi)
    a = lo
    b = mid
    out = lo
    while a < mid and b < hi:
        if vals[a] > vals[b] or (vals[a] == vals[b] and idx[a] < idx[b]):
            tmp_v[out] = vals[a]
            tmp_i[out] = idx[a]
            a += 1
        else:
            tmp_v[out] = vals[b]
            tmp_i[out] = idx[b]
            b += 1
        out += 1
    while a < mid:
        tmp_v[out] = vals[a]
        tmp_i[out] = idx[a]
        a += 1
        out += 1
    while b < hi:
        tmp_v[out] = vals[b]
        tmp_i[out] = idx[b]
        b += 1
        out += 1
    memcpy(vals + lo, tmp_v + lo, (hi - lo) * sizeof(double))
    memcpy(idx + lo, tmp_i + lo, (hi - lo) * sizeof(cnp.int64_t))


def topk_indices(scores, Py_ssize_t k):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] mat = \
        np.ascontiguousarray(scores, dtype=np.float64)
    cdef Py_ssize_t n = mat.shape[0]
    cdef Py_ssize_t m = mat.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=2, mode="c"] out = \
        np.empty((n, k), dtype=np.int64)
    if n == 0:
        return out
    cdef double* hv = <double*> malloc(k * sizeof(double))
    cdef cnp.int64_t* hi = <cnp.int64_t*> malloc(k * sizeof(cnp.int64_t))
    cdef double* tmp_v = <double*> malloc(k * sizeof(double))
    cdef cnp.int64_t* tmp_i = <cnp.int64_t*> malloc(k * sizeof(cnp.int64_t))
    if not (hv and hi and tmp_v and tmp_i):
        free(hv); free(hi); free(tmp_v); free(tmp_i)
        raise MemoryError()
    cdef double* row
    cdef Py_ssize_t r, c, j
    with nogil:
        for r in range(n):
            row = &mat[r, 0]
            for c in range(k):
                hv[c] = row[c]
                hi[c] = c
            for j in range(k // 2 - 1, -1, -1):
                _sift_down(hv, hi, k, j)
            for c in range(k, m):
                if _weaker(hv[0], hi[0], row[c], c):
                    hv[0] = row[c]
                    hi[0] = c
                    _sift_down(hv, hi, k, 0)
            _merge_sort_desc(hv, hi, tmp_v, tmp_i, 0, k)
            for c in range(k):
                out[r, c] = hi[c]
    free(hv); free(hi); free(tmp_v); free(tmp_i)
    return out
