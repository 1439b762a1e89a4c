# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled loops over sorted columnar arrays.

Every function here has a twin with the same signature in ``_pykernels``.
Inputs are assumed sorted as documented; the ``kernels`` wrapper guarantees it.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef cnp.int8_t i8


def collapse_max(const i64[:] a, const i64[:] b, const i8[:] v):
    """Collapse runs of equal ``(a, b)`` (input sorted by a then b), keeping max ``v``."""
    cdef Py_ssize_t n = a.shape[0], i, k = -1
    out_a = np.empty(n, dtype=np.int64)
    out_b = np.empty(n, dtype=np.int64)
    out_v = np.empty(n, dtype=np.int8)
    cdef i64[:] oa = out_a
    cdef i64[:] ob = out_b
    cdef i8[:] ov = out_v
    for i in range(n):
        if k >= 0 and a[i] == oa[k] and b[i] == ob[k]:
            if v[i] > ov[k]:
                ov[k] = v[i]
        else:
            k += 1
            oa[k] = a[i]
            ob[k] = b[i]
            ov[k] = v[i]
    return out_a[:k + 1], out_b[:k + 1], out_v[:k + 1]


cdef inline Py_ssize_t _lower(const i64[:] p, const i64[:] d, Py_ssize_t n,
                              i64 qp, i64 qd) nogil:
    # first index with (p, d) >= (qp, qd)
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if p[mid] < qp or (p[mid] == qp and d[mid] < qd):
            lo = mid + 1
        else:
            hi = mid
    return lo


def window_flags(const i64[:] t_person, const i64[:] t_day, const i8[:] t_pos,
                 const i64[:] q_person, const i64[:] q_lo, const i64[:] q_hi):
    """For each query, whether any test (and any positive) falls in ``[lo, hi]``.

    Tests must be sorted by (person, day).
    """
    cdef Py_ssize_t n = t_person.shape[0], m = q_person.shape[0], j, i
    tested = np.zeros(m, dtype=np.int8)
    positive = np.zeros(m, dtype=np.int8)
    cdef i8[:] tv = tested
    cdef i8[:] pv = positive
    cdef i64 qp, hi
    with nogil:
        for j in range(m):
            qp = q_person[j]
            hi = q_hi[j]
            i = _lower(t_person, t_day, n, qp, q_lo[j])
            while i < n and t_person[i] == qp and t_day[i] <= hi:
                tv[j] = 1
                if t_pos[i]:
                    pv[j] = 1
                    break
                i += 1
    return tested.astype(bool), positive.astype(bool)


def retest_starts(const i64[:] person, const i64[:] day):
    """Indices ``i`` with a test on day+1 and none on day-1 for the same person.

    Input is the collapsed (person, day) index, sorted and unique.
    """
    cdef Py_ssize_t n = person.shape[0], i
    out = np.empty(n, dtype=np.int64)
    cdef i64[:] o = out
    cdef Py_ssize_t k = 0
    with nogil:
        for i in range(n - 1):
            if person[i + 1] != person[i] or day[i + 1] != day[i] + 1:
                continue
            if i > 0 and person[i - 1] == person[i] and day[i - 1] == day[i] - 1:
                continue
            o[k] = i
            k += 1
    return out[:k]


def assignment_counts(class_sizes):
    """Enumerate every 0/1 assignment over the listed classes of units.

    Returns an ``(n_assignments, n_classes)`` array of per-class infected counts,
    one row per assignment, in mask order.
    """
    cdef int n_classes = len(class_sizes)
    cdef int total = sum(class_sizes)
    if total > 20:
        raise ValueError("too many units to enumerate")
    cdef i64 n_masks = (<i64>1) << total
    out = np.zeros((n_masks, n_classes), dtype=np.int64)
    cdef i64[:, :] o = out
    cdef i64[:] shift = np.zeros(n_classes, dtype=np.int64)
    cdef i64[:] width = np.asarray(class_sizes, dtype=np.int64)
    cdef int c
    cdef i64 s = 0, mask, part
    for c in range(n_classes):
        shift[c] = s
        s += width[c]
    with nogil:
        for mask in range(n_masks):
            for c in range(n_classes):
                part = (mask >> shift[c]) & (((<i64>1) << width[c]) - 1)
                o[mask, c] = _popcount(part)
    return out


cdef inline i64 _popcount(i64 x) nogil:
    cdef i64 k = 0
    while x:
        x &= x - 1
        k += 1
    return k
