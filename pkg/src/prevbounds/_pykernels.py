"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np

_DAY_SPAN = 1 << 22
_DAY_OFFSET = 1 << 21


def _composite(person, day):
    return person.astype(np.int64) * _DAY_SPAN + (day.astype(np.int64) + _DAY_OFFSET)


def collapse_max(a, b, v):
    n = len(a)
    if n == 0:
        return a[:0].copy(), b[:0].copy(), v[:0].copy()
    start = np.ones(n, dtype=bool)
    start[1:] = (a[1:] != a[:-1]) | (b[1:] != b[:-1])
    idx = np.flatnonzero(start)
    return a[idx].copy(), b[idx].copy(), np.maximum.reduceat(v, idx).astype(np.int8)


def window_flags(t_person, t_day, t_pos, q_person, q_lo, q_hi):
    keys = _composite(t_person, t_day)
    left = np.searchsorted(keys, _composite(q_person, q_lo), side="left")
    right = np.searchsorted(keys, _composite(q_person, q_hi), side="right")
    cum = np.concatenate(([0], np.cumsum(np.asarray(t_pos, dtype=np.int64))))
    tested = right > left
    positive = (cum[right] - cum[left]) > 0
    return tested, positive


def retest_starts(person, day):
    n = len(person)
    if n < 2:
        return np.zeros(0, dtype=np.int64)
    nxt = (person[1:] == person[:-1]) & (day[1:] == day[:-1] + 1)
    has_next = np.zeros(n, dtype=bool)
    has_next[:-1] = nxt
    has_prev = np.zeros(n, dtype=bool)
    has_prev[1:] = nxt
    return np.flatnonzero(has_next & ~has_prev).astype(np.int64)


def assignment_counts(class_sizes):
    sizes = [int(s) for s in class_sizes]
    total = sum(sizes)
    if total > 20:
        raise ValueError("too many units to enumerate")
    masks = np.arange(1 << total, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(total, dtype=np.int64)) & 1).astype(np.int64)
    out = np.zeros((len(masks), len(sizes)), dtype=np.int64)
    start = 0
    for c, w in enumerate(sizes):
        out[:, c] = bits[:, start:start + w].sum(axis=1)
        start += w
    return out
