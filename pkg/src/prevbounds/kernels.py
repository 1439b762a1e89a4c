"""Backend selection for the array kernels.

The compiled extension is used when it was built; otherwise, or when the
``PREVBOUNDS_PURE`` environment variable is set to a non-empty value, the numpy
implementation is used. ``BACKEND`` reports which one is active.
"""

import os

import numpy as np

from . import _pykernels

if os.environ.get("PREVBOUNDS_PURE"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"


def backends():
    """Return the available implementations keyed by name."""
    out = {"python": _pykernels}
    try:
        from . import _kernels

        out["compiled"] = _kernels
    except ImportError:
        pass
    return out


def _i64(x):
    return np.ascontiguousarray(x, dtype=np.int64)


def _i8(x):
    return np.ascontiguousarray(x, dtype=np.int8)


def collapse_max(a, b, v, impl=None):
    """Sort by ``(a, b)`` and keep one row per key with the maximum ``v``."""
    impl = impl or _impl
    a, b, v = _i64(a), _i64(b), _i8(v)
    order = np.lexsort((b, a))
    return impl.collapse_max(a[order], b[order], v[order])


def window_flags(t_person, t_day, t_pos, q_person, q_lo, q_hi, impl=None):
    """Per query: any test, and any positive test, for the person with day in ``[lo, hi]``.

    ``t_person``/``t_day`` must already be sorted by (person, day).
    """
    impl = impl or _impl
    return impl.window_flags(
        _i64(t_person), _i64(t_day), _i8(t_pos), _i64(q_person), _i64(q_lo), _i64(q_hi)
    )


def retest_starts(person, day, impl=None):
    impl = impl or _impl
    return impl.retest_starts(_i64(person), _i64(day))


def assignment_counts(class_sizes, impl=None):
    impl = impl or _impl
    return impl.assignment_counts(list(class_sizes))
