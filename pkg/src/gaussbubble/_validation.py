"""Argument checks shared by the public entry points."""

import math

import numpy as np

from .errors import InvalidArgument, Unsupported


def check_m(m, allowed=(2, 3, 4)):
    if isinstance(m, bool) or not isinstance(m, (int, np.integer)):
        raise InvalidArgument(f"m must be an integer, got {m!r}")
    if m < 2:
        raise InvalidArgument(f"m must be >= 2, got {m}")
    if allowed is not None and m not in allowed:
        raise Unsupported(f"m={m} not supported here (allowed: {list(allowed)})")
    return int(m)


def check_volume_vector(a, m=None, tol=1e-12):
    """Validate a volume vector: positive entries summing to one."""
    try:
        a = np.asarray(a, dtype=float).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise InvalidArgument(f"volume vector is not numeric: {exc}") from None
    if a.size < 2:
        raise InvalidArgument("volume vector needs at least two entries")
    if m is not None and a.size != m:
        raise InvalidArgument(f"expected {m} volumes, got {a.size}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgument("volume vector has non-finite entries")
    if np.any(a <= 0.0):
        raise InvalidArgument("volumes must be strictly positive")
    if abs(math.fsum(a) - 1.0) > tol:
        raise InvalidArgument(f"volumes sum to {math.fsum(a):.15g}, not 1")
    return a


def check_zero_sum(b, m, tol=1e-12):
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.size != m:
        raise InvalidArgument(f"direction needs {m} entries, got {b.size}")
    if not np.all(np.isfinite(b)):
        raise InvalidArgument("direction has non-finite entries")
    if not np.any(b):
        raise InvalidArgument("direction must be nonzero")
    if abs(math.fsum(b)) > tol * max(1.0, float(np.max(np.abs(b)))):
        raise InvalidArgument("direction entries must sum to zero")
    return b
