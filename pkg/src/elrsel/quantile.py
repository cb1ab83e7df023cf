"""Interpolated sample quantile on 1-based order statistics (R's default, type 7)."""

from __future__ import annotations

import math
from typing import Callable

from .errors import DomainError


def quantile_position(n: int, q: float) -> tuple[int, int, float]:
    """Return ``(lo, hi, h)`` with ``h = (n - 1) q + 1`` and its floor/ceiling."""
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"quantile level {q!r} outside [0, 1]")
    if n < 1 or (n < 2 and q not in (0.0, 1.0)):
        raise DomainError(f"need at least 2 values for quantile {q!r}, got {n}")
    h = (n - 1) * q + 1
    return math.floor(h), math.ceil(h), h


def interpolate(order_stat: Callable[[int], float], n: int, q: float) -> float:
    """Quantile from an order-statistic oracle ``order_stat(l)`` (1-based)."""
    lo, hi, h = quantile_position(n, q)
    x_lo = float(order_stat(lo))
    x_hi = x_lo if hi == lo else float(order_stat(hi))
    return x_lo + (h - lo) * (x_hi - x_lo)


def sample_quantile(sorted_values, q: float) -> float:
    """Quantile of an already sorted sequence."""
    return interpolate(lambda l: sorted_values[l - 1], len(sorted_values), q)
