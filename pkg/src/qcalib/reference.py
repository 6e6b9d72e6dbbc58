"""Brute-force reference computations for the test and acceptance suites.

These deliberately avoid the library's own code paths: plain Python sorting
and full objective scans, quadratic where that keeps them obviously right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["OracleResult", "pinball_argmin_scan", "sorted_left_quantile"]


def _check(values, tau: float) -> tuple[list[float], float]:
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("empty value set")
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie strictly inside (0, 1), got {tau}")
    return vals, tau


def sorted_left_quantile(values, tau: float) -> float:
    """Left tau-quantile by explicit rank: sort ascending, take the element
    at 1-based rank ceil(tau * m), realized as the first k with k/m >= tau
    so that float rounding of the product cannot push the rank off by one."""
    vals, tau = _check(values, tau)
    ordered = sorted(vals)
    m = len(ordered)
    for k, v in enumerate(ordered, start=1):
        if k / m >= tau:
            return v
    return ordered[-1]  # unreachable while tau < 1


@dataclass(frozen=True)
class OracleResult:
    """Minimizer of the empirical pinball objective plus the scanned curve."""

    value: float
    objective_curve: tuple[tuple[float, float], ...]


def pinball_argmin_scan(values, tau: float) -> OracleResult:
    """Evaluate the average pinball loss at every distinct stored value and
    return the smallest candidate attaining the minimum.

    Objectives are accumulated with ``math.fsum``. Adjacent candidates whose
    exact objectives tie can still differ by rounding noise, so anything
    within a tiny relative band of the minimum counts as tied and the
    smallest such candidate wins; the band sits far below any non-tie gap
    for reasonably separated values.
    """
    vals, tau = _check(values, tau)
    m = len(vals)
    candidates = sorted(set(vals))
    curve = []
    for c in candidates:
        terms = [(1.0 - tau) * (c - v) if c > v else tau * (v - c) for v in vals]
        curve.append((c, math.fsum(terms) / m))
    best = min(obj for _, obj in curve)
    scale = max(1.0, abs(candidates[0]), abs(candidates[-1]))
    tolerance = 1e-12 * scale
    value = next(c for c, obj in curve if obj <= best + tolerance)
    return OracleResult(value=value, objective_curve=tuple(curve))
