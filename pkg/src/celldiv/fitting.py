"""Least-squares slope fits on log-log data."""

from __future__ import annotations

import math

import numpy as np


def fit_loglog_slope(xs, ys) -> tuple[float, float]:
    """Slope of log(y) against log(x) with an approximate 95% half-width.

    Needs at least two points; the half-width is 1.96 times the ordinary
    least-squares standard error (zero when only two points are given).
    """
    x = np.log(np.asarray(xs, dtype=float))
    y = np.log(np.asarray(ys, dtype=float))
    if x.size != y.size or x.size < 2:
        raise ValueError("slope fit needs at least two (x, y) pairs")
    xm = x - x.mean()
    sxx = float(np.dot(xm, xm))
    if sxx == 0.0:
        raise ValueError("slope fit needs distinct x values")
    slope = float(np.dot(xm, y) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    dof = x.size - 2
    if dof <= 0:
        return slope, 0.0
    se = math.sqrt(float(np.dot(resid, resid)) / dof / sxx)
    return slope, 1.96 * se
