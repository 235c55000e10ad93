"""Calibrated additive noise for grid functions.

Noise is white across nodes and rescaled so the L2 distance between the
clean and perturbed functions equals the requested level exactly. That
makes noise-level sweeps sharp: the injected level is the achieved level,
not an upper bound.
"""

from __future__ import annotations

import numpy as np

from .grid import Grid, GridFunction, trapezoid


def white_noise(grid: Grid, seed: int) -> np.ndarray:
    """Unit-variance node samples from a seeded generator."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal(grid.intervals + 1)


def perturbed(f: GridFunction, level: float, seed: int) -> GridFunction:
    """Return ``f`` plus white noise scaled to exact L2 distance ``level``."""
    if level < 0:
        raise ValueError("noise level must be nonnegative")
    if level == 0.0:
        return f
    z = white_noise(f.grid, seed)
    z_norm = np.sqrt(max(trapezoid(z * z, f.grid), 0.0))
    if z_norm == 0.0:
        raise RuntimeError("degenerate noise draw")
    return f.with_values(f.values + (level / z_norm) * z)
