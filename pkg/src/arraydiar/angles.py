"""Circular-angle helpers used throughout the toolkit.

All angles are radians, normalized to [0, 2*pi); distances live in [0, pi].
"""

from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Normalize an angle to [0, 2*pi)."""
    return float(theta) % TWO_PI


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    return np.asarray(theta, dtype=float) % TWO_PI


def circular_distance(a: float, b: float) -> float:
    """Shortest angular distance between two directions, in [0, pi]."""
    d = abs(wrap_angle(a) - wrap_angle(b)) % TWO_PI
    return min(d, TWO_PI - d)


def circular_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.abs(wrap_angles(a) - wrap_angles(b)) % TWO_PI
    return np.minimum(d, TWO_PI - d)


def circular_mean(angles: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Weighted circular mean; undefined (raises) for zero resultant."""
    angles = np.asarray(angles, dtype=float)
    if weights is None:
        weights = np.ones_like(angles)
    z = np.sum(np.asarray(weights, dtype=float) * np.exp(1j * angles))
    if abs(z) < 1e-15:
        raise ValueError("circular mean undefined: zero resultant")
    return wrap_angle(math.atan2(z.imag, z.real))


def circular_std(angles: np.ndarray) -> float:
    """Circular standard deviation sqrt(-2 ln R); 0 for a single angle."""
    angles = np.asarray(angles, dtype=float)
    if angles.size == 0:
        return 0.0
    r = abs(np.mean(np.exp(1j * angles)))
    r = min(max(r, 1e-12), 1.0)
    return math.sqrt(max(0.0, -2.0 * math.log(r)))


def circular_median(angles: np.ndarray) -> float:
    """Member angle minimizing the summed circular distance to all members.

    Ties resolve to the smallest summed distance, then the smallest angle.
    """
    angles = wrap_angles(np.asarray(angles, dtype=float))
    if angles.size == 0:
        raise ValueError("circular median of empty set")
    diffs = np.abs(angles[:, None] - angles[None, :]) % TWO_PI
    sums = np.minimum(diffs, TWO_PI - diffs).sum(axis=1)
    order = np.lexsort((angles, sums))
    return float(angles[order[0]])
