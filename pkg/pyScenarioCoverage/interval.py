"""
Vectorized interval arithmetic. An interval array is a pair (lo, hi) of numpy arrays of equal shape; every function
returns the pair enclosing the image of all combinations of its operands.
"""

import numpy as np

TWO_PI = 2 * np.pi


def i_add(a, b):
    return a[0] + b[0], a[1] + b[1]


def i_sub(a, b):
    return a[0] - b[1], a[1] - b[0]


def i_neg(a):
    return -a[1], -a[0]


def i_scale(a, k: float):
    if k >= 0:
        return k * a[0], k * a[1]
    return k * a[1], k * a[0]


def i_mul(a, b):
    products = np.stack([a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]])
    return products.min(axis=0), products.max(axis=0)


def i_square(a):
    lo, hi = np.asarray(a[0], dtype=float), np.asarray(a[1], dtype=float)
    low = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(lo * lo, hi * hi))
    return low, np.maximum(lo * lo, hi * hi)


def i_abs(a):
    lo, hi = np.asarray(a[0], dtype=float), np.asarray(a[1], dtype=float)
    low = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(np.abs(lo), np.abs(hi)))
    return low, np.maximum(np.abs(lo), np.abs(hi))


def i_hull(a, b):
    return np.minimum(a[0], b[0]), np.maximum(a[1], b[1])


def i_cos(a):
    lo, hi = np.asarray(a[0], dtype=float), np.asarray(a[1], dtype=float)
    c_lo, c_hi = np.cos(lo), np.cos(hi)
    low, high = np.minimum(c_lo, c_hi), np.maximum(c_lo, c_hi)
    # maxima at 2k*pi, minima at (2k+1)*pi
    has_max = np.ceil(lo / TWO_PI) <= np.floor(hi / TWO_PI)
    has_min = np.ceil((lo - np.pi) / TWO_PI) <= np.floor((hi - np.pi) / TWO_PI)
    full = hi - lo >= TWO_PI
    high = np.where(has_max | full, 1.0, high)
    low = np.where(has_min | full, -1.0, low)
    return low, high


def i_sin(a):
    return i_cos((np.asarray(a[0], dtype=float) - np.pi / 2, np.asarray(a[1], dtype=float) - np.pi / 2))


def i_tan(a):
    """tan on intervals inside (-pi/2, pi/2), where it is increasing."""
    lo, hi = np.asarray(a[0], dtype=float), np.asarray(a[1], dtype=float)
    if np.any(lo <= -np.pi / 2) or np.any(hi >= np.pi / 2):
        raise ValueError("Error : interval tan needs bounds inside (-pi/2, pi/2)")
    return np.tan(lo), np.tan(hi)


def i_clip(a, lower, upper):
    return np.clip(a[0], lower, upper), np.clip(a[1], lower, upper)
