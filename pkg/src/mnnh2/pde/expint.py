"""Exponential integrals on the negative axis.

``Ei(x)`` for ``x < 0`` equals ``-E1(-x)``. ``E1`` is evaluated by its power
series for arguments up to 1 and by the continued fraction (modified Lentz)
beyond, which keeps both branches accurate to near machine precision.
"""

from __future__ import annotations

import numpy as np

EULER_GAMMA = 0.57721566490153286061
_SERIES_CUTOFF = 1.0
_TINY = 1e-300


def _e1_series(t: np.ndarray) -> np.ndarray:
    total = np.zeros_like(t)
    term = np.ones_like(t)
    for k in range(1, 40):
        term = term * (-t) / k
        total -= term / k
    return -EULER_GAMMA - np.log(t) + total


def _e1_contfrac(t: np.ndarray) -> np.ndarray:
    b = t + 1.0
    c = np.full_like(t, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, 400):
        an = -float(i * i)
        b = b + 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h = h * delta
        if np.all(np.abs(delta - 1.0) < 1e-16):
            break
    return h * np.exp(-t)


def exp1(t) -> np.ndarray:
    """``E1(t) = int_t^inf exp(-s)/s ds`` for ``t > 0`` (elementwise)."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= 0):
        raise ValueError("E1 is only evaluated for positive arguments")
    out = np.empty_like(t)
    small = t <= _SERIES_CUTOFF
    if np.any(small):
        out[small] = _e1_series(t[small])
    if np.any(~small):
        out[~small] = _e1_contfrac(t[~small])
    return out


def exp_integral_ei(x) -> np.ndarray:
    """``Ei(x)`` for negative real ``x`` (elementwise)."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x >= 0):
        raise ValueError("Ei is only implemented for negative arguments")
    return -exp1(-x)


def exp1_antiderivative(t) -> np.ndarray:
    """``G(t) = t E1(t) - exp(-t)``, so that ``G' = E1``; ``G(0) = -1``."""
    t = np.asarray(t, dtype=np.float64)
    out = np.full_like(t, -1.0)
    pos = t > 0
    if np.any(pos):
        tp = t[pos]
        out[pos] = tp * exp1(tp) - np.exp(-tp)
    return out
