"""Steady isotropic radiative transfer in a slab, integral form.

The mean intensity solves ``u = K (mu_s u + f)`` on ``[0, 1]`` with::

    (K g)(x) = int_0^1 1/2 E1(tau(x, y)) g(y) dy,    tau(x, y) = |int_y^x mu_t|

and ``E1(t) = -Ei(-t)``. Unknowns live at cell centers and ``mu_t`` is taken
piecewise constant per cell, so the optical depth is piecewise linear in
``y``. Each cell integral then has the closed form
``(G(tau_far) - G(tau_near)) / (2 mu_t)`` with ``G(t) = t E1(t) - exp(-t)``,
including the log-singular diagonal cell (integrated from ``tau = 0``).
"""

from __future__ import annotations

import numpy as np

from .expint import exp1_antiderivative
from .problems import ProblemSpec


class SingularSystemError(RuntimeError):
    """The transport system ``I - K diag(mu_s)`` is numerically singular."""


def rte_kernel_matrix(mu_t: np.ndarray, h: float) -> np.ndarray:
    """Collocation matrix of ``K`` for cell values ``mu_t`` (all positive) and cell width ``h``."""
    mu_t = np.asarray(mu_t, dtype=np.float64)
    if np.any(mu_t <= 0):
        raise ValueError("total attenuation must be positive")
    n = len(mu_t)
    edges = np.concatenate([[0.0], np.cumsum(mu_t * h)])  # optical depth at cell edges
    mid = edges[:-1] + 0.5 * mu_t * h
    # depth from center i to the near and far edge of cell j
    lo = np.abs(mid[:, None] - edges[None, :-1])
    hi = np.abs(mid[:, None] - edges[None, 1:])
    near, far = np.minimum(lo, hi), np.maximum(lo, hi)
    K = (exp1_antiderivative(far) - exp1_antiderivative(near)) / (2 * mu_t[None, :])
    half = 0.5 * mu_t * h
    K[np.arange(n), np.arange(n)] = (exp1_antiderivative(half) + 1.0) / mu_t
    return K


def solve_rte_1d(mu_s: np.ndarray, spec: ProblemSpec, return_system: bool = False):
    """Mean intensity ``u`` at cell centers for scattering coefficient ``mu_s``."""
    mu_s = np.asarray(mu_s, dtype=np.float64)
    if mu_s.shape != (spec.N,):
        raise ValueError(f"mu_s must have shape ({spec.N},), got {mu_s.shape}")
    if np.any(mu_s < 0):
        raise ValueError("scattering coefficient must be non-negative")
    K = rte_kernel_matrix(mu_s + spec.mu_a, spec.h)
    A = np.eye(spec.N) - K * mu_s[None, :]
    rhs = K @ np.full(spec.N, spec.f)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularSystemError(f"transport system condition number {cond:.3e}")
    u = np.linalg.solve(A, rhs)
    return (u, A, rhs) if return_system else u


def rte_residual(u: np.ndarray, mu_s: np.ndarray, spec: ProblemSpec) -> float:
    """Relative residual of the discrete transport system."""
    K = rte_kernel_matrix(mu_s + spec.mu_a, spec.h)
    rhs = K @ np.full(spec.N, spec.f)
    r = u - K @ (mu_s * u) - rhs
    return float(np.linalg.norm(r) / np.linalg.norm(rhs))
