"""Electron density of the linear Kohn-Sham map ``V -> rho``.

The Hamiltonian ``-1/2 D2 + diag(V)`` is discretized pseudo-spectrally on the
periodic grid of ``[-1, 1)``. The ``n_e`` lowest eigenvectors are scaled to unit
norm under grid quadrature, so ``h * sum(rho) = n_e``.
"""

from __future__ import annotations

import numpy as np

from .problems import ProblemSpec
from .spectral import second_derivative_matrix

GAP_TOL = 1e-10


class DegenerateGapError(RuntimeError):
    """The highest occupied and lowest unoccupied levels coincide."""


def ks_hamiltonian(V: np.ndarray, spec: ProblemSpec) -> np.ndarray:
    return -0.5 * second_derivative_matrix(spec.N, spec.length) + np.diag(V)


def solve_ks_states(V: np.ndarray, spec: ProblemSpec) -> tuple:
    """Return ``(eps, psi)``: the ``n_e`` lowest levels and states, ``psi`` of shape ``(n_e, N)``."""
    V = np.asarray(V, dtype=np.float64)
    if V.shape != (spec.N,):
        raise ValueError(f"potential must have shape ({spec.N},), got {V.shape}")
    if spec.n_e >= spec.N:
        raise ValueError("n_e must be smaller than N")
    w, Q = np.linalg.eigh(ks_hamiltonian(V, spec))
    gap = w[spec.n_e] - w[spec.n_e - 1]
    if gap < GAP_TOL:
        raise DegenerateGapError(f"occupied/unoccupied gap {gap:.3e} below {GAP_TOL}")
    psi = Q[:, : spec.n_e].T / np.sqrt(spec.h)
    return w[: spec.n_e], psi


def ks_residual(V: np.ndarray, eps: np.ndarray, psi: np.ndarray, spec: ProblemSpec) -> np.ndarray:
    """Per-state ``||H psi_i - eps_i psi_i||`` under grid quadrature."""
    r = psi @ ks_hamiltonian(V, spec).T - eps[:, None] * psi
    return np.sqrt(spec.h * np.sum(r * r, axis=-1))


def solve_ks(V: np.ndarray, spec: ProblemSpec) -> np.ndarray:
    """Density ``rho = sum_i psi_i^2`` over the ``n_e`` lowest states."""
    _, psi = solve_ks_states(V, spec)
    return np.sum(psi * psi, axis=0)
