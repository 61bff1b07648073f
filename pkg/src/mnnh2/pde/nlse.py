"""Ground state of the periodic cubic nonlinear Schrodinger equation.

Solves ``-u'' + V u + beta u^3 = E u`` on ``[0, 1)`` with ``int u^2 = 1`` and
``int u > 0`` by the normalized gradient flow with a backward-Euler step::

    (I + tau (-D2 + diag(V) + beta diag(u_n^2))) u* = u_n,    u_{n+1} = u* / ||u*||

``D2`` is the dense Fourier second-derivative matrix, so diffusion is spectral
and implicit while the cubic coefficient is frozen at the previous iterate.
"""

from __future__ import annotations

import numpy as np

from .problems import ProblemSpec
from .spectral import second_derivative_matrix


class ConvergenceError(RuntimeError):
    """A solver exhausted its iteration budget or failed its residual check."""


def _normalize(u: np.ndarray, h: float) -> np.ndarray:
    u = u / np.sqrt(h * np.sum(u * u, axis=-1, keepdims=True))
    return u * np.where(np.sum(u, axis=-1, keepdims=True) < 0, -1.0, 1.0)


def nlse_residual(u: np.ndarray, V: np.ndarray, spec: ProblemSpec) -> tuple:
    """Return ``(||r||, E)`` with ``r = -D2 u + V u + beta u^3 - E u`` and ``E`` the Rayleigh quotient.

    Norms use grid quadrature ``sqrt(h sum r^2)``.
    """
    D2 = second_derivative_matrix(spec.N, spec.length)
    Hu = -(u @ D2.T) + V * u + spec.beta * u**3
    E = np.sum(u * Hu, axis=-1) / np.sum(u * u, axis=-1)
    r = Hu - E[..., None] * u
    return np.sqrt(spec.h * np.sum(r * r, axis=-1)), E


def solve_nlse(V: np.ndarray, spec: ProblemSpec, u0: np.ndarray = None) -> np.ndarray:
    """Ground state ``u`` for one potential ``(N,)`` or a batch ``(count, N)``.

    Batched inputs are iterated together; each sample stops updating once its
    successive change drops below ``spec.tol``.

    Raises
    ------
    ConvergenceError
        If some sample has not converged after ``spec.max_steps`` steps.
    """
    V = np.asarray(V, dtype=np.float64)
    single = V.ndim == 1
    V = np.atleast_2d(V)
    if V.shape[-1] != spec.N:
        raise ValueError(f"potential has {V.shape[-1]} points, spec expects N={spec.N}")
    h = spec.h
    A0 = np.eye(spec.N) - spec.tau * second_derivative_matrix(spec.N, spec.length)
    u = np.ones_like(V) if u0 is None else np.broadcast_to(np.asarray(u0, np.float64), V.shape).copy()
    u = _normalize(u, h)
    active = np.arange(len(V))
    for _ in range(spec.max_steps):
        ua, Va = u[active], V[active]
        A = A0[None] + np.einsum("ij,bj->bij", np.eye(spec.N), spec.tau * (Va + spec.beta * ua * ua))
        new = _normalize(np.linalg.solve(A, ua[..., None])[..., 0], h)
        change = np.max(np.abs(new - ua), axis=-1)
        u[active] = new
        active = active[change >= spec.tol]
        if active.size == 0:
            break
    else:
        res, _ = nlse_residual(u[active], V[active], spec)
        raise ConvergenceError(f"gradient flow did not converge in {spec.max_steps} steps for "
                               f"{active.size} sample(s); max residual {res.max():.3e}")
    return u[0] if single else u
