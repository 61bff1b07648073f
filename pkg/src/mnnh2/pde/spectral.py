"""Fourier differentiation on a uniform periodic grid."""

from __future__ import annotations

import numpy as np


def second_derivative_matrix(N: int, length: float) -> np.ndarray:
    """Dense spectral second-derivative matrix for ``N`` periodic nodes.

    The matrix is the symmetric circulant ``F^-1 diag(-k^2) F`` with
    wavenumbers ``k = 2 pi n / length``.
    """
    k = 2 * np.pi * np.fft.fftfreq(N, d=length / N)
    col = np.real(np.fft.ifft(-(k**2)))
    idx = (np.arange(N)[:, None] - np.arange(N)[None, :]) % N
    return col[idx]
