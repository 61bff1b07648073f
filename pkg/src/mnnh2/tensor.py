"""Column-major reshapes and spatial padding for layer tensors.

Layer data are plain numpy arrays laid out as ``(channels, *spatial)``,
optionally preceded by batch axes. Every reshape here follows column-major
(Fortran) index order on the non-batch axes, regardless of how numpy stores
the array in memory.
"""

from __future__ import annotations

from math import prod

import numpy as np


class ShapeError(ValueError):
    """Raised when a tensor does not have the geometry an operation needs."""


def fortran_reshape(t: np.ndarray, shape, lead: int = 0) -> np.ndarray:
    """Reshape the trailing axes of ``t`` in column-major order.

    The first ``lead`` axes are batch axes and are left alone.
    """
    t = np.asarray(t)
    shape = tuple(int(s) for s in shape)
    tail = t.shape[lead:]
    if prod(tail) != prod(shape):
        raise ShapeError(f"cannot reshape {tail} into {shape}")
    head = t.shape[:lead]
    # reversing the axes turns a column-major reshape into a row-major one
    rev = tuple(range(lead)) + tuple(range(t.ndim - 1, lead - 1, -1))
    out = np.transpose(t, rev).reshape(head + shape[::-1])
    rev_out = tuple(range(lead)) + tuple(range(out.ndim - 1, lead - 1, -1))
    return np.transpose(out, rev_out)


def reshape(t: np.ndarray, n1: int, n2: int, lead: int = 0) -> np.ndarray:
    """``Reshape[n1, n2]``: column-major reshape to an ``n1 x n2`` 2-tensor.

    A vector of length ``n`` is treated as a ``1 x n`` tensor, which gives the
    same element order.

    >>> reshape(np.arange(4.0), 2, 2)
    array([[0., 2.],
           [1., 3.]])
    """
    return fortran_reshape(t, (n1, n2), lead)


def reshape_m_2d(t: np.ndarray, a: int, r: int, n1: int, n2: int, lead: int = 0) -> np.ndarray:
    """``ReshapeM[a, r, n1, n2]``: ``(a*a*r, n1, n2) -> (r, a*n1, a*n2)``.

    Each fiber ``t[:, j, k]`` is reshaped column-major to ``r x a x a`` and
    becomes spatial block ``(j, k)`` of the output, so fiber entry
    ``c + r*(p1 + a*p2)`` lands at ``(c, a*j + p1, a*k + p2)``.
    """
    t = np.asarray(t)
    if t.shape[lead:] != (a * a * r, n1, n2):
        raise ShapeError(f"ReshapeM[{a},{r},{n1},{n2}] expects {(a * a * r, n1, n2)}, got {t.shape[lead:]}")
    head = t.shape[:lead]
    # C-order split of the fiber axis gives (p2, p1, c)
    x = t.reshape(head + (a, a, r, n1, n2))
    x = np.moveaxis(x, (lead, lead + 1, lead + 2, lead + 3, lead + 4), (lead + 4, lead + 2, lead, lead + 1, lead + 3))
    return x.reshape(head + (r, n1 * a, n2 * a))


def reshape_t_2d(t: np.ndarray, a: int, r: int, n1: int, n2: int, lead: int = 0) -> np.ndarray:
    """``ReshapeT[a, r, n1, n2]``, the exact inverse of :func:`reshape_m_2d`."""
    t = np.asarray(t)
    if t.shape[lead:] != (r, a * n1, a * n2):
        raise ShapeError(f"ReshapeT[{a},{r},{n1},{n2}] expects {(r, a * n1, a * n2)}, got {t.shape[lead:]}")
    head = t.shape[:lead]
    x = t.reshape(head + (r, n1, a, n2, a))
    x = np.moveaxis(x, (lead + 4, lead + 2, lead, lead + 1, lead + 3), (lead, lead + 1, lead + 2, lead + 3, lead + 4))
    return x.reshape(head + (a * a * r, n1, n2))


def reshape_m(t: np.ndarray, a: int, r: int, n, lead: int = 0) -> np.ndarray:
    """Dimension-generic ReshapeM; ``n`` is the coarse spatial shape.

    In 1D this is the ordinary column-major ``Reshape[r, a*n]``.
    """
    n = tuple(n)
    if len(n) == 1:
        if np.shape(t)[lead:] != (a * r, n[0]):
            raise ShapeError(f"expected {(a * r, n[0])}, got {np.shape(t)[lead:]}")
        return fortran_reshape(t, (r, a * n[0]), lead)
    return reshape_m_2d(t, a, r, n[0], n[1], lead)


def reshape_t(t: np.ndarray, a: int, r: int, n, lead: int = 0) -> np.ndarray:
    """Inverse of :func:`reshape_m`."""
    n = tuple(n)
    if len(n) == 1:
        if np.shape(t)[lead:] != (r, a * n[0]):
            raise ShapeError(f"expected {(r, a * n[0])}, got {np.shape(t)[lead:]}")
        return fortran_reshape(t, (a * r, n[0]), lead)
    return reshape_t_2d(t, a, r, n[0], n[1], lead)


def pad(t: np.ndarray, mode: str, amount, lead: int = 0) -> np.ndarray:
    """Pad every spatial axis (all axes after the channel axis).

    ``amount`` is either one integer or one integer per spatial axis, added on
    both sides. ``mode`` is ``"periodic"`` (cyclic wrap) or ``"zero"``.
    """
    t = np.asarray(t)
    nspatial = t.ndim - lead - 1
    if nspatial < 1:
        raise ShapeError("pad needs a channel axis and at least one spatial axis")
    amounts = (int(amount),) * nspatial if np.isscalar(amount) else tuple(int(a) for a in amount)
    if len(amounts) != nspatial or min(amounts) < 0:
        raise ShapeError(f"bad pad amounts {amounts} for {nspatial} spatial axes")
    widths = [(0, 0)] * (lead + 1) + [(a, a) for a in amounts]
    if mode == "periodic":
        return np.pad(t, widths, mode="wrap")
    if mode == "zero":
        return np.pad(t, widths, mode="constant")
    raise ValueError(f"unknown padding mode {mode!r}")
