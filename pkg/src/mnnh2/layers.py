"""Locally connected and convolutional layers with analytic gradients.

A layer maps ``(batch, alpha, *Nx)`` to ``(batch, alpha_out, *Nx_out)``::

    out[c', i] = act( sum_{c, k} W[i, c', c, k] * x_pad[c, i*s + k] + b[c', i] )

where ``k`` runs over the window and ``x_pad`` is the input padded by
``(w - 1) // 2`` on each side for kernel layers (no padding otherwise).
Locally connected weights carry the output position ``i``; convolutional
weights do not.

Internally every layer gathers input windows through a precomputed index
table, so 1D, 2D, strides and both padding modes share one code path.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from math import prod

import numpy as np

KINDS = ("restriction", "kernel", "interpolation")
SHARINGS = ("local", "conv")
ACTIVATIONS = ("linear", "relu")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    sharing: str
    Nx: tuple
    alpha: int
    alpha_out: int
    Nx_out: tuple = None
    w: tuple = None
    activation: str = "linear"
    padding: str = "periodic"
    bias: bool = True

    def __post_init__(self):
        Nx = _tup(self.Nx)
        object.__setattr__(self, "Nx", Nx)
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.sharing not in SHARINGS:
            raise ValueError(f"unknown sharing {self.sharing!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.padding not in ("periodic", "zero"):
            raise ValueError(f"unknown padding {self.padding!r}")
        if self.kind == "restriction":
            Nx_out = _tup(self.Nx_out)
            if len(Nx_out) != len(Nx) or any(n % q for n, q in zip(Nx, Nx_out)):
                raise ValueError(f"restriction needs Nx divisible by Nx_out, got {Nx} -> {Nx_out}")
            w = tuple(n // q for n, q in zip(Nx, Nx_out))
        elif self.kind == "kernel":
            Nx_out = Nx
            w = _tup(self.w) if self.w is not None else None
            if w is None or len(w) != len(Nx) or any(k % 2 == 0 or k < 1 for k in w):
                raise ValueError(f"kernel layer needs an odd window per axis, got {self.w}")
        else:
            Nx_out, w = Nx, (1,) * len(Nx)
        object.__setattr__(self, "Nx_out", Nx_out)
        object.__setattr__(self, "w", w)

    @property
    def dims(self) -> int:
        return len(self.Nx)

    @property
    def stride(self) -> tuple:
        return self.w if self.kind == "restriction" else (1,) * self.dims

    @property
    def weight_shape(self) -> tuple:
        """Logical weight shape ``(*Nx_out, alpha_out, alpha, *w)`` (local) or without ``Nx_out`` (conv)."""
        core = (self.alpha_out, self.alpha) + self.w
        return (self.Nx_out + core) if self.sharing == "local" else core

    @property
    def bias_shape(self) -> tuple:
        return (self.alpha_out,) + (self.Nx_out if self.sharing == "local" else ())

    def param_count(self, include_bias: bool = True) -> int:
        n = prod(self.weight_shape)
        if include_bias and self.bias:
            n += prod(self.bias_shape)
        return n


def _tup(x):
    if x is None:
        return None
    return (int(x),) if np.isscalar(x) else tuple(int(v) for v in x)


def LCR(Nx, alpha, Nx_out, alpha_out, activation="linear", sharing="local", **kw) -> LayerSpec:
    return LayerSpec("restriction", sharing, Nx, alpha, alpha_out, Nx_out=Nx_out, activation=activation, **kw)


def LCK(Nx, alpha, alpha_out, w, activation="linear", sharing="local", padding="periodic", **kw) -> LayerSpec:
    return LayerSpec("kernel", sharing, Nx, alpha, alpha_out, w=w, activation=activation, padding=padding, **kw)


def LCI(Nx, alpha, alpha_out, activation="linear", sharing="local", **kw) -> LayerSpec:
    return LayerSpec("interpolation", sharing, Nx, alpha, alpha_out, activation=activation, **kw)


def _gather_index(spec: LayerSpec) -> np.ndarray:
    """Index table of shape ``(P, alpha * W)`` into the flattened ``(alpha, *Nx)`` input.

    ``P`` counts output positions and ``W`` window taps; the column order is
    channel-major, then window offsets in C order. Taps that fall into zero
    padding point at the extra slot ``alpha * prod(Nx)``.
    """
    Nx, w, s = spec.Nx, spec.w, spec.stride
    half = tuple((k - 1) // 2 for k in w) if spec.kind == "kernel" else (0,) * spec.dims
    out_pos = np.array(list(product(*[range(n) for n in spec.Nx_out])))  # (P, dims), C order
    taps = np.array(list(product(*[range(k) for k in w])))  # (W, dims)
    src = out_pos[:, None, :] * np.array(s) + taps[None, :, :] - np.array(half)  # (P, W, dims)
    nx = np.array(Nx)
    inside = np.all((src >= 0) & (src < nx), axis=-1)
    src = src % nx
    spatial = np.ravel_multi_index(tuple(src[..., k] for k in range(spec.dims)), Nx)  # (P, W)
    npos = prod(Nx)
    idx = np.arange(spec.alpha)[None, :, None] * npos + spatial[:, None, :]  # (P, alpha, W)
    if spec.padding == "zero":
        idx = np.where(inside[:, None, :], idx, spec.alpha * npos)
    return idx.reshape(len(out_pos), -1)


class Layer:
    """One LC/CNN layer: a :class:`LayerSpec` plus its parameters ``W`` and ``b``.

    ``W`` and ``b`` hold the logical shapes ``spec.weight_shape`` and
    ``spec.bias_shape``; ``b`` is ``None`` when the spec has no bias.
    """

    def __init__(self, spec: LayerSpec, W=None, b=None, dtype=np.float64):
        self.spec = spec
        self.W = np.zeros(spec.weight_shape, dtype) if W is None else np.array(W, dtype).reshape(spec.weight_shape)
        if spec.bias:
            self.b = np.zeros(spec.bias_shape, dtype) if b is None else np.array(b, dtype).reshape(spec.bias_shape)
        else:
            self.b = None
        self._idx = _gather_index(spec)
        self._npos_in = spec.alpha * prod(spec.Nx)
        # per tap, the spatial input slot read at each output position; every
        # row is injective, zero-padding reads go to the extra slot npos
        npos = prod(spec.Nx)
        taps = self._idx[:, : prod(spec.w)].T
        self._tap_src = np.where(taps >= self._npos_in, npos, taps)
        self._P = prod(spec.Nx_out)

    @property
    def params(self) -> list:
        return [self.W] if self.b is None else [self.W, self.b]

    def _wmat(self) -> np.ndarray:
        s = self.spec
        if s.sharing == "local":
            return self.W.reshape(self._P, s.alpha_out, -1)
        return self.W.reshape(s.alpha_out, -1)

    def _bias_flat(self):
        # (P, alpha_out) for local, (alpha_out,) for conv
        if self.b is None:
            return 0.0
        if self.spec.sharing == "local":
            return self.b.reshape(self.spec.alpha_out, self._P).T
        return self.b

    def forward(self, x: np.ndarray):
        """Return ``(y, cache)`` for a batch ``x`` of shape ``(batch, alpha, *Nx)``."""
        s = self.spec
        if x.shape[1:] != (s.alpha,) + s.Nx:
            raise ValueError(f"layer expects input (batch, {s.alpha}, {s.Nx}), got {x.shape}")
        nb = x.shape[0]
        flat = x.reshape(nb, -1)
        if s.padding == "zero":
            flat = np.concatenate([flat, np.zeros((nb, 1), flat.dtype)], axis=1)
        patches = flat[:, self._idx]  # (batch, P, alpha*W)
        if s.sharing == "local":
            z = np.matmul(patches.transpose(1, 0, 2), self._wmat().transpose(0, 2, 1)).transpose(1, 0, 2)
        else:
            # one 2D product is much faster than a broadcast batch of small ones
            z = (patches.reshape(-1, patches.shape[-1]) @ self._wmat().T).reshape(nb, self._P, s.alpha_out)
        z = z + self._bias_flat()  # (batch, P, alpha_out)
        y = np.maximum(z, 0.0) if s.activation == "relu" else z
        out = y.transpose(0, 2, 1).reshape((nb, s.alpha_out) + s.Nx_out)
        return out, (patches, z)

    def backward(self, cache, grad_out: np.ndarray):
        """Return ``(grad_x, [grad_W, grad_b])`` given the upstream gradient."""
        s = self.spec
        patches, z = cache
        nb = grad_out.shape[0]
        g = grad_out.reshape(nb, s.alpha_out, self._P).transpose(0, 2, 1)  # (batch, P, alpha_out)
        if s.activation == "relu":
            g = g * (z > 0)
        if s.sharing == "local":
            gT = g.transpose(1, 2, 0)  # (P, alpha_out, batch)
            gW = np.matmul(gT, patches.transpose(1, 0, 2))
            gpatch = np.matmul(g.transpose(1, 0, 2), self._wmat()).transpose(1, 0, 2)
        else:
            gW = g.reshape(-1, s.alpha_out).T @ patches.reshape(-1, patches.shape[-1])
            gpatch = (g.reshape(-1, s.alpha_out) @ self._wmat()).reshape(patches.shape)
        grads = [gW.reshape(s.weight_shape)]
        if self.b is not None:
            gb = g.sum(axis=0).T if s.sharing == "local" else g.sum(axis=(0, 1))
            grads.append(gb.reshape(s.bias_shape))
        npos = prod(s.Nx)
        gpatch = gpatch.reshape(nb, self._P, s.alpha, -1)
        gx = np.zeros((nb, s.alpha, npos + 1), dtype=np.result_type(gpatch, grad_out))
        for t, src in enumerate(self._tap_src):
            # src has no repeats apart from the discarded padding slot, so += is exact
            gx[:, :, src] += gpatch[:, :, :, t].transpose(0, 2, 1)
        gx = gx[:, :, :npos].astype(grad_out.dtype, copy=False)
        return gx.reshape((nb, s.alpha) + s.Nx), grads

    def __call__(self, x):
        return self.forward(x)[0]

    def __repr__(self):
        s = self.spec
        tag = {"restriction": "R", "kernel": "K", "interpolation": "I"}[s.kind]
        pre = "LC" if s.sharing == "local" else "CNN"
        return f"{pre}{tag}[{s.activation}; Nx={s.Nx}, {s.alpha}->{s.alpha_out}, w={s.w}]"
