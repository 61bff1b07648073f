"""Network assembly: the H2 matvec network, MNN-H2 and a plain CNN baseline.

Networks take a batch of grid fields, shape ``(batch, N)`` in 1D or
``(batch, N, N)`` in 2D, and return a batch of the same shape. Each network
exposes ``forward`` (output plus a cache), ``backward`` (input gradient plus
parameter gradients aligned with :attr:`Network.params`) and ``layers`` in
construction order, which is also the checkpoint order.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from itertools import product

import numpy as np

from .h2core import H2Matrix, _box_index
from .layers import LCI, LCK, LCR, Layer
from .tensor import reshape_m, reshape_t


@dataclass
class NetworkConfig:
    """Geometry and hyperparameters of a network.

    ``arch`` is ``"mnn"`` (hierarchical network; with ``K=1`` and linear
    activations it is the plain H2 matvec network) or ``"plain_cnn"``.
    ``activation`` is used in the kernel layers; ``transfer_activation`` in
    the inner restriction/interpolation layers. The first restriction, the
    last interpolation and the last adjacent layer are always linear.
    """

    arch: str = "mnn"
    d: int = 1
    L: int = 4
    m: int = 5
    r: int = 6
    K: int = 5
    sharing_mode: str = "cnn"
    padding: str = "periodic"
    n_b_ad: int = 1
    n_b_coarse: int = 2
    n_b_far: int = 3
    activation: str = "relu"
    transfer_activation: str = "linear"
    bias: bool = True
    sigma_init: float = 0.02
    dtype: str = "float64"
    cnn_layers: int = 3
    cnn_channels: int = 10
    cnn_window: int = 25
    N_override: int = 0

    @property
    def N(self) -> int:
        if self.arch == "plain_cnn" and self.N_override:
            return self.N_override
        return 2**self.L * self.m

    def n_b(self, level: int) -> int:
        return self.n_b_coarse if level == 2 else self.n_b_far

    def validate(self):
        if self.arch not in ("mnn", "plain_cnn"):
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.d not in (1, 2):
            raise ValueError("d must be 1 or 2")
        if self.arch == "plain_cnn":
            if self.cnn_window % 2 == 0:
                raise ValueError("plain CNN window must be odd")
            return
        if self.L < 3:
            raise ValueError(f"need L >= 3, got {self.L}")
        if self.K < 1:
            raise ValueError(f"need K >= 1, got {self.K}")
        if self.r < 1 or self.m < 1:
            raise ValueError("r and m must be positive")
        if self.sharing_mode not in ("lc", "cnn", "mixed"):
            raise ValueError(f"unknown sharing mode {self.sharing_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        names = {f.name: f.type for f in fields(cls)}
        unknown = set(d) - set(names)
        if unknown:
            raise ValueError(f"unknown network config keys {sorted(unknown)}")
        return cls(**d)


class Network:
    """Shared plumbing for parameter access and counting."""

    cfg: NetworkConfig

    @property
    def layers(self) -> list:
        raise NotImplementedError

    @property
    def params(self) -> list:
        return [p for layer in self.layers for p in layer.params]

    def count_params(self, include_bias: bool = True) -> int:
        return sum(layer.spec.param_count(include_bias) for layer in self.layers)

    def predict(self, v: np.ndarray, batch_size: int = 1024) -> np.ndarray:
        v = np.asarray(v, dtype=self.dtype)
        outs = [self.forward(v[i:i + batch_size])[0] for i in range(0, len(v), batch_size)]
        return np.concatenate(outs, axis=0)

    @property
    def dtype(self):
        return np.dtype(self.cfg.dtype)

    def init_weights(self, seed: int, sigma: float = None):
        """Normal(0, sigma) weights, zero biases."""
        sigma = self.cfg.sigma_init if sigma is None else sigma
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            layer.W[...] = sigma * rng.standard_normal(layer.W.shape)
            if layer.b is not None:
                layer.b[...] = 0.0


def _run_chain(chain, x, caches):
    for layer in chain:
        x, c = layer.forward(x)
        caches.append(c)
    return x


def _back_chain(chain, caches, g, grads):
    for layer, c in zip(reversed(chain), reversed(caches)):
        g, gp = layer.backward(c, g)
        grads[id(layer)] = gp
    return g


class MNNH2(Network):
    """Hierarchical network with an adjacent branch and a nested far-field branch.

    Stages, for levels ``2..L``:

    * ``adjacent``: ``K`` kernel layers on the leaf blocks (``m**d`` channels);
    * ``restrict[L]`` maps the grid to ``r`` channels per leaf box and
      ``restrict[l]`` coarsens level ``l + 1`` to level ``l``;
    * ``kernels[l]``: ``K`` kernel layers with window ``2 * n_b(l) + 1``;
    * ``interp[l]`` (``l < L``) maps ``r`` channels to ``2**d * r`` which are
      redistributed to the children; ``interp[L]`` maps to ``m**d`` grid values.
    """

    def __init__(self, cfg: NetworkConfig, seed: int = None):
        cfg.validate()
        self.cfg = cfg
        d, L, m, r, K = cfg.d, cfg.L, cfg.m, cfg.r, cfg.K
        dt = np.dtype(cfg.dtype)
        mode, pad = cfg.sharing_mode, cfg.padding
        local_transfer = "conv" if mode == "cnn" else "local"
        kernel_sharing = "local" if mode == "lc" else "conv"
        nd = lambda n: (n,) * d  # noqa: E731
        ext = nd(2**L)

        def lay(spec):
            return Layer(spec, dtype=dt)

        self.adjacent = []
        for k in range(K):
            last = k == K - 1
            sharing = "local" if (mode == "lc" or (mode == "mixed" and last)) else "conv"
            act = "linear" if last else cfg.activation
            self.adjacent.append(lay(LCK(ext, m**d, m**d, nd(2 * cfg.n_b_ad + 1), act, sharing, pad, bias=cfg.bias)))
        self.restrict = {L: lay(LCR(nd(cfg.N), 1, ext, r, "linear", local_transfer, bias=cfg.bias))}
        for level in range(L - 1, 1, -1):
            self.restrict[level] = lay(
                LCR(nd(2 ** (level + 1)), r, nd(2**level), r, cfg.transfer_activation, local_transfer, bias=cfg.bias)
            )
        self.kernels = {
            level: [
                lay(LCK(nd(2**level), r, r, nd(2 * cfg.n_b(level) + 1), cfg.activation, kernel_sharing, pad, bias=cfg.bias))
                for _ in range(K)
            ]
            for level in range(2, L + 1)
        }
        self.interp = {
            level: lay(LCI(nd(2**level), r, 2**d * r, cfg.transfer_activation, local_transfer, bias=cfg.bias))
            for level in range(2, L)
        }
        self.interp[L] = lay(LCI(ext, r, m**d, "linear", local_transfer, bias=cfg.bias))
        if seed is not None:
            self.init_weights(seed)

    @property
    def layers(self) -> list:
        L = self.cfg.L
        out = list(self.adjacent)
        out += [self.restrict[lv] for lv in range(L, 1, -1)]
        for lv in range(2, L + 1):
            out += self.kernels[lv]
        out += [self.interp[lv] for lv in range(2, L + 1)]
        return out

    def forward(self, v: np.ndarray):
        cfg = self.cfg
        d, L, m, r = cfg.d, cfg.L, cfg.m, cfg.r
        nd = lambda n: (n,) * d  # noqa: E731
        v = np.asarray(v, dtype=self.dtype)
        if v.shape[1:] != nd(cfg.N):
            raise ValueError(f"expected input batch of grid {nd(cfg.N)}, got {v.shape[1:]}")
        x = v[:, None]
        cache = {"adj": [], "res": {}, "ker": {}, "int": {}}

        xi = reshape_t(x, m, 1, nd(2**L), lead=1)
        xi = _run_chain(self.adjacent, xi, cache["adj"])
        u_ad = reshape_m(xi, m, 1, nd(2**L), lead=1)[:, 0]

        zeta = {}
        z, cache["res"][L] = self.restrict[L].forward(x)
        zeta[L] = z
        for level in range(L - 1, 1, -1):
            zeta[level], cache["res"][level] = self.restrict[level].forward(zeta[level + 1])
        out_k = {}
        for level in range(2, L + 1):
            cache["ker"][level] = []
            out_k[level] = _run_chain(self.kernels[level], zeta[level], cache["ker"][level])

        chi = 0.0
        for level in range(2, L):
            chi = chi + out_k[level]
            chi, cache["int"][level] = self.interp[level].forward(chi)
            chi = reshape_m(chi, 2, r, nd(2**level), lead=1)
        chi = chi + out_k[L]
        chi, cache["int"][L] = self.interp[L].forward(chi)
        u = reshape_m(chi, m, 1, nd(2**L), lead=1)[:, 0] + u_ad
        return u, cache

    def backward(self, cache, grad_u: np.ndarray):
        cfg = self.cfg
        d, L, m, r = cfg.d, cfg.L, cfg.m, cfg.r
        nd = lambda n: (n,) * d  # noqa: E731
        grads = {}
        gu = grad_u[:, None]

        g = reshape_t(gu, m, 1, nd(2**L), lead=1)
        g = _back_chain(self.adjacent, cache["adj"], g, grads)
        gv = reshape_m(g, m, 1, nd(2**L), lead=1)

        g_out_k = {}
        g, grads[id(self.interp[L])] = self.interp[L].backward(cache["int"][L], reshape_t(gu, m, 1, nd(2**L), lead=1))
        g_out_k[L] = g
        for level in range(L - 1, 1, -1):
            g = reshape_t(g, 2, r, nd(2**level), lead=1)
            g, grads[id(self.interp[level])] = self.interp[level].backward(cache["int"][level], g)
            g_out_k[level] = g

        g_zeta = {lv: _back_chain(self.kernels[lv], cache["ker"][lv], g_out_k[lv], grads) for lv in range(2, L + 1)}
        g = g_zeta[2]
        for level in range(2, L):
            g, grads[id(self.restrict[level])] = self.restrict[level].backward(cache["res"][level], g)
            g = g + g_zeta[level + 1]
        g, grads[id(self.restrict[L])] = self.restrict[L].backward(cache["res"][L], g)
        gv = gv + g
        return gv[:, 0], [p for layer in self.layers for p in grads[id(layer)]]


class PlainCNN(Network):
    """Stack of periodic convolutional kernel layers: lift, ``cnn_layers`` hidden, project.

    The lift maps 1 channel to ``cnn_channels`` and the projection maps back
    to 1, both with the same window; the projection is linear.
    """

    def __init__(self, cfg: NetworkConfig, seed: int = None):
        cfg.validate()
        self.cfg = cfg
        d, c, w = cfg.d, cfg.cnn_channels, cfg.cnn_window
        grid = (cfg.N,) * d
        win = (w,) * d
        dt = np.dtype(cfg.dtype)
        chans = [1] + [c] * (cfg.cnn_layers + 1) + [1]
        self._layers = []
        for k in range(len(chans) - 1):
            act = "linear" if k == len(chans) - 2 else cfg.activation
            spec = LCK(grid, chans[k], chans[k + 1], win, act, "conv", cfg.padding, bias=cfg.bias)
            self._layers.append(Layer(spec, dtype=dt))
        if seed is not None:
            self.init_weights(seed)

    @property
    def layers(self) -> list:
        return self._layers

    def forward(self, v):
        v = np.asarray(v, dtype=self.dtype)
        caches = []
        x = _run_chain(self._layers, v[:, None], caches)
        return x[:, 0], caches

    def backward(self, cache, grad_u):
        grads = {}
        g = _back_chain(self._layers, cache, grad_u[:, None], grads)
        return g[:, 0], [p for layer in self._layers for p in grads[id(layer)]]


def build_network(cfg: NetworkConfig, seed: int = None) -> Network:
    return PlainCNN(cfg, seed) if cfg.arch == "plain_cnn" else MNNH2(cfg, seed)


def build_mnn_h2(cfg: NetworkConfig, seed: int = 0) -> MNNH2:
    """MNN-H2 with Normal(0, ``cfg.sigma_init``) weights and zero biases."""
    return MNNH2(cfg, seed)


def build_plain_cnn(layers: int, channels: int, window: int, N: int, seed: int = 0, **overrides) -> PlainCNN:
    """Plain periodic CNN baseline; ``layers`` counts the hidden ``channels -> channels`` layers."""
    cfg = NetworkConfig(
        arch="plain_cnn", cnn_layers=layers, cnn_channels=channels, cnn_window=window, N_override=N, **overrides
    )
    return PlainCNN(cfg, seed)


def _taps(w):
    return list(product(*[range(k) for k in w]))


def build_linear_h2_nn(h2: H2Matrix, dtype: str = "float64") -> MNNH2:
    """Linear network whose forward pass is exactly the H2 matvec.

    Every layer carries the matching H2 factor: ``V`` in the first
    restriction, ``C`` in the level restrictions, ``M`` in the kernel layers,
    ``B`` and ``U`` in the interpolations and ``A_ad`` in the adjacent layer.
    """
    tree = h2.tree
    d, L, m, r = tree.d, tree.L, tree.m, h2.r
    cfg = NetworkConfig(
        d=d, L=L, m=m, r=r, K=1, sharing_mode="lc", padding="periodic",
        activation="linear", transfer_activation="linear", dtype=dtype,
    )
    net = MNNH2(cfg)
    nk = 2**d

    def boxes(level):
        return list(product(*[range(2**level)] * d))

    adj = net.adjacent[0]
    w = adj.spec.w
    for pos in boxes(L):
        i = _box_index(np.array(pos), L)
        nl = list(tree.nl[L][i])
        for tap in _taps(w):
            j = _box_index(np.array(pos) + np.array(tap) - cfg.n_b_ad, L)
            adj.W[pos + (slice(None), slice(None)) + tap] = h2.A_ad[i, nl.index(j)]

    first = net.restrict[L]
    for pos in boxes(L):
        i = _box_index(np.array(pos), L)
        for tap in _taps(first.spec.w):
            p = sum(t * m**k for k, t in enumerate(tap))
            first.W[pos + (slice(None), 0) + tap] = h2.V[i, p]

    for level in range(2, L):
        res, itp = net.restrict[level], net.interp[level]
        for pos in boxes(level):
            for tap in _taps((2,) * d):
                j = _box_index(2 * np.array(pos) + np.array(tap), level + 1)
                kidx = sum(t * 2**k for k, t in enumerate(tap))
                res.W[pos + (slice(None), slice(None)) + tap] = h2.C[level][j].T
                itp.W[pos + (slice(kidx * r, (kidx + 1) * r), slice(None)) + (0,) * d] = h2.B[level][j]

    for level in range(2, L + 1):
        ker = net.kernels[level][0]
        nb = cfg.n_b(level)
        for pos in boxes(level):
            i = _box_index(np.array(pos), level)
            il = list(tree.il[level][i])
            seen = set()
            for tap in _taps(ker.spec.w):
                j = int(_box_index(np.array(pos) + np.array(tap) - nb, level))
                if j in il and j not in seen:
                    seen.add(j)
                    ker.W[pos + (slice(None), slice(None)) + tap] = h2.M[level][i, il.index(j)]

    last = net.interp[L]
    for pos in boxes(L):
        i = _box_index(np.array(pos), L)
        last.W[pos + (slice(None), slice(None)) + (0,) * d] = h2.U[i]
    return net


def lc_weight_formula(cfg: NetworkConfig) -> int:
    """Closed-form weight count of the all-LC network (1D)."""
    L, m, r, K, N = cfg.L, cfg.m, cfg.r, cfg.K, cfg.N
    total = 2**L * m * m * K * (2 * cfg.n_b_ad + 1) + N * r
    total += 2 * sum(2 ** (lv + 1) * r * r for lv in range(2, L))
    total += K * sum(2**lv * r * r * (2 * cfg.n_b(lv) + 1) for lv in range(2, L + 1))
    return total + 2**L * r * m


def cnn_weight_formula(cfg: NetworkConfig) -> int:
    """Closed-form weight count of the all-CNN network (1D)."""
    L, m, r, K, N = cfg.L, cfg.m, cfg.r, cfg.K, cfg.N
    total = N // 2**L * r + 2 * sum(2 * r * r for _ in range(2, L))
    total += K * sum(r * r * (2 * cfg.n_b(lv) + 1) for lv in range(2, L + 1))
    return total + r * m + m * m * K * (2 * cfg.n_b_ad + 1)
