"""Self-check suites: linear equivalence, gradients, parameter counts, tree lists.

Each suite returns a list of :class:`Check` rows; ``run_suite`` is what the
``verify`` command calls.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .h2core import build_tree, matvec, random_h2
from .model import (MNNH2, NetworkConfig, build_linear_h2_nn, build_plain_cnn, cnn_weight_formula,
                    lc_weight_formula)
from .train import grad_check

LINEAR_TOL = 1e-12
GRAD_TOL = 1e-5
GRAD_TOL_LINEAR = 1e-7


@dataclass
class Check:
    name: str
    value: float
    limit: float
    passed: bool

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.value:.3e} (limit {self.limit:.1e})"


def linear_equivalence_error(d: int, L: int, m: int, r: int, seed: int = 0, samples: int = 20) -> float:
    """Largest relative gap between the weight-loaded network and the H2 matvec."""
    h2 = random_h2(build_tree(L, m, d), r, seed=seed)
    net = build_linear_h2_nn(h2)
    rng = np.random.default_rng(seed + 1)
    v = rng.standard_normal((samples,) + (h2.tree.N,) * d)
    ref = matvec(h2, v)
    out = net.predict(v)
    axes = tuple(range(1, v.ndim))
    return float(np.max(np.sqrt(np.sum((out - ref) ** 2, axis=axes) / np.sum(ref**2, axis=axes))))


LINEAR_CASES = [(1, L, 5, r) for L in (3, 4, 5) for r in (2, 4)] + [(2, 3, 4, r) for r in (2, 4)]


def suite_linear() -> list:
    out = []
    for d, L, m, r in LINEAR_CASES:
        err = linear_equivalence_error(d, L, m, r)
        out.append(Check(f"linear d={d} L={L} m={m} r={r}", err, LINEAR_TOL, err <= LINEAR_TOL))
    return out


def randomize(net, seed: int, sigma: float = 0.5, bias_sigma: float = 0.1):
    """Draw weights and biases so that relu preactivations sit away from zero."""
    rng = np.random.default_rng(seed)
    for layer in net.layers:
        fan_in = layer.spec.alpha * np.prod(layer.spec.w)
        layer.W[...] = sigma * rng.standard_normal(layer.W.shape) / np.sqrt(fan_in)
        if layer.b is not None:
            layer.b[...] = bias_sigma * rng.standard_normal(layer.b.shape)
    return net


def _layer_caches(net, cache):
    if isinstance(net, MNNH2):
        yield from zip(net.adjacent, cache["adj"])
        for lv, layer in net.restrict.items():
            yield layer, cache["res"][lv]
        for lv, chain in net.kernels.items():
            yield from zip(chain, cache["ker"][lv])
        for lv, layer in net.interp.items():
            yield layer, cache["int"][lv]
    else:
        yield from zip(net.layers, cache)


def relu_margin(net, v: np.ndarray) -> float:
    """Smallest ``|preactivation|`` over all relu layers for the batch ``v``."""
    _, cache = net.forward(v)
    zs = [np.abs(c[1]).min() for layer, c in _layer_caches(net, cache) if layer.spec.activation == "relu"]
    return float(min(zs)) if zs else np.inf


def kink_free(make_net, shape, seed: int, margin: float = 1e-4, tries: int = 200):
    """First ``(net, v)`` over successive seeds whose relu preactivations all exceed ``margin``."""
    for k in range(tries):
        net = randomize(make_net(), seed + 1000 * k)
        v = np.random.default_rng(seed + 1000 * k + 7).standard_normal(shape)
        if relu_margin(net, v) > margin:
            return net, v
    raise RuntimeError(f"no draw kept relu preactivations {margin} away from zero")


GRAD_CASES = [
    (d, mode, pad, act)
    for d, mode, pad, act in product((1, 2), ("lc", "cnn", "mixed"), ("periodic", "zero"), ("relu", "linear"))
]


def gradient_error(d: int, mode: str, padding: str, activation: str, seed: int = 0) -> float:
    cfg = NetworkConfig(d=d, L=3, m=2, r=3, K=2, sharing_mode=mode, padding=padding,
                        activation=activation, transfer_activation=activation)
    net, v = kink_free(lambda: MNNH2(cfg), (2,) + (cfg.N,) * d, seed)
    # within one linear region central differences are exact up to roundoff;
    # the smaller relu step keeps every probe inside the region found above
    return grad_check(net, v, n_params=120, h=1e-4 if activation == "linear" else 1e-5, seed=seed)


def suite_grad() -> list:
    out = []
    for d, mode, pad, act in GRAD_CASES:
        tol = GRAD_TOL_LINEAR if act == "linear" else GRAD_TOL
        err = gradient_error(d, mode, pad, act)
        out.append(Check(f"grad d={d} {mode} {pad} {act}", err, tol, err <= tol))
    cnn, v = kink_free(lambda: build_plain_cnn(2, 3, 5, 16), (2, 16), 1)
    err = grad_check(cnn, v, n_params=80, h=1e-5)
    out.append(Check("grad plain cnn", err, GRAD_TOL, err <= GRAD_TOL))
    return out


def suite_params() -> list:
    cfg = NetworkConfig(L=6, m=5, r=6, K=5, sharing_mode="cnn")
    net = MNNH2(cfg)
    w, wb = net.count_params(False), net.count_params(True)
    out = [
        Check("cnn weights N=320 (6951)", w, 6951, w == 6951),
        Check("cnn weights+biases N=320 (7209)", wb, 7209, wb == 7209),
        Check("cnn closed form", w, cnn_weight_formula(cfg), w == cnn_weight_formula(cfg)),
    ]
    for L, m, r, K in [(3, 5, 2, 1), (4, 5, 6, 5), (5, 3, 4, 2), (6, 5, 6, 5), (4, 8, 3, 3)]:
        c = NetworkConfig(L=L, m=m, r=r, K=K, sharing_mode="lc")
        n = MNNH2(c).count_params(False)
        f = lc_weight_formula(c)
        out.append(Check(f"lc closed form L={L} m={m} r={r} K={K}", n, f, n == f))
    steps = [MNNH2(NetworkConfig(L=L, m=5, r=6, K=5)).count_params() for L in range(3, 9)]
    inc = np.diff(steps)
    out.append(Check("cnn increment per level constant", float(np.ptp(inc)), 0.0, bool(np.all(inc == inc[0]))))
    p = build_plain_cnn(15, 10, 25, 320).count_params()
    out.append(Check("plain cnn 15x10 w=25 (38161)", p, 38161, p == 38161))
    return out


def suite_tree() -> list:
    out = []
    t = build_tree(5, 1, 1)
    ok2 = all(list(t.il[2][i]) == [(i + 2) % 4] for i in range(4))
    out.append(Check("1D level-2 list is i+2", float(not ok2), 0, ok2))
    for level in range(3, 6):
        n = 2**level
        ok = True
        for i in range(n):
            offs = (-2, 2, 3) if i % 2 == 0 else (-3, -2, 2)
            ok &= sorted(t.il[level][i]) == sorted((i + o) % n for o in offs)
        out.append(Check(f"1D level-{level} offsets", float(not ok), 0, ok))
    t2 = build_tree(4, 1, 2)
    for level, size in ((2, 7), (3, 27), (4, 27)):
        sizes = {len(x) for x in t2.il[level]}
        out.append(Check(f"2D level-{level} list size {size}", float(max(sizes)), size, sizes == {size}))
    # brute-force definition: parents adjacent, boxes not adjacent (cyclic)
    for level in (3, 4):
        n = 2**level
        ok = True
        for i in range(n):
            want = {j for j in range(n) if _cyc(i // 2, j // 2, n // 2) <= 1 and _cyc(i, j, n) > 1}
            ok &= set(int(j) for j in t.il[level][i]) == want
        out.append(Check(f"1D level-{level} matches definition", float(not ok), 0, ok))
    return out


def _cyc(a: int, b: int, n: int) -> int:
    d = abs(a - b) % n
    return min(d, n - d)


SUITES = {"linear": suite_linear, "grad": suite_grad, "params": suite_params, "tree": suite_tree}


def run_suite(name: str) -> list:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name]()
