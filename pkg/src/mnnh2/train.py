"""Loss, error metric, Nadam and the minibatch training loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("epoch", "loss", "eps_train", "sigma_train", "eps_test", "sigma_test")


class TrainingDiverged(RuntimeError):
    """Raised when the loss becomes NaN or infinite."""


@dataclass
class Dataset:
    """Paired samples ``(v_i, u_i)`` on a common grid of ``N`` points per axis."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs)
        self.targets = np.asarray(self.targets)
        if self.inputs.shape != self.targets.shape:
            raise ValueError(f"input/target shapes differ: {self.inputs.shape} vs {self.targets.shape}")
        if len(self.inputs) < 1:
            raise ValueError("dataset is empty")
        grid = self.inputs.shape[1:]
        if len(grid) not in (1, 2) or len(set(grid)) != 1:
            raise ValueError(f"samples must live on an N or N x N grid, got {grid}")

    @property
    def d(self) -> int:
        return self.inputs.ndim - 1

    @property
    def N(self) -> int:
        return self.inputs.shape[1]

    def __len__(self):
        return len(self.inputs)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.targets[idx])


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over every entry of the batch and its gradient."""
    diff = pred - target
    n = diff.size
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


def rel_l2_error(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-sample ``||u - u_NN|| / ||u||`` (leading axis is the sample axis)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    if target.ndim == 1:
        pred, target = pred[None], target[None]
    axes = tuple(range(1, target.ndim))
    norm = np.sqrt(np.sum(target**2, axis=axes))
    if np.any(norm == 0):
        raise ValueError("relative error undefined for an all-zero target")
    return np.sqrt(np.sum((pred - target) ** 2, axis=axes)) / norm


def error_stats(errors) -> tuple:
    """Mean and sample standard deviation of a set of per-sample errors."""
    errors = np.asarray(errors, dtype=np.float64)
    return float(errors.mean()), float(errors.std(ddof=1)) if errors.size > 1 else 0.0


@dataclass
class Nadam:
    """Nesterov-accelerated Adam with the Keras 2 momentum schedule.

    With ``mu_t = beta1 * (1 - 0.5 * 0.96**(t * schedule_decay))`` the update is::

        m = beta1 m + (1 - beta1) g          v = beta2 v + (1 - beta2) g^2
        prod_t = prod_{k<=t} mu_k
        m_bar = (1 - mu_t) g / (1 - prod_t) + mu_{t+1} m / (1 - prod_t mu_{t+1})
        theta -= lr * m_bar / (sqrt(v / (1 - beta2^t)) + eps)
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule_decay: float = 0.004
    t: int = 0
    m_schedule: float = 1.0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def _mu(self, t: int) -> float:
        return self.beta1 * (1.0 - 0.5 * 0.96 ** (t * self.schedule_decay))

    def step(self, params: list, grads: list):
        """Update ``params`` in place."""
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        t = self.t
        mu_t, mu_next = self._mu(t), self._mu(t + 1)
        sched = self.m_schedule * mu_t
        sched_next = sched * mu_next
        self.m_schedule = sched
        bias2 = 1.0 - self.beta2**t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_bar = (1.0 - mu_t) * g / (1.0 - sched) + mu_next * m / (1.0 - sched_next)
            p -= (self.lr * m_bar / (np.sqrt(v / bias2) + self.eps)).astype(p.dtype, copy=False)

    def state_arrays(self) -> list:
        return list(self.m) + list(self.v)


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 0  # 0: ceil(count / 100)
    seed: int = 0
    shuffle: bool = True
    checkpoint_every: int = 0
    eval_every: int = 1

    def resolved_batch(self, count: int) -> int:
        b = self.batch_size or math.ceil(count / 100)
        if not 1 <= b <= count:
            raise ValueError(f"batch size {b} outside [1, {count}]")
        return b


@dataclass
class History:
    rows: list = field(default_factory=list)

    def append(self, **row):
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        """One metric per epoch; epochs where it was not evaluated read as NaN."""
        return np.array([r.get(name, np.nan) for r in self.rows], dtype=float)

    def write_csv(self, path, append: bool = False):
        with open(path, "a" if append else "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
            if not append:
                w.writeheader()
            for r in self.rows:
                w.writerow({k: r.get(k, "") for k in METRIC_COLUMNS})


def evaluate(net, data: Dataset) -> tuple:
    """Mean and standard deviation of the relative error of ``net`` on ``data``."""
    return error_stats(rel_l2_error(net.predict(data.inputs), data.targets))


def _epoch_order(seed: int, epoch: int, n: int, shuffle: bool) -> np.ndarray:
    # derived per epoch so that a resumed run sees the same batches
    if not shuffle:
        return np.arange(n)
    return np.random.default_rng([seed, epoch]).permutation(n)


def train(net, data: Dataset, cfg: TrainConfig, optimizer: Nadam = None, test: Dataset = None,
          start_epoch: int = 0, on_epoch=None):
    """Shuffled minibatch training with MSE loss.

    Returns ``(net, optimizer, history)``. ``on_epoch(epoch, net, optimizer)``
    is called after each epoch (checkpointing hooks in here).
    """
    if data.inputs.shape[1:] != (net.cfg.N,) * net.cfg.d:
        raise ValueError(f"dataset grid {data.inputs.shape[1:]} does not match network N={net.cfg.N}, d={net.cfg.d}")
    optimizer = optimizer or Nadam()
    bs = cfg.resolved_batch(len(data))
    dt = net.dtype
    X, Y = data.inputs.astype(dt, copy=False), data.targets.astype(dt, copy=False)
    history = History()
    params = net.params
    for epoch in range(start_epoch, start_epoch + cfg.epochs):
        order = _epoch_order(cfg.seed, epoch, len(data), cfg.shuffle)
        total, count = 0.0, 0
        for s in range(0, len(order), bs):
            idx = order[s:s + bs]
            pred, cache = net.forward(X[idx])
            loss, g = mse_loss(pred, Y[idx])
            if not math.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} at epoch {epoch}, batch starting {s}")
            _, grads = net.backward(cache, g)
            optimizer.step(params, grads)
            total += loss * len(idx)
            count += len(idx)
        row = {"epoch": epoch + 1, "loss": total / count}
        last = epoch == start_epoch + cfg.epochs - 1
        if cfg.eval_every and ((epoch + 1) % cfg.eval_every == 0 or last):
            row["eps_train"], row["sigma_train"] = evaluate(net, data)
            if test is not None:
                row["eps_test"], row["sigma_test"] = evaluate(net, test)
        history.append(**row)
        log.info("epoch %d loss %.3e eps_train %s eps_test %s", epoch + 1, row["loss"],
                 row.get("eps_train"), row.get("eps_test"))
        if on_epoch is not None:
            on_epoch(epoch + 1, net, optimizer)
    return net, optimizer, history


def grad_check(net, v: np.ndarray, n_params: int = 240, h: float = 1e-4, seed: int = 0) -> float:
    """Largest relative deviation between backprop and central differences.

    The scalar checked is ``sum(R * net(v))`` for a fixed random ``R``. At
    least one entry of every layer's weights (and bias) is probed; the rest
    of the ``n_params`` probes are drawn uniformly over all parameters.
    Deviations are taken relative to ``max(|analytic|, |numeric|)``, floored
    at ``1e-6`` times the largest probed gradient.
    """
    rng = np.random.default_rng(seed)
    v = np.asarray(v, dtype=net.dtype)
    out, cache = net.forward(v)
    R = rng.standard_normal(out.shape)
    _, grads = net.backward(cache, R)
    params = net.params

    def objective():
        return float(np.sum(R * net.forward(v)[0]))

    probes = [(k, int(rng.integers(p.size))) for k, p in enumerate(params)]
    sizes = np.array([p.size for p in params], dtype=float)
    extra = max(0, n_params - len(probes))
    for k in rng.choice(len(params), size=extra, p=sizes / sizes.sum()):
        probes.append((int(k), int(rng.integers(params[k].size))))

    ana, num = [], []
    for k, j in probes:
        p = params[k].reshape(-1)
        old = p[j]
        p[j] = old + h
        fp = objective()
        p[j] = old - h
        fm = objective()
        p[j] = old
        num.append((fp - fm) / (2 * h))
        ana.append(grads[k].reshape(-1)[j])
    ana, num = np.array(ana), np.array(num)
    floor = 1e-6 * max(np.abs(ana).max(), 1e-300)
    return float(np.max(np.abs(ana - num) / np.maximum(np.maximum(np.abs(ana), np.abs(num)), floor)))
