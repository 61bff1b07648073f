"""On-disk formats: datasets, checkpoints and flat ``key=value`` run configs.

All binary fields are little-endian.

Dataset file::

    b"MNH2DS1\\0"  u32 version=1  u32 d  u32 N (d times)  u32 count  u8 dtype bytes (4 or 8)
    payload: for each sample, v then u, each N**d values in column-major order

Checkpoint file::

    b"MNH2CK1\\0"  u64 n  JSON network config (n bytes, UTF-8)
    per layer in construction order: u64 n + W bytes, u64 n + b bytes (n = 0 without bias)
    optional resume trailer: b"MNH2OPT1"  u64 n  JSON optimizer scalars and epoch,
    then u64 n + bytes for every first-moment array followed by every second-moment array

Weight blobs hold the logical layer weight shape in C order with the
network's dtype.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .model import Network, NetworkConfig, build_network
from .pde.problems import ProblemSpec
from .train import Dataset, Nadam, TrainConfig

DATASET_MAGIC = b"MNH2DS1\0"
CHECKPOINT_MAGIC = b"MNH2CK1\0"
OPTIMIZER_MAGIC = b"MNH2OPT1"
DATASET_VERSION = 1
_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


class FormatError(ValueError):
    """A file does not follow the expected layout."""


# ---------------------------------------------------------------- datasets

def dataset_to_bytes(data: Dataset, dtype="float64") -> bytes:
    dt = np.dtype(dtype).newbyteorder("<")
    if dt.itemsize not in _DTYPES:
        raise ValueError(f"dataset dtype must be float32 or float64, got {dtype}")
    d, N, count = data.d, data.N, len(data)
    head = DATASET_MAGIC + struct.pack("<II", DATASET_VERSION, d) + struct.pack(f"<{d}I", *([N] * d))
    head += struct.pack("<IB", count, dt.itemsize)
    # column-major per field: reverse the spatial axes and flatten in C order
    flip = tuple(range(data.inputs.ndim - 1, 0, -1))
    v = np.transpose(data.inputs, (0,) + flip).reshape(count, -1)
    u = np.transpose(data.targets, (0,) + flip).reshape(count, -1)
    payload = np.stack([v, u], axis=1).astype(dt)
    return head + payload.tobytes()


def dataset_from_bytes(buf: bytes) -> Dataset:
    if buf[:8] != DATASET_MAGIC:
        raise FormatError("not a dataset file (bad magic)")
    try:
        version, d = struct.unpack_from("<II", buf, 8)
        if version != DATASET_VERSION:
            raise FormatError(f"unsupported dataset version {version}")
        if d not in (1, 2):
            raise FormatError(f"unsupported dimension {d}")
        Ns = struct.unpack_from(f"<{d}I", buf, 16)
        off = 16 + 4 * d
        count, tag = struct.unpack_from("<IB", buf, off)
    except struct.error as exc:
        raise FormatError(f"truncated dataset header: {exc}") from exc
    off += 5
    if tag not in _DTYPES:
        raise FormatError(f"unknown dtype tag {tag}")
    if len(set(Ns)) != 1:
        raise FormatError(f"non-square grids are not supported: {Ns}")
    npts = int(np.prod(Ns))
    expect = count * 2 * npts * tag
    if len(buf) - off != expect:
        raise FormatError(f"payload has {len(buf) - off} bytes, header implies {expect}")
    arr = np.frombuffer(buf, dtype=_DTYPES[tag], offset=off).reshape(count, 2, *Ns[::-1])
    flip = tuple(range(d + 1, 1, -1))
    arr = np.transpose(arr, (0, 1) + flip).astype(_DTYPES[tag].newbyteorder("="))
    return Dataset(arr[:, 0].copy(), arr[:, 1].copy())


def write_dataset(path, data: Dataset, dtype="float64"):
    Path(path).write_bytes(dataset_to_bytes(data, dtype))


def read_dataset(path) -> Dataset:
    return dataset_from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------- checkpoints

def _blob(arr) -> bytes:
    raw = b"" if arr is None else np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes()
    return struct.pack("<Q", len(raw)) + raw


class _Reader:
    def __init__(self, buf: bytes, pos: int = 0):
        self.buf, self.pos = buf, pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("checkpoint truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def blob(self) -> bytes:
        (n,) = struct.unpack("<Q", self.take(8))
        return self.take(n)

    def array(self, like: np.ndarray) -> np.ndarray:
        raw = self.blob()
        if len(raw) != like.nbytes:
            raise FormatError(f"blob of {len(raw)} bytes, expected {like.nbytes} for shape {like.shape}")
        return np.frombuffer(raw, dtype=like.dtype.newbyteorder("<")).reshape(like.shape)

    @property
    def done(self) -> bool:
        return self.pos == len(self.buf)


def checkpoint_to_bytes(net: Network, optimizer: Nadam = None, epoch: int = None) -> bytes:
    cfg = json.dumps(net.cfg.to_dict(), sort_keys=True).encode()
    out = [CHECKPOINT_MAGIC, struct.pack("<Q", len(cfg)), cfg]
    for layer in net.layers:
        out += [_blob(layer.W), _blob(layer.b)]
    if optimizer is not None:
        meta = {k: getattr(optimizer, k) for k in ("lr", "beta1", "beta2", "eps", "schedule_decay", "t", "m_schedule")}
        meta["epoch"] = int(epoch or 0)
        meta["has_moments"] = bool(optimizer.m)
        raw = json.dumps(meta, sort_keys=True).encode()
        out += [OPTIMIZER_MAGIC, struct.pack("<Q", len(raw)), raw]
        out += [_blob(a) for a in optimizer.state_arrays()]
    return b"".join(out)


def checkpoint_from_bytes(buf: bytes):
    """Return ``(net, optimizer_or_None, epoch)``."""
    if buf[:8] != CHECKPOINT_MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    rd = _Reader(buf, 8)
    try:
        cfg = NetworkConfig.from_dict(json.loads(rd.blob().decode()))
    except (ValueError, TypeError) as exc:
        raise FormatError(f"bad network config in checkpoint: {exc}") from exc
    net = build_network(cfg)
    for layer in net.layers:
        layer.W[...] = rd.array(layer.W)
        if layer.b is None:
            if rd.blob():
                raise FormatError("bias blob present for a layer without bias")
        else:
            layer.b[...] = rd.array(layer.b)
    if rd.done:
        return net, None, 0
    if rd.take(8) != OPTIMIZER_MAGIC:
        raise FormatError("unexpected bytes after layer blobs")
    meta = json.loads(rd.blob().decode())
    epoch = meta.pop("epoch")
    has = meta.pop("has_moments")
    opt = Nadam(**meta)
    if has:
        params = net.params
        opt.m = [rd.array(p).copy() for p in params]
        opt.v = [rd.array(p).copy() for p in params]
    if not rd.done:
        raise FormatError("trailing bytes after optimizer state")
    return net, opt, epoch


def write_checkpoint(path, net: Network, optimizer: Nadam = None, epoch: int = None):
    Path(path).write_bytes(checkpoint_to_bytes(net, optimizer, epoch))


def read_checkpoint(path):
    return checkpoint_from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------- run configs

@dataclass
class RunConfig:
    """Flat settings for the command-line tools.

    Every field is a ``key = value`` line in a config file. Problem keys
    mirror :class:`~mnnh2.pde.ProblemSpec`, network keys mirror
    :class:`~mnnh2.model.NetworkConfig`, training keys mirror
    :class:`~mnnh2.train.TrainConfig` and the optimizer keys mirror
    :class:`~mnnh2.train.Nadam`. ``N = 0`` means ``2**L * m``.
    """

    # problem
    problem: str = "nlse"
    N: int = 0
    n_g: int = 2
    beta: float = 10.0
    mu_a: float = 0.2
    f: float = 1.0
    n_e: int = 2
    sigma: float = 0.05
    tau: float = 0.01
    tol: float = 1e-10
    max_steps: int = 20_000
    count: int = 100
    seed: int = 0
    data_dtype: str = "float64"
    # network
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
    init_seed: int = 0
    # training
    epochs: int = 100
    batch_size: int = 0
    train_seed: int = 0
    shuffle: bool = True
    checkpoint_every: int = 0
    eval_every: int = 1
    # optimizer
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule_decay: float = 0.004
    # paths
    data: str = ""
    test_data: str = ""
    out: str = ""
    metrics: str = ""

    @property
    def grid_N(self) -> int:
        return self.N or 2**self.L * self.m

    def problem_spec(self) -> ProblemSpec:
        return ProblemSpec(self.problem, self.grid_N, self.n_g, self.beta, self.mu_a, self.f,
                           self.n_e, self.sigma, self.tau, self.tol, self.max_steps)

    def network_config(self) -> NetworkConfig:
        keys = {f.name for f in fields(NetworkConfig)} - {"N_override"}
        cfg = NetworkConfig(**{k: getattr(self, k) for k in keys})
        if self.arch == "plain_cnn":
            cfg.N_override = self.grid_N
        elif self.N and self.N != cfg.N:
            raise ValueError(f"N={self.N} does not equal 2**L * m = {cfg.N}")
        return cfg

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.epochs, self.batch_size, self.train_seed, self.shuffle,
                           self.checkpoint_every, self.eval_every)

    def optimizer(self) -> Nadam:
        return Nadam(self.lr, self.beta1, self.beta2, self.eps, self.schedule_decay)


def _coerce(name: str, typ, text: str):
    text = text.strip()
    if typ in (bool, "bool"):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {text!r}")
    if typ in (int, "int"):
        return int(text)
    if typ in (float, "float"):
        return float(text)
    return text


def parse_run_config(text: str, overrides=()) -> RunConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) plus ``key=value`` overrides."""
    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    lines = [(n + 1, ln) for n, ln in enumerate(text.splitlines())]
    lines += [(f"override {i + 1}", ln) for i, ln in enumerate(overrides)]
    for where, raw in lines:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {where}: expected key = value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ValueError(f"line {where}: unknown key {key!r}")
        if key in values and not str(where).startswith("override"):
            raise ValueError(f"line {where}: duplicate key {key!r}")
        values[key] = _coerce(key, types[key], val)
    return RunConfig(**values)


def load_run_config(path=None, overrides=()) -> RunConfig:
    text = Path(path).read_text(encoding="utf-8") if path else ""
    return parse_run_config(text, overrides)
