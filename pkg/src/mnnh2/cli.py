"""Command-line entry point: ``mnnh2 {gen,train,eval,verify}``.

Exit codes: 0 success, 1 verification failure, 2 usage or input error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import formats
from .model import build_network
from .pde import generate_dataset
from .pde.dataset import SampleError
from .pde.ks import DegenerateGapError
from .pde.nlse import ConvergenceError
from .pde.problems import SamplingError
from .pde.rte import SingularSystemError
from .train import METRIC_COLUMNS, TrainingDiverged, error_stats, rel_l2_error, train
from .verify import run_suite

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (TrainingDiverged, SampleError, ConvergenceError, DegenerateGapError,
                  SingularSystemError, SamplingError, FloatingPointError, np.linalg.LinAlgError)


class UsageError(Exception):
    pass


def _config(args) -> formats.RunConfig:
    return formats.load_run_config(args.config, args.set or ())


def cmd_gen(args) -> int:
    rc = _config(args)
    count = args.count if args.count is not None else rc.count
    seed = args.seed if args.seed is not None else rc.seed
    out = args.out or rc.out
    if not out:
        raise UsageError("gen needs --out (or out = ... in the config)")
    spec = rc.problem_spec()
    data, res = generate_dataset(spec, count, seed, workers=args.threads, return_residuals=True)
    formats.write_dataset(out, data, rc.data_dtype)
    print(f"{spec.problem}: {count} samples, N={spec.N}, seed={seed} -> {out}")
    print(f"residual max {res.max():.3e} mean {res.mean():.3e}")
    return EXIT_OK


def _write_metrics(path, rows, append):
    mode = "a" if append and Path(path).exists() else "w"
    with open(path, mode, newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        if mode == "w":
            w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in METRIC_COLUMNS})


def cmd_train(args) -> int:
    rc = _config(args)
    data_path = args.data or rc.data
    out = args.out or rc.out
    if not data_path or not out:
        raise UsageError("train needs --data and --out")
    data = formats.read_dataset(data_path)
    test_path = args.test_data or rc.test_data
    test = formats.read_dataset(test_path) if test_path else None
    if args.resume:
        net, opt, start = formats.read_checkpoint(args.resume)
        opt = opt or rc.optimizer()
    else:
        net, opt, start = build_network(rc.network_config(), rc.init_seed), rc.optimizer(), 0
    grid = (net.cfg.N,) * net.cfg.d
    for name, ds in (("training", data), ("test", test)):
        if ds is not None and ds.inputs.shape[1:] != grid:
            raise UsageError(f"{name} data grid {ds.inputs.shape[1:]} does not match network grid {grid}")
    tcfg = rc.train_config()
    if args.epochs is not None:
        tcfg.epochs = args.epochs
    metrics = args.metrics or rc.metrics or str(out) + ".metrics.csv"

    def on_epoch(epoch, net_, opt_):
        if tcfg.checkpoint_every and epoch % tcfg.checkpoint_every == 0:
            formats.write_checkpoint(out, net_, opt_, epoch)

    net, opt, hist = train(net, data, tcfg, opt, test, start_epoch=start, on_epoch=on_epoch)
    formats.write_checkpoint(out, net, opt, start + tcfg.epochs)
    _write_metrics(metrics, hist.rows, append=bool(args.resume))
    last = hist.rows[-1]
    print(f"epoch {last['epoch']} loss {last['loss']:.4e} eps_train {last.get('eps_train', float('nan')):.4e}"
          + (f" eps_test {last['eps_test']:.4e}" if "eps_test" in last else ""))
    print(f"checkpoint -> {out}; metrics -> {metrics}")
    return EXIT_OK


def cmd_eval(args) -> int:
    net, _, _ = formats.read_checkpoint(args.checkpoint)
    data = formats.read_dataset(args.dataset)
    grid = (net.cfg.N,) * net.cfg.d
    if data.inputs.shape[1:] != grid:
        raise UsageError(f"dataset grid {data.inputs.shape[1:]} does not match network grid {grid}")
    pred = net.predict(data.inputs)
    errs = rel_l2_error(pred, data.targets)
    mean, std = error_stats(errs)
    print(f"samples {len(data)} eps {mean:.6e} sigma {std:.6e}")
    if args.per_sample:
        with open(args.per_sample, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample", "eps"])
            w.writerows([i, f"{e:.17g}"] for i, e in enumerate(errs))
    if args.fields:
        with open(args.fields, "w", newline="") as fh:
            w = csv.writer(fh)
            axes = ["x"] if data.d == 1 else ["x", "y"]
            w.writerow(["sample"] + axes + ["v", "u", "u_nn"])
            idx = np.indices(grid).reshape(data.d, -1).T
            for s in args.field_samples or range(min(len(data), 5)):
                for pos in idx:
                    p = tuple(pos)
                    w.writerow([s] + [f"{c / net.cfg.N:.17g}" for c in pos]
                               + [f"{a[(s,) + p]:.17g}" for a in (data.inputs, data.targets, pred)])
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = run_suite(args.suite)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{args.suite}: {len(checks) - failed}/{len(checks)} passed")
    return EXIT_VERIFY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mnnh2", description="H2-structured multiscale networks for PDE solution maps.")
    p.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="key = value run configuration file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    g = sub.add_parser("gen", help="generate a dataset file")
    with_config(g)
    g.add_argument("--out")
    g.add_argument("--count", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int, default=1, help="worker threads for sample generation")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a network and write a checkpoint plus metrics CSV")
    with_config(t)
    t.add_argument("--data")
    t.add_argument("--test-data")
    t.add_argument("--out")
    t.add_argument("--metrics", help="CSV path (default: <out>.metrics.csv)")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--epochs", type=int)
    t.add_argument("--threads", type=int, default=1, help="accepted for symmetry; training is single-threaded")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="report the relative error of a checkpoint on a dataset")
    e.add_argument("checkpoint")
    e.add_argument("dataset")
    e.add_argument("--per-sample", help="CSV of per-sample errors")
    e.add_argument("--fields", help="CSV of (x, v, u, u_nn) columns for plotting")
    e.add_argument("--field-samples", type=int, nargs="*", help="sample indices for --fields (default first 5)")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="run a built-in check suite")
    v.add_argument("--suite", required=True, choices=["linear", "grad", "params", "tree"])
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, formats.FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
