import csv
import shutil
import subprocess

import numpy as np
import pytest

from mnnh2 import formats
from mnnh2.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from mnnh2.train import rel_l2_error


@pytest.fixture
def workdir(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("problem = ks\nL = 3\nm = 5\nr = 3\nK = 2\nepochs = 3\nlr = 1e-3\ncount = 30\n")
    return tmp_path, cfg


def gen(tmp, cfg, name, *extra):
    out = tmp / name
    assert main(["gen", "--config", str(cfg), "--out", str(out), *extra]) == EXIT_OK
    return out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestGen:
    def test_same_seed_same_bytes(self, workdir):
        tmp, cfg = workdir
        a = gen(tmp, cfg, "a.bin", "--seed", "4")
        b = gen(tmp, cfg, "b.bin", "--seed", "4", "--threads", "2")
        c = gen(tmp, cfg, "c.bin", "--seed", "5")
        assert a.read_bytes() == b.read_bytes() != c.read_bytes()

    def test_header_matches_config(self, workdir):
        tmp, cfg = workdir
        data = formats.read_dataset(gen(tmp, cfg, "d.bin", "--count", "7"))
        assert len(data) == 7 and data.N == 40 and data.d == 1

    def test_missing_out(self, workdir, capsys):
        _, cfg = workdir
        assert main(["gen", "--config", str(cfg)]) == EXIT_USAGE
        assert "--out" in capsys.readouterr().err

    def test_unknown_key(self, workdir):
        tmp, cfg = workdir
        assert main(["gen", "--config", str(cfg), "--set", "colour=red", "--out", str(tmp / "x")]) == EXIT_USAGE

    def test_solver_failure_is_numeric(self, workdir):
        tmp, _ = workdir
        rc = main(["gen", "--set", "max_steps=2", "--set", "count=2", "--out", str(tmp / "x.bin")])
        assert rc == EXIT_NUMERIC


class TestTrainEval:
    def test_train_eval_resume(self, workdir, capsys):
        tmp, cfg = workdir
        data = gen(tmp, cfg, "train.bin")
        test = gen(tmp, cfg, "test.bin", "--seed", "9", "--count", "10")
        ck = tmp / "net.ck"
        assert main(["train", "--config", str(cfg), "--data", str(data), "--test-data", str(test),
                     "--out", str(ck)]) == EXIT_OK
        rows = read_csv(str(ck) + ".metrics.csv")
        assert [int(r["epoch"]) for r in rows] == [1, 2, 3]
        assert float(rows[-1]["eps_test"]) > 0

        # eval reproduces the final training error
        capsys.readouterr()
        per = tmp / "per.csv"
        assert main(["eval", str(ck), str(data), "--per-sample", str(per)]) == EXIT_OK
        out = capsys.readouterr().out
        eps = float(out.split("eps ")[1].split()[0])
        assert eps == pytest.approx(float(rows[-1]["eps_train"]), rel=1e-6)
        per_rows = read_csv(per)
        assert len(per_rows) == 30
        mean = np.mean([float(r["eps"]) for r in per_rows])
        assert mean == pytest.approx(float(rows[-1]["eps_train"]), rel=1e-12)

        # three more epochs from the checkpoint equal a straight six-epoch run
        assert main(["train", "--config", str(cfg), "--data", str(data), "--resume", str(ck),
                     "--out", str(tmp / "resumed.ck"), "--metrics", str(tmp / "m.csv")]) == EXIT_OK
        assert main(["train", "--config", str(cfg), "--data", str(data), "--epochs", "6",
                     "--out", str(tmp / "straight.ck")]) == EXIT_OK
        resumed = read_csv(tmp / "m.csv")
        straight = read_csv(str(tmp / "straight.ck") + ".metrics.csv")
        assert [r["loss"] for r in resumed] == [r["loss"] for r in straight[3:]]
        net_a, _, ep_a = formats.read_checkpoint(tmp / "resumed.ck")
        net_b, _, ep_b = formats.read_checkpoint(tmp / "straight.ck")
        assert ep_a == ep_b == 6
        for a, b in zip(net_a.params, net_b.params):
            np.testing.assert_array_equal(a, b)

    def test_fields_and_zero_error(self, workdir, capsys):
        tmp, cfg = workdir
        data_path = gen(tmp, cfg, "d.bin", "--count", "4")
        ck = tmp / "n.ck"
        assert main(["train", "--config", str(cfg), "--data", str(data_path), "--epochs", "1",
                     "--out", str(ck)]) == EXIT_OK
        net, _, _ = formats.read_checkpoint(ck)
        data = formats.read_dataset(data_path)
        # a dataset whose targets are the network's own predictions evaluates to zero error
        own = tmp / "own.bin"
        formats.write_dataset(own, type(data)(data.inputs, net.predict(data.inputs)))
        capsys.readouterr()
        fields = tmp / "f.csv"
        assert main(["eval", str(ck), str(own), "--fields", str(fields), "--field-samples", "1"]) == EXIT_OK
        assert "eps 0.000000e+00" in capsys.readouterr().out
        rows = read_csv(fields)
        assert len(rows) == 40 and rows[0]["sample"] == "1"
        assert float(rows[3]["x"]) == pytest.approx(3 / 40)
        assert float(rows[3]["u"]) == float(rows[3]["u_nn"])
        assert rel_l2_error(net.predict(data.inputs), net.predict(data.inputs)).max() == 0

    def test_grid_mismatch(self, workdir):
        tmp, cfg = workdir
        wide = gen(tmp, cfg, "w.bin", "--set", "m=10", "--count", "3")
        assert main(["train", "--config", str(cfg), "--data", str(wide), "--out", str(tmp / "n.ck")]) == EXIT_USAGE

    def test_corrupt_checkpoint(self, workdir):
        tmp, cfg = workdir
        data = gen(tmp, cfg, "d.bin", "--count", "3")
        bad = tmp / "bad.ck"
        bad.write_bytes(b"NOTACKPT" + b"\0" * 32)
        assert main(["eval", str(bad), str(data)]) == EXIT_USAGE
        assert main(["eval", str(tmp / "missing.ck"), str(data)]) == EXIT_USAGE


class TestVerify:
    @pytest.mark.parametrize("suite", ["tree", "params", "linear"])
    def test_suites_pass(self, suite, capsys):
        assert main(["verify", "--suite", suite]) == EXIT_OK
        out = capsys.readouterr().out
        assert "FAIL" not in out and "passed" in out

    def test_failing_suite_exit_code(self, monkeypatch):
        from mnnh2 import cli
        from mnnh2.verify import Check

        monkeypatch.setattr(cli, "run_suite", lambda name: [Check("x", 1.0, 0.0, False)])
        assert main(["verify", "--suite", "tree"]) == 1

    def test_bad_suite(self):
        with pytest.raises(SystemExit):
            main(["verify", "--suite", "everything"])

    @pytest.mark.skipif(shutil.which("mnnh2") is None, reason="console script not installed")
    def test_console_script(self):
        proc = subprocess.run(["mnnh2", "verify", "--suite", "tree"], capture_output=True, text=True)
        assert proc.returncode == 0 and "tree:" in proc.stdout
