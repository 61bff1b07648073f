import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mnnh2.h2core import build_tree, matvec, random_h2
from mnnh2.model import MNNH2, NetworkConfig
from mnnh2.train import (Dataset, History, Nadam, TrainConfig, TrainingDiverged, error_stats, evaluate, grad_check,
                         mse_loss, rel_l2_error, train)
from mnnh2.verify import kink_free


def keras_nadam_scalar(theta, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8, decay=0.004):
    """Scalar transcription of the Keras 2 Nadam update."""
    m = v = 0.0
    sched = 1.0
    out = []
    for t, g in enumerate(grads, start=1):
        cache_t = b1 * (1.0 - 0.5 * math.pow(0.96, t * decay))
        cache_t1 = b1 * (1.0 - 0.5 * math.pow(0.96, (t + 1) * decay))
        sched_new = sched * cache_t
        sched_next = sched_new * cache_t1
        sched = sched_new
        g_prime = g / (1.0 - sched_new)
        m = b1 * m + (1.0 - b1) * g
        m_prime = m / (1.0 - sched_next)
        v = b2 * v + (1.0 - b2) * g * g
        v_prime = v / (1.0 - math.pow(b2, t))
        m_bar = (1.0 - cache_t) * g_prime + cache_t1 * m_prime
        theta = theta - lr * m_bar / (math.sqrt(v_prime) + eps)
        out.append(theta)
    return out


def realizable_data(L=3, m=4, r=2, count=200, seed=0):
    h2 = random_h2(build_tree(L, m), r, seed=seed)
    v = np.random.default_rng(seed + 1).standard_normal((count, h2.tree.N))
    return Dataset(v, matvec(h2, v))


def linear_net(L=3, m=4, r=2, seed=0):
    return MNNH2(NetworkConfig(L=L, m=m, r=r, K=1, sharing_mode="lc", activation="linear",
                               transfer_activation="linear", sigma_init=0.1), seed)


class TestMetrics:
    def test_mse(self):
        loss, g = mse_loss(np.array([[1.0, 2.0]]), np.array([[0.0, 0.0]]))
        assert loss == 2.5
        np.testing.assert_array_equal(g, [[1.0, 2.0]])

    def test_rel_l2(self):
        np.testing.assert_allclose(rel_l2_error(np.array([[3.0, 4.0]]), np.array([[0.0, 5.0]])),
                                   [math.sqrt(10) / 5])
        np.testing.assert_array_equal(rel_l2_error(np.ones((2, 3, 3)), np.ones((2, 3, 3))), [0.0, 0.0])

    def test_rel_l2_zero_target(self):
        with pytest.raises(ValueError):
            rel_l2_error(np.ones((1, 4)), np.zeros((1, 4)))

    @settings(max_examples=20)
    @given(st.lists(st.floats(0, 10), min_size=2, max_size=30))
    def test_error_stats_two_pass(self, errs):
        mean, std = error_stats(errs)
        mu = sum(errs) / len(errs)
        var = sum((e - mu) ** 2 for e in errs) / (len(errs) - 1)
        assert mean == pytest.approx(mu, rel=1e-12, abs=1e-300)
        assert std == pytest.approx(math.sqrt(var), rel=1e-9, abs=1e-12)

    def test_dataset_validation(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 8)), np.zeros((2, 9)))
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 8, 4)), np.zeros((2, 8, 4)))

    def test_history_column_gaps(self):
        h = History()
        h.append(epoch=1, loss=1.0)
        h.append(epoch=2, loss=0.5, eps_train=0.1)
        col = h.column("eps_train")
        assert math.isnan(col[0]) and col[1] == 0.1


class TestNadam:
    def test_zero_gradient_no_move(self):
        p = [np.array([1.0, -2.0])]
        opt = Nadam()
        for _ in range(3):
            opt.step(p, [np.zeros(2)])
        np.testing.assert_array_equal(p[0], [1.0, -2.0])

    def test_matches_keras_transcription(self):
        gs = [0.3, -1.2, 0.7, 2.0]
        ref = keras_nadam_scalar(0.5, gs, lr=0.01)
        p = [np.array([0.5])]
        opt = Nadam(lr=0.01)
        for g, want in zip(gs, ref):
            opt.step(p, [np.array([g])])
            assert p[0][0] == pytest.approx(want, rel=1e-14)

    def test_first_step_frozen(self):
        # g=1 from 0: the second moment is exactly debiased to 1, so the step is lr * m_bar
        mu1 = 0.9 * (1 - 0.5 * 0.96**0.004)
        mu2 = 0.9 * (1 - 0.5 * 0.96**0.008)
        m_bar = 1.0 + mu2 * 0.1 / (1 - mu1 * mu2)
        p = [np.array([0.0])]
        Nadam(lr=1e-3).step(p, [np.array([1.0])])
        assert p[0][0] == pytest.approx(-1e-3 * m_bar / (1 + 1e-8), rel=1e-12)
        assert p[0][0] == pytest.approx(-1.0564517677908705e-3, rel=1e-12)


class TestTrain:
    def test_zero_lr_keeps_params(self):
        data = realizable_data(count=50)
        net = linear_net()
        before = [p.copy() for p in net.params]
        train(net, data, TrainConfig(epochs=1), Nadam(lr=0.0))
        for a, b in zip(before, net.params):
            np.testing.assert_array_equal(a, b)

    def test_seeded_reproducible(self):
        data = realizable_data(count=60)
        runs = []
        for _ in range(2):
            net, _, hist = train(linear_net(seed=2), data, TrainConfig(epochs=3, seed=5), Nadam(lr=1e-2))
            runs.append((net.params, hist.column("loss")))
        np.testing.assert_array_equal(runs[0][1], runs[1][1])
        for a, b in zip(runs[0][0], runs[1][0]):
            np.testing.assert_array_equal(a, b)

    def test_resume_matches_straight_run(self):
        data = realizable_data(count=60)
        cfg = TrainConfig(epochs=4, seed=1)
        net_a, _, hist_a = train(linear_net(seed=3), data, cfg, Nadam(lr=1e-2))
        net_b, opt, _ = train(linear_net(seed=3), data, TrainConfig(epochs=2, seed=1), Nadam(lr=1e-2))
        net_b, _, hist_b = train(net_b, data, TrainConfig(epochs=2, seed=1), opt, start_epoch=2)
        np.testing.assert_array_equal(hist_a.column("loss")[2:], hist_b.column("loss"))
        for a, b in zip(net_a.params, net_b.params):
            np.testing.assert_array_equal(a, b)

    def test_nan_raises(self):
        data = realizable_data(count=20)
        data.targets[3, 0] = np.nan
        with pytest.raises(TrainingDiverged):
            train(linear_net(), data, TrainConfig(epochs=1))

    def test_grid_mismatch(self):
        with pytest.raises(ValueError):
            train(linear_net(), Dataset(np.ones((4, 40)), np.ones((4, 40))), TrainConfig(epochs=1))

    def test_default_batch_size(self):
        assert TrainConfig().resolved_batch(2000) == 20
        assert TrainConfig().resolved_batch(50) == 1
        assert TrainConfig(batch_size=7).resolved_batch(2000) == 7

    def test_eval_schedule(self):
        data = realizable_data(count=30)
        _, _, hist = train(linear_net(), data, TrainConfig(epochs=5, eval_every=2), Nadam(), test=data)
        evaluated = [r["epoch"] for r in hist.rows if "eps_test" in r]
        assert evaluated == [2, 4, 5]
        assert evaluate(linear_net(), data)[0] > 0

    def test_loss_decreases_early(self):
        data = realizable_data(count=200)
        curves = []
        for seed in range(3):
            _, _, hist = train(linear_net(seed=seed), data, TrainConfig(epochs=5, seed=seed, eval_every=0),
                               Nadam(lr=1e-3))
            curves.append(hist.column("loss"))
        mean = np.mean(curves, axis=0)
        assert np.all(np.diff(mean) <= 0)


class TestGradCheck:
    def test_zero_upstream(self):
        net = linear_net()
        out, cache = net.forward(np.ones((2, net.cfg.N)))
        gv, grads = net.backward(cache, np.zeros_like(out))
        assert not np.any(gv) and not any(np.any(g) for g in grads)

    def test_input_gradient_matches_fd(self):
        cfg = NetworkConfig(L=3, m=3, r=2, K=2, sharing_mode="mixed", transfer_activation="relu")
        net, v = kink_free(lambda: MNNH2(cfg), (2, cfg.N), 4)
        R = np.random.default_rng(0).standard_normal(v.shape)
        out, cache = net.forward(v)
        gv, _ = net.backward(cache, R)
        h = 1e-6
        for j in [0, 5, 13, 23]:
            e = np.zeros_like(v)
            e[1, j] = h
            fd = (np.sum(R * net.forward(v + e)[0]) - np.sum(R * net.forward(v - e)[0])) / (2 * h)
            assert gv[1, j] == pytest.approx(fd, rel=1e-6, abs=1e-10)

    def test_grad_check_linear(self):
        net = linear_net(seed=5)
        assert grad_check(net, np.random.default_rng(0).standard_normal((2, net.cfg.N))) <= 1e-7

    def test_grad_check_detects_wrong_gradient(self):
        net = linear_net(seed=5)
        real = net.backward

        def broken(cache, g):
            gv, grads = real(cache, g)
            return gv, [1.1 * x for x in grads]

        net.backward = broken
        assert grad_check(net, np.ones((1, net.cfg.N))) > 0.05
