from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mnnh2.layers import LCI, LCK, LCR, Layer, LayerSpec


def random_layer(spec, seed=0, bias_scale=0.1):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal(spec.weight_shape)
    b = bias_scale * rng.standard_normal(spec.bias_shape) if spec.bias else None
    return Layer(spec, W, b)


def loop_forward(layer, x):
    """Direct nested-loop evaluation of one layer (the oracle)."""
    s = layer.spec
    nb = x.shape[0]
    out = np.zeros((nb, s.alpha_out) + s.Nx_out)
    half = [(k - 1) // 2 if s.kind == "kernel" else 0 for k in s.w]
    for pos in product(*[range(n) for n in s.Nx_out]):
        W = layer.W[pos] if s.sharing == "local" else layer.W
        for tap in product(*[range(k) for k in s.w]):
            src = [p * st_ + t - h for p, st_, t, h in zip(pos, s.stride, tap, half)]
            inside = all(0 <= q < n for q, n in zip(src, s.Nx))
            if not inside and s.padding == "zero":
                continue
            src = tuple(q % n for q, n in zip(src, s.Nx))
            vals = x[(slice(None), slice(None)) + src]  # (batch, alpha)
            out[(slice(None), slice(None)) + pos] += vals @ W[(slice(None), slice(None)) + tap].T
        if layer.b is not None:
            bb = layer.b[(slice(None),) + pos] if s.sharing == "local" else layer.b
            out[(slice(None), slice(None)) + pos] += bb
    return np.maximum(out, 0) if s.activation == "relu" else out


ALL_SPECS = [
    LCR(16, 2, 8, 3),
    LCR(12, 1, 3, 2, "relu", "conv"),
    LCK(8, 2, 3, 3, "relu"),
    LCK(8, 2, 2, 5, "linear", "conv", "zero"),
    LCK(4, 1, 2, 5, "relu", "local", "periodic"),
    LCI(8, 3, 4, "relu"),
    LCI(8, 3, 2, "linear", "conv"),
    LCR((4, 6), 1, (2, 3), 2, "relu"),
    LCK((4, 4), 2, 2, (3, 3), "relu", "conv", "zero"),
    LCK((4, 4), 1, 2, (3, 5), "linear", "local", "periodic"),
    LCI((2, 4), 2, 3, "linear", "local"),
]


class TestSpec:
    def test_restriction_geometry(self):
        s = LCR(16, 2, 8, 3)
        assert s.w == (2,) and s.stride == (2,) and s.Nx_out == (8,)
        out = Layer(s)(np.zeros((1, 2, 16)))
        assert out.shape == (1, 3, 8)

    def test_param_counts(self):
        assert LCR(16, 2, 8, 3).param_count(include_bias=False) == 96
        assert LCR(16, 2, 8, 3).param_count() == 96 + 24
        assert LCK(8, 6, 6, 7, sharing="conv").param_count(include_bias=False) == 252
        assert LCK(8, 6, 6, 7, sharing="conv").param_count() == 258
        assert LCK(8, 6, 6, 7, sharing="conv", bias=False).param_count() == 252

    @pytest.mark.parametrize("kw", [
        dict(kind="kernel", sharing="local", Nx=8, alpha=1, alpha_out=1, w=4),
        dict(kind="restriction", sharing="local", Nx=10, alpha=1, alpha_out=1, Nx_out=4),
        dict(kind="pool", sharing="local", Nx=8, alpha=1, alpha_out=1),
        dict(kind="interpolation", sharing="tied", Nx=8, alpha=1, alpha_out=1),
        dict(kind="interpolation", sharing="local", Nx=8, alpha=1, alpha_out=1, activation="tanh"),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            LayerSpec(**kw)

    def test_wrong_input_shape(self):
        with pytest.raises(ValueError):
            Layer(LCK(8, 2, 2, 3))(np.zeros((1, 1, 8)))


class TestForward:
    @pytest.mark.parametrize("spec", ALL_SPECS, ids=repr)
    def test_matches_loop_oracle(self, spec):
        layer = random_layer(spec, 3)
        x = np.random.default_rng(4).standard_normal((3, spec.alpha) + spec.Nx)
        np.testing.assert_allclose(layer(x), loop_forward(layer, x), rtol=1e-13, atol=1e-13)

    def test_cyclic_sum(self):
        layer = Layer(LCK(4, 1, 1, 3, sharing="conv", bias=False), W=np.ones((1, 1, 3)))
        out = layer(np.array([[[1.0, 2.0, 3.0, 4.0]]]))
        np.testing.assert_array_equal(out[0, 0], [7.0, 6.0, 9.0, 8.0])

    @pytest.mark.parametrize("sharing", ["local", "conv"])
    def test_delta_kernel_is_identity(self, sharing):
        spec = LCK(10, 2, 2, 5, sharing=sharing)
        W = np.zeros(spec.weight_shape)
        W[..., 0, 0, 2] = 1.0
        W[..., 1, 1, 2] = 1.0
        x = np.random.default_rng(0).standard_normal((2, 2, 10))
        np.testing.assert_array_equal(Layer(spec, W)(x), x)

    def test_window_wider_than_grid_wraps(self):
        # 4 positions, window 5: the tap two to the left and two to the right read the same source
        spec = LCK(4, 1, 1, 5, sharing="conv", bias=False)
        W = np.array([[[1.0, 0, 0, 0, 1.0]]])
        x = np.arange(4.0)[None, None]
        np.testing.assert_array_equal(Layer(spec, W)(x)[0, 0], 2 * np.roll(x[0, 0], 2))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 7), st.integers(0, 50))
    def test_conv_shift_equivariance(self, shift, seed):
        layer = random_layer(LCK(8, 2, 3, 3, "relu", "conv"), seed)
        x = np.random.default_rng(seed + 1).standard_normal((1, 2, 8))
        np.testing.assert_array_equal(layer(np.roll(x, shift, -1)), np.roll(layer(x), shift, -1))

    def test_strided_conv_shift_by_stride(self):
        layer = random_layer(LCR(12, 2, 4, 3, "relu", "conv"), 2)
        x = np.random.default_rng(5).standard_normal((1, 2, 12))
        np.testing.assert_array_equal(layer(np.roll(x, 3, -1)), np.roll(layer(x), 1, -1))

    @pytest.mark.parametrize("kind", ["restriction", "kernel", "interpolation"])
    def test_tied_local_equals_conv(self, kind):
        mk = {"restriction": lambda s: LCR(8, 2, 4, 3, "relu", s),
              "kernel": lambda s: LCK(8, 2, 3, 3, "relu", s, "zero"),
              "interpolation": lambda s: LCI(8, 2, 3, "relu", s)}[kind]
        conv = random_layer(mk("conv"), 7)
        local_spec = mk("local")
        W = np.broadcast_to(conv.W, local_spec.weight_shape)
        b = np.broadcast_to(conv.b[:, None], local_spec.bias_shape)
        local = Layer(local_spec, W, b)
        x = np.random.default_rng(1).standard_normal((4, 2, 8))
        # equal up to the summation order of the two matrix products
        np.testing.assert_allclose(local(x), conv(x), rtol=1e-14, atol=1e-15)

    def test_locality(self):
        layer = random_layer(LCK(16, 1, 1, 5, "relu"), 3)
        x = np.random.default_rng(2).standard_normal((1, 1, 16))
        y = x.copy()
        y[0, 0, 7] += 1.0
        changed = np.nonzero(layer(x)[0, 0] != layer(y)[0, 0])[0]
        assert set(changed) <= {5, 6, 7, 8, 9}

    def test_linear_layer_is_affine(self):
        layer = random_layer(LCK((4, 4), 2, 2, (3, 3), "linear", "local", "zero"), 1)
        rng = np.random.default_rng(3)
        x, y = rng.standard_normal((2, 1, 2, 4, 4))
        zero = layer(np.zeros_like(x))
        np.testing.assert_allclose(layer(2 * x + y) - zero, 2 * (layer(x) - zero) + (layer(y) - zero), atol=1e-12)


def fd_layer_grads(layer, x, R, h=1e-6):
    """Central differences of sum(R * layer(x)) w.r.t. x and every parameter."""
    def f():
        return np.sum(R * layer(x))

    out = []
    for arr in [x] + layer.params:
        g = np.zeros_like(arr)
        flat, gf = arr.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + h
            fp = f()
            flat[j] = old - h
            fm = f()
            flat[j] = old
            gf[j] = (fp - fm) / (2 * h)
        out.append(g)
    return out


class TestBackward:
    @pytest.mark.parametrize("spec", ALL_SPECS, ids=repr)
    def test_finite_differences(self, spec):
        layer = random_layer(spec, 11, bias_scale=0.5)
        x = np.random.default_rng(12).standard_normal((2, spec.alpha) + spec.Nx)
        out, cache = layer.forward(x)
        R = np.random.default_rng(13).standard_normal(out.shape)
        gx, grads = layer.backward(cache, R)
        num = fd_layer_grads(layer, x, R)
        for ana, fd in zip([gx] + grads, num):
            scale = max(np.abs(fd).max(), 1e-12)
            assert np.abs(ana - fd).max() / scale <= 1e-5

    def test_outer_product(self):
        # one output position and channel: dW is upstream times the input window
        spec = LCK(1, 3, 1, 1, "linear", "conv", bias=False)
        layer = random_layer(spec, 0)
        x = np.random.default_rng(1).standard_normal((1, 3, 1))
        _, cache = layer.forward(x)
        _, (gW,) = layer.backward(cache, np.array([[[2.5]]]))
        np.testing.assert_allclose(gW[0, :, 0], 2.5 * x[0, :, 0])

    def test_relu_zero_subgradient(self):
        spec = LCI(1, 1, 1, "relu", "conv")
        layer = Layer(spec, W=np.ones((1, 1, 1)), b=np.zeros(1))
        out, cache = layer.forward(np.zeros((1, 1, 1)))
        gx, (gW, gb) = layer.backward(cache, np.ones_like(out))
        assert gx.item() == 0 and gW.item() == 0 and gb.item() == 0

    def test_zero_upstream(self):
        layer = random_layer(LCK(8, 2, 2, 3, "relu"), 0)
        x = np.random.default_rng(0).standard_normal((2, 2, 8))
        out, cache = layer.forward(x)
        gx, grads = layer.backward(cache, np.zeros_like(out))
        assert not np.any(gx) and not any(np.any(g) for g in grads)
