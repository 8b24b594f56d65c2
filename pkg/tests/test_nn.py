import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from downscaler import nn
from downscaler.errors import NumericError, ShapeError


def brute_conv(x, w, b, pad):
    # direct quadruple loop; independent of the im2col kernels
    c_in, h, wd = x.shape
    c_out, _, k, _ = w.shape
    xp = np.zeros((c_in, h + 2 * pad, wd + 2 * pad))
    xp[:, pad:pad + h, pad:pad + wd] = x
    ho, wo = h + 2 * pad - k + 1, wd + 2 * pad - k + 1
    out = np.zeros((c_out, ho, wo))
    for o in range(c_out):
        for i in range(ho):
            for j in range(wo):
                out[o, i, j] = b[o] + np.sum(w[o] * xp[:, i:i + k, j:j + k])
    return out


class TestConv:
    def test_identity_kernel(self, rng):
        x = rng.standard_normal((1, 5, 6)).astype(np.float32)
        w = np.ones((1, 1, 1, 1), np.float32)
        out = nn.conv2d_forward(x, w, np.zeros(1, np.float32))
        np.testing.assert_array_equal(out, x)

    def test_averaging_constant_interior(self):
        x = np.full((1, 6, 6), 2.5, np.float32)
        w = np.full((1, 1, 3, 3), 1 / 9, np.float32)
        out = nn.conv2d_forward(x, w, np.zeros(1, np.float32), "same")
        np.testing.assert_allclose(out[0, 1:-1, 1:-1], 2.5, rtol=1e-6)

    def test_valid_sum_of_entries(self):
        x = np.arange(1, 10, dtype=np.float32).reshape(1, 3, 3)
        out = nn.conv2d_forward(x, np.ones((1, 1, 3, 3), np.float32), np.zeros(1, np.float32),
                                "valid")
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == 45.0

    @pytest.mark.parametrize("padding,k", [("same", 3), ("valid", 3), ("same", 1), ("same", 5)])
    def test_matches_brute_force(self, rng, padding, k):
        x = rng.standard_normal((3, 7, 6))
        w = rng.standard_normal((4, 3, k, k))
        b = rng.standard_normal(4)
        out = nn.conv2d_forward(x, w, b, padding)
        np.testing.assert_allclose(out, brute_conv(x, w, b, k // 2 if padding == "same" else 0),
                                   rtol=1e-10, atol=1e-10)

    def test_channel_mismatch_names_dimension(self, rng):
        with pytest.raises(ShapeError, match="input channels"):
            nn.conv2d_forward(np.zeros((2, 4, 4), np.float32), np.zeros((1, 3, 3, 3), np.float32),
                              np.zeros(1, np.float32))

    def test_valid_too_small(self):
        with pytest.raises(ShapeError, match="spatial extent"):
            nn.conv2d_forward(np.zeros((1, 2, 2), np.float32), np.zeros((1, 1, 3, 3), np.float32),
                              np.zeros(1, np.float32), "valid")

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            nn.conv2d("c", 1, 1, kernel=2)


@settings(max_examples=30, deadline=None)
@given(h=st.integers(3, 9), w=st.integers(3, 9), k=st.sampled_from([1, 3]),
       padding=st.sampled_from(["same", "valid"]))
def test_conv_extents(h, w, k, padding):
    x = np.ones((2, h, w), np.float32)
    out = nn.conv2d_forward(x, np.ones((3, 2, k, k), np.float32), np.zeros(3, np.float32), padding)
    if padding == "same":
        assert out.shape == (3, h, w)
    else:
        assert out.shape == (3, h - k + 1, w - k + 1)


class TestDense:
    def test_identity(self, rng):
        x = rng.standard_normal(4).astype(np.float32)
        np.testing.assert_array_equal(nn.dense_forward(x, np.eye(4, dtype=np.float32),
                                                       np.zeros(4, np.float32)), x)

    def test_zero_input_gives_bias(self, rng):
        b = rng.standard_normal(3).astype(np.float32)
        out = nn.dense_forward(np.zeros(5, np.float32), rng.standard_normal((3, 5)).astype(np.float32), b)
        np.testing.assert_array_equal(out, b)

    def test_hand_product(self):
        out = nn.dense_forward(np.array([1.0, 2.0]), np.array([[1.0, 1.0], [1.0, -1.0]]),
                               np.array([0.0, 1.0]))
        np.testing.assert_array_equal(out, [3.0, 0.0])

    def test_width_mismatch(self):
        with pytest.raises(ShapeError, match="input width"):
            nn.dense_forward(np.zeros(3), np.zeros((2, 4)), np.zeros(2))


class TestActivations:
    def test_relu_kinks(self):
        np.testing.assert_array_equal(nn.activation(np.array([0.0, -3.0, 3.0]), "relu"), [0, 0, 3])

    def test_sigmoid_zero(self):
        assert nn.activation(np.array([0.0]), "sigmoid")[0] == 0.5

    def test_softplus_zero(self):
        assert nn.activation(np.array([0.0]), "softplus")[0] == pytest.approx(0.693147, abs=1e-6)

    def test_softplus_no_overflow(self):
        x = np.linspace(-1e4, 1e4, 2001).astype(np.float32)
        y = nn.softplus(x)
        assert np.all(np.isfinite(y)) and np.all(y >= 0)
        assert y[-1] == pytest.approx(1e4)

    def test_sigmoid_extremes_finite(self):
        y = nn.sigmoid(np.array([-1e4, 1e4], np.float32))
        assert np.all(np.isfinite(y))
        assert y[0] >= 0 and y[1] <= 1

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            nn.activation(np.zeros(2), "tanh")


def _small_stack():
    return [nn.conv2d("c1", 2, 3), nn.relu(), nn.conv2d("c2", 3, 2, padding="valid"),
            nn.softplus_layer(), nn.flatten(), nn.dense("d", 2 * 3 * 3, 4), nn.sigmoid_layer()]


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self, rng):
        layers = _small_stack()
        params = nn.init_params(layers, rng)
        x = rng.standard_normal((2, 2, 5, 5)).astype(np.float32)
        grads, gx = nn.network_backward(layers, params, x, np.zeros((2, 4), np.float32))
        assert set(grads) == set(params)
        for g in grads.values():
            assert not np.any(g)
        assert not np.any(gx)

    def test_dense_weight_grad_is_outer_product(self, rng):
        layers = [nn.dense("d", 3, 2)]
        params = nn.init_params(layers, rng, np.float64)
        x = rng.standard_normal(3)
        g = rng.standard_normal(2)
        grads, gx = nn.network_backward(layers, params, x[None], g[None])
        np.testing.assert_allclose(grads["d.weight"], np.outer(g, x))
        np.testing.assert_allclose(grads["d.bias"], g)
        np.testing.assert_allclose(gx[0], params["d.weight"].T @ g)

    def test_linear_in_upstream(self, rng):
        layers = _small_stack()
        params = nn.init_params(layers, rng, np.float64)
        x = rng.standard_normal((2, 2, 5, 5))
        g1, g2 = rng.standard_normal((2, 2, 4))
        a, _ = nn.network_backward(layers, params, x, g1)
        b, _ = nn.network_backward(layers, params, x, g2)
        c, _ = nn.network_backward(layers, params, x, 2 * g1 - 3 * g2)
        for k in a:
            np.testing.assert_allclose(c[k], 2 * a[k] - 3 * b[k], rtol=1e-9, atol=1e-12)

    def test_upstream_shape_mismatch(self, rng):
        layers = [nn.dense("d", 3, 2)]
        params = nn.init_params(layers, rng)
        with pytest.raises(ShapeError, match="upstream"):
            nn.network_backward(layers, params, np.zeros((1, 3), np.float32), np.zeros((1, 3)))

    def test_stack_matches_finite_differences(self, rng):
        layers = _small_stack() + [nn.reshape(2, 2), nn.flatten()]
        params = nn.init_params(layers, rng, np.float64)
        x = rng.standard_normal((2, 2, 5, 5))
        up = rng.standard_normal((2, 4))
        grads, gx = nn.network_backward(layers, params, x, up)
        for name in params:
            def f(v, name=name):
                p = dict(params)
                p[name] = v
                out, _ = nn.stack_forward(layers, p, x)
                return float(np.sum(out * up)), grads[name]
            assert nn.finite_difference_check(f, params[name], 1e-5) < 1e-5

        def fx(v):
            out, _ = nn.stack_forward(layers, params, v)
            return float(np.sum(out * up)), gx
        assert nn.finite_difference_check(fx, x, 1e-5) < 1e-5

    def test_upsample_backward_sums_blocks(self):
        layer = nn.upsample(2)
        x = np.arange(4.0).reshape(1, 1, 2, 2)
        _, gx = nn.layer_backward(layer, {}, x, np.ones((1, 1, 4, 4)))
        np.testing.assert_array_equal(gx, np.full((1, 1, 2, 2), 4.0))


def test_forward_is_pure(rng):
    layers = _small_stack()
    params = nn.init_params(layers, rng)
    x = rng.standard_normal((3, 2, 5, 5)).astype(np.float32)
    a, _ = nn.stack_forward(layers, params, x)
    b, _ = nn.stack_forward(layers, params, x.copy())
    assert a.tobytes() == b.tobytes()


class TestAdam:
    def test_zero_grad_fresh_state(self):
        p = {"w": np.array([1.5, -2.0], np.float32)}
        new, state = nn.adam_update(p, {"w": np.zeros(2, np.float32)}, nn.AdamState(), 0.1)
        np.testing.assert_array_equal(new["w"], p["w"])
        assert state.step == 1

    def test_first_step_is_lr_times_sign(self):
        new, _ = nn.adam_update({"w": np.array([1.0])}, {"w": np.array([1.0])}, nn.AdamState(),
                                lr=0.1)
        # m_hat = 1, v_hat = 1 -> step = 0.1 / (1 + 1e-8)
        assert new["w"][0] == pytest.approx(0.9, abs=1e-7)

    def test_two_steps_descend_quadratic(self):
        p, state = {"w": np.array([2.0])}, nn.AdamState()
        losses = [float(p["w"][0] ** 2)]
        for _ in range(2):
            p, state = nn.adam_update(p, {"w": 2 * p["w"]}, state, lr=0.1)
            losses.append(float(p["w"][0] ** 2))
        assert losses[0] > losses[1] > losses[2]
        assert state.step == 2

    def test_inputs_not_mutated(self):
        p = {"w": np.array([1.0, 2.0])}
        before = p["w"].copy()
        nn.adam_update(p, {"w": np.array([0.3, -0.2])}, nn.AdamState(), lr=0.1)
        np.testing.assert_array_equal(p["w"], before)

    def test_non_finite_gradient_aborts(self):
        with pytest.raises(NumericError, match="'w'"):
            nn.adam_update({"w": np.ones(2)}, {"w": np.array([1.0, np.nan])}, nn.AdamState())

    @pytest.mark.parametrize("kw", [{"lr": 0.0}, {"beta1": 1.0}, {"beta2": -0.1}])
    def test_invalid_hyperparameters(self, kw):
        with pytest.raises(ValueError):
            nn.adam_update({"w": np.ones(1)}, {"w": np.ones(1)}, nn.AdamState(), **kw)

    def test_moments_shape_congruent(self, rng):
        p = {"a": rng.standard_normal((2, 3)), "b": rng.standard_normal(4)}
        g = {k: rng.standard_normal(v.shape) for k, v in p.items()}
        _, state = nn.adam_update(p, g, nn.AdamState(), lr=0.01)
        for k in p:
            assert state.m[k].shape == p[k].shape == state.v[k].shape


class TestFiniteDifference:
    def test_linear_map(self, rng):
        a = rng.standard_normal(6)
        err = nn.finite_difference_check(lambda x: (float(a @ x), a), rng.standard_normal(6), 1e-3)
        assert err < 1e-5

    def test_square_at_three(self):
        err = nn.finite_difference_check(lambda w: (float(w[0] ** 2), 2 * w), np.array([3.0]), 1e-3)
        assert err < 1e-6

    def test_wrong_gradient_reports_half(self):
        err = nn.finite_difference_check(lambda w: (float(w[0] ** 2), 4 * w), np.array([3.0]), 1e-3)
        assert err == pytest.approx(0.5, abs=1e-6)

    def test_eps_must_be_positive(self):
        with pytest.raises(ValueError):
            nn.finite_difference_check(lambda w: (0.0, w), np.ones(1), 0.0)
