import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vaemhn.numerics import Adam, Dense, bce_loss, kl_diag_gaussian, make_rng, matmul


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def central_diff(f, x, h=1e-5):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + h
        up = f()
        x[i] = orig - h
        down = f()
        x[i] = orig
        g[i] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6))


class TestMatmul:
    def test_identity(self):
        assert np.array_equal(matmul([[1, 0], [0, 1]], [[3, 4], [5, 6]]), [[3, 4], [5, 6]])

    def test_row_times_column(self):
        assert matmul([[1, 2]], [[3], [4]]).tolist() == [[11.0]]

    def test_matches_naive_loop(self):
        rng = make_rng(5)
        a, b = rng.standard_normal((5, 7)), rng.standard_normal((7, 3))
        assert np.max(np.abs(matmul(a, b) - naive_matmul(a, b))) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))


class TestDense:
    def test_zero_relu_layer_outputs_zero(self):
        layer = Dense(np.zeros((4, 3)), np.zeros(4), "relu")
        assert not layer.forward(make_rng(0).standard_normal((5, 3))).any()

    def test_identity_layer_passes_input_through(self):
        x = make_rng(1).standard_normal((3, 4))
        assert np.array_equal(Dense(np.eye(4), np.zeros(4)).forward(x), x)

    def test_sigmoid_at_zero(self):
        assert Dense(np.zeros((2, 2)), np.zeros(2), "sigmoid").forward(np.ones((1, 2))).tolist() == [[0.5, 0.5]]

    def test_bad_shapes(self):
        with pytest.raises(ValueError):
            Dense(np.zeros((2, 3)), np.zeros(3))
        with pytest.raises(ValueError):
            Dense(np.zeros((2, 3)), np.zeros(2)).forward(np.ones((1, 2)))

    def test_glorot_bounds(self):
        layer = Dense.glorot(30, 20, "relu", make_rng(0))
        assert np.abs(layer.weights).max() <= math.sqrt(6 / 50)
        assert not layer.bias.any()

    def test_zero_upstream_gradient(self):
        layer = Dense.glorot(3, 2, "sigmoid", make_rng(2))
        x = make_rng(3).standard_normal((4, 3))
        gx, gw, gb = layer.backward(x, np.zeros((4, 2)))
        assert not gx.any() and not gw.any() and not gb.any()

    def test_single_sample_linear_weight_gradient(self):
        layer = Dense.glorot(3, 2, "identity", make_rng(4))
        x = np.array([[1.0, -2.0, 0.5]])
        g = np.array([[0.3, -1.1]])
        _, gw, _ = layer.backward(x, g)
        assert np.allclose(gw, g.T @ x, rtol=0, atol=0)

    @settings(max_examples=40, deadline=None)
    @given(
        n=st.integers(1, 4),
        d_in=st.integers(1, 5),
        d_out=st.integers(1, 5),
        activation=st.sampled_from(["identity", "relu", "sigmoid"]),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_gradients_match_finite_differences(self, n, d_in, d_out, activation, seed):
        rng = make_rng(seed)
        layer = Dense.glorot(d_in, d_out, activation, rng)
        layer.bias[:] = rng.uniform(-0.5, 0.5, d_out)
        x = rng.standard_normal((n, d_in))
        if activation == "relu":
            # keep pre-activations away from the kink
            pre = x @ layer.weights.T + layer.bias
            layer.bias += np.where(np.abs(pre) < 1e-3, 0.01, 0.0).max(axis=0)
        upstream = rng.standard_normal((n, d_out))

        def f():
            return float(np.sum(layer.forward(x) * upstream))

        gx, gw, gb = layer.backward(x, upstream)
        assert rel_err(gx, central_diff(f, x)) < 1e-4
        assert rel_err(gw, central_diff(f, layer.weights)) < 1e-4
        assert rel_err(gb, central_diff(f, layer.bias)) < 1e-4


class TestBCE:
    def test_half_half(self):
        loss, _ = bce_loss(np.array([[0.5]]), np.array([[0.5]]))
        assert loss == pytest.approx(math.log(2), abs=1e-12)

    def test_perfect_binary_prediction_hits_clamp_floor(self):
        t = (make_rng(0).uniform(size=(3, 784)) > 0.5).astype(float)
        loss, _ = bce_loss(t.copy(), t)
        assert loss <= 784 * math.log(1 / (1 - 1e-7)) + 1e-12

    def test_matches_scalar_loop(self):
        rng = make_rng(7)
        p, t = rng.uniform(0.01, 0.99, (4, 6)), rng.uniform(size=(4, 6))
        expected = 0.0
        for i in range(4):
            for j in range(6):
                expected -= t[i, j] * math.log(p[i, j]) + (1 - t[i, j]) * math.log(1 - p[i, j])
        assert bce_loss(p, t)[0] == pytest.approx(expected / 4, abs=1e-10)
        assert bce_loss(p, t, "sum")[0] == pytest.approx(expected, abs=1e-10)

    def test_gradient(self):
        rng = make_rng(8)
        p, t = rng.uniform(0.05, 0.95, (3, 5)), rng.uniform(size=(3, 5))
        _, g = bce_loss(p, t)
        assert rel_err(g, central_diff(lambda: bce_loss(p, t)[0], p)) < 1e-4

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_non_negative(self, seed):
        rng = make_rng(seed)
        assert bce_loss(rng.uniform(size=(2, 9)), rng.uniform(size=(2, 9)))[0] >= 0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            bce_loss(np.ones((2, 2)) / 2, np.ones((2, 3)))


class TestKL:
    def test_standard_normal_is_zero(self):
        assert kl_diag_gaussian(np.zeros((1, 3)), np.zeros((1, 3)))[0] == 0.0

    def test_unit_mean_shift(self):
        assert kl_diag_gaussian(np.array([[1.0, 0.0]]), np.zeros((1, 2)))[0] == pytest.approx(0.5, abs=1e-15)

    def test_gradients(self):
        rng = make_rng(9)
        mu, lv = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
        _, gmu, glv = kl_diag_gaussian(mu, lv)
        f = lambda: kl_diag_gaussian(mu, lv)[0]  # noqa: E731
        assert rel_err(gmu, central_diff(f, mu)) < 1e-4
        assert rel_err(glv, central_diff(f, lv)) < 1e-4

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_non_negative_and_zero_only_at_prior(self, seed):
        rng = make_rng(seed)
        mu, lv = rng.standard_normal((2, 3)), rng.standard_normal((2, 3))
        assert kl_diag_gaussian(mu, lv)[0] > 0
        assert kl_diag_gaussian(mu * 0, lv * 0)[0] == 0


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = np.array([1.0, -2.0])
        opt = Adam()
        for _ in range(10):
            opt.step([p], [np.zeros(2)])
        assert p.tolist() == [1.0, -2.0]
        assert opt.step_count == 10

    def test_first_step_moves_by_learning_rate(self):
        p = np.array([0.0])
        Adam(lr=1e-3).step([p], [np.array([1.0])])
        assert p[0] == pytest.approx(-1e-3, rel=1e-5)

    def test_quadratic(self):
        # oracle run: with lr=0.02 |theta| falls monotonically for 86 steps
        theta = np.array([1.0])
        opt = Adam(lr=0.02)
        trace = []
        for _ in range(100):
            opt.step([theta], [2 * theta])
            trace.append(abs(theta[0]))
        trace = np.array(trace)
        below = int(np.argmax(trace < 0.1))
        assert np.all(np.diff(trace[: below + 1]) < 0)
        assert np.all(trace[below:] < 0.1)
        assert trace[-1] < 0.1

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            Adam().step([np.zeros(2)], [np.zeros(3)])


class TestRNG:
    def test_same_seed_same_stream(self):
        assert np.array_equal(make_rng(42).standard_normal(1000), make_rng(42).standard_normal(1000))

    def test_normal_mean(self):
        assert abs(make_rng(1).standard_normal(1_000_000).mean()) <= 0.01

    def test_permutation_is_bijection(self):
        assert sorted(make_rng(3).permutation(257).tolist()) == list(range(257))

    def test_generator_is_philox(self):
        assert type(make_rng(0).bit_generator).__name__ == "Philox"
