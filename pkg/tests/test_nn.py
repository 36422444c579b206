import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transrom.nn import AdamState, Mlp, adam_step, mlp_backward, mlp_forward, mlp_forward_cached, mlp_init


class TestInit:
    def test_deterministic_for_seed(self):
        a = mlp_init([2, 25, 3], 42)
        b = mlp_init([2, 25, 3], 42)
        for Wa, Wb in zip(a.weights, b.weights):
            assert np.array_equal(Wa, Wb)
        for ba, bb in zip(a.biases, b.biases):
            assert np.array_equal(ba, bb)

    def test_biases_zero(self):
        net = mlp_init([3, 10, 10, 4], 0)
        for b in net.biases:
            assert np.all(b == 0.0)

    def test_glorot_variance(self):
        # uniform(-L, L) with L^2 = 6/(fan_in+fan_out) has variance 2/(fan_in+fan_out)
        net = mlp_init([200, 200], 7)
        observed = net.weights[0].var()
        expected = 2.0 / 400.0
        assert abs(observed - expected) <= 0.2 * expected

    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            mlp_init([3], 0)
        with pytest.raises(ValueError):
            mlp_init([3, 0, 2], 0)


class TestForward:
    def test_zero_output_layer_gives_uniform(self):
        net = mlp_init([2, 5, 3], 0)
        net.weights[-1][:] = 0.0
        net.biases[-1][:] = 0.0
        y = mlp_forward(net, np.array([0.3, -0.7]))
        assert np.allclose(y, 1.0 / 3.0, atol=1e-15)

    def test_softmax_normalization(self):
        net = mlp_init([3, 8, 5], 1)
        rng = np.random.default_rng(2)
        net.biases[-1][:] = rng.standard_normal(5)
        for _ in range(5):
            y = mlp_forward(net, rng.standard_normal(3))
            assert abs(np.sum(y - net.biases[-1]) - 1.0) <= 1e-14

    def test_hand_computed_composition(self):
        # one hidden tanh layer, then softmax(Wx)+b, checked against numpy by hand
        net = Mlp(
            [np.array([[0.5, -1.0], [0.25, 0.75]]), np.array([[1.0, 2.0], [-1.0, 0.5]])],
            [np.array([0.1, -0.2]), np.array([0.3, 0.4])],
        )
        x = np.array([0.2, -0.4])
        a = np.tanh(net.weights[0] @ x + net.biases[0])
        z = net.weights[1] @ a
        e = np.exp(z - z.max())
        expected = e / e.sum() + net.biases[1]
        assert np.allclose(mlp_forward(net, x), expected, atol=1e-14)

    def test_dimension_mismatch(self):
        net = mlp_init([3, 4, 2], 0)
        with pytest.raises(ValueError):
            mlp_forward(net, np.zeros(5))

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
    def test_softmax_sum_property(self, vals):
        net = mlp_init([3, 6, 4], 3)
        y = mlp_forward(net, np.array(vals))
        assert abs(np.sum(y - net.biases[-1]) - 1.0) <= 1e-14


class TestBackward:
    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(4)
        net = mlp_init([2, 6, 3], 5)
        X = rng.standard_normal((7, 2))
        T = rng.standard_normal((7, 3))

        def loss_of(net):
            Y = mlp_forward(net, X)
            return float(np.sum((Y - T) ** 2))

        Y, cache = mlp_forward_cached(net, X)
        grads = mlp_backward(net, cache, 2.0 * (Y - T))
        h = 1e-6
        params = net.parameters()
        for p, g in zip(params, grads):
            flat_p, flat_g = p.ravel(), g.ravel()
            for i in range(0, flat_p.size, 3):  # sample a third of the entries
                orig = flat_p[i]
                flat_p[i] = orig + h
                lp = loss_of(net)
                flat_p[i] = orig - h
                lm = loss_of(net)
                flat_p[i] = orig
                fd = (lp - lm) / (2 * h)
                assert abs(fd - flat_g[i]) <= 1e-5 * max(1.0, abs(fd))


class TestAdam:
    def test_zero_gradient_no_motion(self):
        p = [np.array([1.0, -2.0])]
        st_ = AdamState.for_params(p)
        adam_step(p, [np.zeros(2)], st_, lr=0.1)
        assert np.array_equal(p[0], [1.0, -2.0])

    def test_first_step_is_signed_lr(self):
        p = [np.array([0.0, 0.0])]
        st_ = AdamState.for_params(p)
        g = [np.array([3.0, -0.25])]
        adam_step(p, g, st_, lr=0.01)
        # bias-corrected first step moves by ~lr*sign(g)
        assert np.allclose(p[0], [-0.01, 0.01], rtol=1e-6)

    def test_quadratic_minimization(self):
        rng = np.random.default_rng(0)
        Q = np.diag(np.linspace(1.0, 10.0, 10))
        b = rng.standard_normal(10)
        x = [np.zeros(10)]
        st_ = AdamState.for_params(x)
        for _ in range(5000):
            adam_step(x, [Q @ x[0] - b], st_, lr=1e-2)
        assert np.linalg.norm(Q @ x[0] - b) <= 1e-6
        assert np.allclose(x[0], np.linalg.solve(Q, b), atol=1e-6)
