import numpy as np
import pytest

from transrom.errors import TrainingDivergedError
from transrom.model import (
    LpModel,
    TrainConfig,
    backprop,
    basis_values,
    coeff_values,
    load_model,
    lp_forward,
    model_parameters,
    new_model,
    predict_values,
    save_model,
    train_block_incremental,
    train_offline,
    training_loss,
)
from transrom.snapshots import SnapshotSet


def toy_snapshots(n_x=5, n_t=10, seed=0):
    x = np.linspace(0.0, 1.0, n_x)
    t = np.linspace(0.0, 1.0, n_t)
    vals = np.empty((1, n_t, n_x))
    for j, tj in enumerate(t):
        vals[0, j] = np.sin(2 * np.pi * x) * np.cos(tj) + 0.5 * x * tj
    return SnapshotSet(x, t, np.zeros((1, 0)), vals)


def parametric_snapshots(n_x=8, n_t=6, mus=(0.2, 0.5, 0.8)):
    x = np.linspace(0.0, 2.0, n_x)
    t = np.linspace(0.0, 0.5, n_t)
    mus = np.asarray(mus)[:, None]
    vals = np.empty((mus.shape[0], n_t, n_x))
    for k, mu in enumerate(mus[:, 0]):
        for j, tj in enumerate(t):
            vals[k, j] = np.exp(-((x - mu - tj) ** 2) / 0.1)
    return SnapshotSet(x, t, mus, vals)


class TestModelBasics:
    def test_r1_forward_is_scalar_product(self):
        ss = toy_snapshots()
        model = new_model(ss, r=1, seed=0)
        a = coeff_values(model, 0.3)
        phi = basis_values(model, [0.4], 0.3)[0]
        assert np.isclose(lp_forward(model, 0.4, 0.3), a[0] * phi[0])

    def test_forward_equals_componentwise_sum(self):
        ss = parametric_snapshots()
        model = new_model(ss, r=4, seed=1)
        mu = [0.5]
        a = coeff_values(model, 0.2, mu)
        phi = basis_values(model, [1.1], 0.2, mu)[0]
        assert np.isclose(lp_forward(model, 1.1, 0.2, mu), float(np.sum(a * phi)), atol=1e-14)

    def test_predict_matches_row_by_row(self):
        ss = parametric_snapshots()
        model = new_model(ss, r=3, seed=2)
        xs = np.linspace(0, 2, 7)
        vec = predict_values(model, xs, 0.1, [0.2])
        for i, x in enumerate(xs):
            assert np.isclose(vec[i], lp_forward(model, x, 0.1, [0.2]), atol=1e-14)

    def test_normalization_scales_positive(self):
        ss = toy_snapshots()
        model = new_model(ss, r=2, seed=3)
        assert np.all(model.coeff_scaler.scale > 0)
        assert np.all(model.basis_scaler.scale > 0)


class TestBackprop:
    def test_zero_gradient_at_exact_fit(self):
        ss = toy_snapshots()
        model = new_model(ss, r=2, seed=4)
        # make the target exactly the model's own prediction
        batch = []
        for x in (0.1, 0.5, 0.9):
            batch.append([x, 0.25, lp_forward(model, x, 0.25)])
        loss, grads = backprop(model, np.array(batch))
        assert loss <= 1e-24
        assert max(np.abs(g).max() for g in grads) <= 1e-12

    def test_loss_scales_quadratically(self):
        ss = toy_snapshots()
        model = new_model(ss, r=2, seed=5)
        rng = np.random.default_rng(0)
        base = rng.standard_normal((6, 3))
        preds = np.array([lp_forward(model, r_[0], r_[1]) for r_ in base])
        batch1 = base.copy()
        batch1[:, 2] = preds + 1.0
        batch2 = base.copy()
        batch2[:, 2] = preds + 2.0  # doubled residual
        l1, _ = backprop(model, batch1)
        l2, _ = backprop(model, batch2)
        assert np.isclose(l2, 4.0 * l1, rtol=1e-12)

    def test_matches_central_differences_small_net(self):
        ss = parametric_snapshots()
        model = new_model(ss, r=2, seed=6, basis_hidden=(3,), coeff_hidden=(3,))
        rng = np.random.default_rng(1)
        batch = np.column_stack(
            [rng.uniform(0, 2, 9), rng.uniform(0, 0.5, 9), rng.uniform(0.2, 0.8, 9), rng.standard_normal(9)]
        )
        loss, grads = backprop(model, batch)
        params = model_parameters(model)
        h = 1e-6
        for p, g in zip(params, grads):
            fp, fg = p.ravel(), g.ravel()
            for i in range(fp.size):
                orig = fp[i]
                fp[i] = orig + h
                lp, _ = backprop(model, batch)
                fp[i] = orig - h
                lm, _ = backprop(model, batch)
                fp[i] = orig
                fd = (lp - lm) / (2 * h)
                denom = max(abs(fd), abs(fg[i]), 1e-8)
                assert abs(fd - fg[i]) / denom <= 1e-5


class TestTraining:
    def test_interpolating_init_stays_put(self):
        ss = toy_snapshots()
        model = new_model(ss, r=2, seed=7)
        # targets = the model's own predictions -> loss at rounding level.
        # Adam normalizes gradients, so rounding-level gradients still move
        # parameters by up to ~lr per step; that bound is what we check.
        fitted = ss.values.copy()
        for j, tj in enumerate(ss.times):
            fitted[0, j] = predict_values(model, ss.nodes, tj)
        ss_fit = SnapshotSet(ss.nodes, ss.times, ss.parameters, fitted)
        before = [p.copy() for p in model_parameters(model)]
        lr, epochs = 1e-3, 3
        model, hist = train_offline(model, ss_fit, TrainConfig(epochs=epochs, learning_rate=lr, seed=8))
        assert hist[-1] <= 1e-12
        drift = max(np.abs(p0 - p1).max() for p0, p1 in zip(before, model_parameters(model)))
        assert drift <= 1.1 * epochs * lr

    def test_loss_decreases(self):
        ss = parametric_snapshots()
        model = new_model(ss, r=3, seed=9)
        model, hist = train_offline(model, ss, TrainConfig(epochs=40, learning_rate=3e-3, seed=10))
        assert hist[-1] < hist[0]

    def test_determinism(self):
        ss = parametric_snapshots()
        runs = []
        for _ in range(2):
            model = new_model(ss, r=3, seed=11)
            model, hist = train_offline(model, ss, TrainConfig(epochs=15, learning_rate=1e-3, seed=12))
            runs.append((hist, [p.copy() for p in model_parameters(model)]))
        assert runs[0][0] == runs[1][0]
        for a, b in zip(runs[0][1], runs[1][1]):
            assert np.array_equal(a, b)

    def test_overfit_small_corpus(self):
        # 50-point corpus driven below 1e-6 mean-square misfit
        ss = toy_snapshots()
        model = new_model(ss, r=5, seed=11)
        model, hist = train_offline(model, ss, TrainConfig(epochs=5000, learning_rate=3e-3, seed=12))
        assert min(hist) <= 1e-6

    def test_divergence_reports_location(self):
        ss = toy_snapshots()
        model = new_model(ss, r=2, seed=13)
        with pytest.raises(TrainingDivergedError) as err:
            train_offline(model, ss, TrainConfig(epochs=3, learning_rate=1e200, seed=14))
        assert err.value.epoch >= 0
        assert err.value.batch >= 0


class TestBlockIncremental:
    def test_zero_delta_is_identity(self):
        ss = toy_snapshots()
        model = new_model(ss, r=3, seed=15)
        augmented, hist = train_block_incremental(model, 0, ss, TrainConfig(epochs=5, seed=16))
        assert augmented is model
        assert hist == []

    def test_residual_fit_cannot_worsen(self):
        # capacity-limited base (r=1) leaves a structured residual the
        # second block can genuinely reduce
        ss = parametric_snapshots(mus=(0.2, 0.5, 0.8))
        base = new_model(ss, r=1, seed=20)
        base, _ = train_offline(base, ss, TrainConfig(epochs=400, learning_rate=3e-3, seed=21))
        base_loss = training_loss(base, ss)
        augmented, _ = train_block_incremental(base, 2, ss, TrainConfig(epochs=400, learning_rate=3e-3, seed=22))
        assert augmented.reduced_order == 3
        assert training_loss(augmented, ss) <= base_loss * (1 + 1e-9)

    def test_validation_improves_on_heldout(self):
        full = parametric_snapshots(mus=(0.2, 0.35, 0.5, 0.65, 0.8))
        train = SnapshotSet(full.nodes, full.times, full.parameters[::2], full.values[::2])
        val = SnapshotSet(full.nodes, full.times, full.parameters[1::2], full.values[1::2])
        base = new_model(train, r=1, seed=20)
        base, _ = train_offline(base, train, TrainConfig(epochs=400, learning_rate=3e-3, seed=21))
        augmented, _ = train_block_incremental(base, 2, train, TrainConfig(epochs=400, learning_rate=3e-3, seed=22))
        assert training_loss(augmented, val) < training_loss(base, val)


class TestPersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        ss = parametric_snapshots()
        model = new_model(ss, r=3, seed=23)
        model, _ = train_offline(model, ss, TrainConfig(epochs=5, seed=24))
        path = tmp_path / "model.json"
        save_model(path, model)
        loaded = load_model(path)
        for a, b in zip(model_parameters(model), model_parameters(loaded)):
            assert np.array_equal(a, b)
        assert loaded.mu_dim == model.mu_dim
        xs = np.linspace(0, 2, 11)
        assert np.array_equal(
            predict_values(model, xs, 0.3, [0.4]), predict_values(loaded, xs, 0.3, [0.4])
        )
