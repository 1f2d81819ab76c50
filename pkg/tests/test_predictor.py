"""
Recurrent predictor: scaling, forward pass, BPTT against finite
differences, training and architecture selection.
"""

import math

import numpy as np
import pytest

from stablepath.errors import ParameterError
from stablepath.mobility import LocationSeries
from stablepath.predictor import (
    NetConfig,
    PersistenceForecaster,
    RecurrentNet,
    bptt_gradient,
    evaluate,
    finite_diff_gradient,
    fit_scaler,
    forward_one,
    grid_select,
    loss,
    predict_multi_step,
    sigmoid,
    sigmoid_prime,
    train,
    train_node_predictor,
)


def random_net(n_input, n_hidden, horizon, seed, n_feedback=None):
    config = NetConfig(n_input=n_input, n_hidden=n_hidden, horizon=horizon, n_feedback=n_feedback, rng_seed=seed)
    return RecurrentNet.initialize(config)


class TestConfig:
    def test_defaults(self):
        config = NetConfig()
        assert (config.n_input, config.n_hidden, config.horizon) == (8, 5, 3)
        assert config.n_feedback == 2
        assert config.learning_rate == 0.05 and config.epochs == 500

    @pytest.mark.parametrize("kwargs", [
        {"n_input": 0}, {"n_hidden": 0}, {"horizon": 0}, {"n_feedback": 9}, {"learning_rate": -0.1},
    ])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ParameterError):
            NetConfig(**kwargs)


class TestScaler:
    def test_endpoints(self):
        scaler = fit_scaler([0.0, 100.0], 0.1)
        assert np.allclose(scaler.scale([0.0, 100.0, 50.0]), [0.1, 0.9, 0.5], rtol=0, atol=1e-12)

    def test_constant_series(self):
        scaler = fit_scaler([7.0, 7.0, 7.0], 0.1)
        assert scaler.scale([7.0])[0] == pytest.approx(0.5, abs=1e-12)

    def test_round_trip(self, rng):
        scaler = fit_scaler(rng.uniform(-500.0, 1500.0, 50), 0.1)
        x = rng.uniform(-300.0, 1300.0, 1000)
        back = scaler.unscale(scaler.scale(x, clamp=False))
        assert np.max(np.abs(back - x) / np.maximum(np.abs(x), 1.0)) < 1e-12

    def test_out_of_range_values_are_clamped(self):
        scaler = fit_scaler([0.0, 100.0], 0.1)
        scaled = scaler.scale([-1000.0, 50.0, 1000.0])
        assert scaled[0] == 0.001 and scaled[2] == 0.999
        assert scaled[1] == pytest.approx(0.5)

    def test_invalid_margin(self):
        with pytest.raises(ParameterError):
            fit_scaler([1.0, 2.0], 0.5)


class TestForward:
    def test_sigmoid_derivative(self):
        assert sigmoid(0.0) == 0.5
        assert sigmoid_prime(0.0) == 0.25
        assert np.isfinite(sigmoid(-800.0)) and np.isfinite(sigmoid(800.0))

    def test_zero_weights(self):
        net = RecurrentNet.zeros(NetConfig(n_input=4, n_hidden=3))
        output, step = forward_one(net, [0.3, 0.1, 0.7, 0.9])
        assert output == 0.5
        assert np.all(step.o_c == 0.5)
        outputs, _ = predict_multi_step(net, [0.3, 0.1, 0.7, 0.9], 3)
        assert list(outputs) == [0.5, 0.5, 0.5]

    def test_two_sigmoid_composition(self):
        net = RecurrentNet(NetConfig(n_input=1, n_hidden=1, horizon=1), [[1.0], [0.0]], [1.0, 0.0])
        output, _ = forward_one(net, [0.0])
        assert output == pytest.approx(1.0 / (1.0 + math.exp(-0.5)), abs=1e-12)
        assert output == pytest.approx(0.62246, abs=1e-5)

    def test_single_step_equals_forward_one(self):
        net = random_net(5, 3, 1, seed=4)
        history = np.linspace(0.1, 0.9, 5)
        outputs, _ = predict_multi_step(net, history, 1)
        assert outputs[0] == forward_one(net, history)[0]

    def test_outputs_strictly_inside_unit_interval(self, rng):
        for seed in range(20):
            net = random_net(6, 4, 4, seed=seed)
            outputs, _ = predict_multi_step(net, rng.uniform(-5.0, 5.0, 6), 4)
            assert np.all((outputs > 0.0) & (outputs < 1.0))

    def test_horizon_consistency(self):
        net = random_net(5, 4, 5, seed=8)
        history = np.linspace(0.2, 0.6, 5)
        first, trace = predict_multi_step(net, history, 2)
        rest, _ = predict_multi_step(net, trace.next_window(), 3)
        full, _ = predict_multi_step(net, history, 5)
        assert np.array_equal(np.concatenate([first, rest]), full)

    def test_history_length_checked(self):
        with pytest.raises(ParameterError):
            predict_multi_step(random_net(3, 2, 3, seed=0), [0.5, 0.5], 3)


class TestGradient:
    def test_matches_finite_differences_on_random_configurations(self, rng):
        for trial in range(50):
            n_input = int(rng.integers(2, 9))
            n_hidden = int(rng.integers(1, 6))
            horizon = int(rng.integers(1, 5))
            net = random_net(n_input, n_hidden, horizon, seed=trial)
            history = rng.uniform(0.05, 0.95, n_input)
            targets = rng.uniform(0.05, 0.95, horizon)
            analytic, _ = bptt_gradient(net, history, targets)
            numeric = finite_diff_gradient(net, history, targets, 1e-6)
            np.testing.assert_allclose(analytic.as_vector(), numeric.as_vector(), rtol=1e-5, atol=1e-8)

    def test_small_reference_network(self, rng):
        net = random_net(3, 2, 3, seed=99, n_feedback=2)
        history = rng.uniform(0.1, 0.9, 3)
        targets = rng.uniform(0.1, 0.9, 3)
        analytic, _ = bptt_gradient(net, history, targets)
        numeric = finite_diff_gradient(net, history, targets, 1e-6)
        np.testing.assert_allclose(analytic.as_vector(), numeric.as_vector(), rtol=1e-5, atol=1e-8)

    def test_one_step_is_plain_backprop(self):
        net = random_net(4, 3, 1, seed=6)
        history = np.array([0.2, 0.4, 0.3, 0.8])
        target = 0.35
        grad, j = bptt_gradient(net, history, [target])
        output, step = forward_one(net, history)
        fs = output * (1.0 - output)
        expected_out = (output - target) * fs * step.hidden_aug
        expected_in = (output - target) * np.outer(
            step.inputs_aug, fs * net.w_hidden_out[:3] * step.o_c * (1.0 - step.o_c)
        )
        assert np.allclose(grad.d_hidden_out, expected_out, rtol=1e-14, atol=0)
        assert np.allclose(grad.d_in_hidden, expected_in, rtol=1e-14, atol=0)
        assert j == pytest.approx(0.5 * (output - target) ** 2, rel=1e-15)

    def test_perfect_fit_has_zero_gradient(self):
        net = random_net(3, 2, 3, seed=1)
        history = [0.3, 0.5, 0.7]
        targets, _ = predict_multi_step(net, history, 3)
        grad, j = bptt_gradient(net, history, targets)
        assert j == 0.0
        assert np.all(grad.as_vector() == 0.0)

    def test_loss_decomposition(self):
        net = random_net(4, 3, 3, seed=2)
        history = [0.1, 0.2, 0.3, 0.4]
        targets = np.array([0.5, 0.6, 0.7])
        _, j = bptt_gradient(net, history, targets)
        _, trace = predict_multi_step(net, history, 3)
        parts = [0.5 * (step.output - r) ** 2 for step, r in zip(trace.steps, targets)]
        assert j == pytest.approx(sum(parts), rel=1e-15)
        assert j == loss(net, history, targets)

    def test_zero_weights_match_finite_differences(self):
        net = RecurrentNet.zeros(NetConfig(n_input=3, n_hidden=2, horizon=3))
        history = [0.2, 0.5, 0.9]
        targets = [0.1, 0.3, 0.8]
        analytic, _ = bptt_gradient(net, history, targets)
        numeric = finite_diff_gradient(net, history, targets)
        assert np.max(np.abs(analytic.as_vector() - numeric.as_vector())) < 1e-7

    def test_finite_differences_are_deterministic(self):
        net = random_net(3, 2, 2, seed=3)
        first = finite_diff_gradient(net, [0.1, 0.2, 0.3], [0.4, 0.5])
        second = finite_diff_gradient(net, [0.1, 0.2, 0.3], [0.4, 0.5])
        assert np.array_equal(first.as_vector(), second.as_vector())

    def test_coarse_step_degrades_gracefully(self, rng):
        net = random_net(4, 3, 3, seed=12)
        history = rng.uniform(0.1, 0.9, 4)
        targets = rng.uniform(0.1, 0.9, 3)
        analytic = bptt_gradient(net, history, targets)[0].as_vector()
        fine = np.max(np.abs(finite_diff_gradient(net, history, targets, 1e-6).as_vector() - analytic))
        coarse = np.max(np.abs(finite_diff_gradient(net, history, targets, 1e-2).as_vector() - analytic))
        assert fine < coarse < 1e-3

    def test_target_length_checked(self):
        with pytest.raises(ParameterError):
            bptt_gradient(random_net(3, 2, 3, seed=0), [0.1, 0.2, 0.3], [])


class TestTraining:
    def test_zero_learning_rate_keeps_weights(self):
        net = random_net(4, 3, 3, seed=5)
        config = NetConfig(n_input=4, n_hidden=3, horizon=3, learning_rate=0.0, epochs=5)
        trained, curve = train(net, np.linspace(0.1, 0.9, 30), config)
        assert np.array_equal(trained.w_in_hidden, net.w_in_hidden)
        assert np.array_equal(trained.w_hidden_out, net.w_hidden_out)
        assert len(curve) == 5

    def test_ramp_convergence(self):
        config = NetConfig(learning_rate=0.3, epochs=600, rng_seed=7)
        trained, curve = train(RecurrentNet.initialize(config), np.linspace(0.1, 0.9, 40), config)
        assert curve.e_train[-1] < 0.1 * curve.e_train[0]
        outputs, _ = predict_multi_step(trained, np.linspace(0.1, 0.9, 40)[20:28], 3)
        assert np.mean((outputs - np.linspace(0.1, 0.9, 40)[28:31]) ** 2) < 1e-3

    def test_training_is_deterministic(self):
        config = NetConfig(n_input=4, n_hidden=3, learning_rate=0.2, epochs=20, rng_seed=3)
        series = np.linspace(0.2, 0.8, 25)
        first, _ = train(RecurrentNet.initialize(config), series, config)
        second, _ = train(RecurrentNet.initialize(config), series, config)
        assert np.array_equal(first.w_in_hidden, second.w_in_hidden)
        assert np.array_equal(first.w_hidden_out, second.w_hidden_out)

    def test_validation_curve_recorded(self):
        config = NetConfig(n_input=4, n_hidden=3, learning_rate=0.2, epochs=3)
        _, curve = train(RecurrentNet.initialize(config), np.linspace(0.2, 0.8, 25), config,
                         validation=np.linspace(0.3, 0.7, 12))
        assert all(g is not None and g > 0 for g in curve.e_gener)

    def test_series_too_short(self):
        config = NetConfig(n_input=8, horizon=3)
        with pytest.raises(ParameterError):
            train(RecurrentNet.initialize(config), np.linspace(0.1, 0.9, 10), config)

    def test_input_net_untouched(self):
        config = NetConfig(n_input=3, n_hidden=2, learning_rate=0.5, epochs=2)
        net = RecurrentNet.initialize(config)
        before = net.w_in_hidden.copy()
        train(net, np.linspace(0.1, 0.9, 12), config)
        assert np.array_equal(net.w_in_hidden, before)


class TestEvaluation:
    def test_perfect_forecaster_has_zero_error(self):
        values = np.linspace(0.1, 0.9, 40)

        class Oracle:
            n_input = 4

            def forecast(self, history, horizon):
                start = int(np.argmin(np.abs(values - history[-1]))) + 1
                return values[start:start + horizon]

        assert evaluate(Oracle(), values, 20) == (0.0, 0.0)

    def test_constant_series_converges(self):
        values = np.full(40, 0.5)
        config = NetConfig(learning_rate=0.5, epochs=100, rng_seed=1)
        trained, _ = train(RecurrentNet.initialize(config), values[:20], config)
        _, e_gener = evaluate(trained, values, 20)
        assert e_gener < 1e-4

    def test_untrained_net_has_positive_error(self, rng):
        values = np.cumsum(rng.uniform(0.0, 0.02, 60)) + 0.1
        _, e_gener = evaluate(RecurrentNet.initialize(NetConfig(rng_seed=4)), values, 30)
        assert e_gener > 0.0

    def test_persistence_baseline(self):
        values = np.linspace(0.1, 0.9, 30)
        step = values[1] - values[0]
        e_train, _ = evaluate(PersistenceForecaster(n_input=1), values, 15)
        windows = 15 - 1 - 3 + 1
        expected = windows * 0.5 * (step ** 2) * (1 + 4 + 9)
        assert e_train == pytest.approx(expected, rel=1e-9)

    def test_insufficient_data(self):
        with pytest.raises(ParameterError):
            evaluate(PersistenceForecaster(n_input=8), np.linspace(0, 1, 20), 10)


class TestNodePredictor:
    def test_forecast_in_meters(self):
        t = np.arange(30.0)
        series = LocationSeries("n", 10.0, 0.0, 100.0 + 5.0 * t, np.full(30, 40.0))
        config = NetConfig(n_input=4, n_hidden=3, learning_rate=0.5, epochs=300, rng_seed=2)
        predictor, curves = train_node_predictor(series, config)
        assert set(curves) == {"x", "y"}
        positions = predictor.forecast_positions(series.window(20, 4), 3)
        assert positions.shape == (3, 2)
        assert np.allclose(positions[:, 1], 40.0, atol=1.0)
        assert np.allclose(positions[:, 0], 100.0 + 5.0 * np.arange(21, 24), atol=10.0)


class TestGridSelection:
    def test_single_combination(self, rng):
        series = [np.cumsum(rng.uniform(5.0, 15.0, 40)) for _ in range(2)]
        selection = grid_select(series, [3], [2], NetConfig(epochs=5, learning_rate=0.1))
        assert (selection.best_n_input, selection.best_n_hidden) == (3, 2)
        assert len(selection.per_series) == 2

    def test_argmin_consistency_and_parallel_equivalence(self, rng):
        series = [np.cumsum(rng.uniform(5.0, 15.0, 40)) for _ in range(2)]
        base = NetConfig(epochs=5, learning_rate=0.2, rng_seed=4)
        serial = grid_select(series, range(2, 5), range(1, 3), base)
        parallel = grid_select(series, range(2, 5), range(1, 3), base, max_workers=4)
        best = min(serial.table, key=lambda pair: (serial.table[pair], pair))
        assert (serial.best_n_input, serial.best_n_hidden) == best
        assert serial.table == parallel.table
        assert sum(selected for *_, selected in serial.rows()) == 1

    def test_empty_inputs(self):
        with pytest.raises(ParameterError):
            grid_select([], [3], [2])
        with pytest.raises(ParameterError):
            grid_select([np.arange(40.0)], [], [2])
