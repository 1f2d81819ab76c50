"""
Step definitions for the recurrent predictor.
"""

import math

import numpy as np
from behave import given, when, then

from stablepath.predictor import (
    NetConfig,
    RecurrentNet,
    bptt_gradient,
    finite_diff_gradient,
    fit_scaler,
    forward_one,
    grid_select,
    predict_multi_step,
    train,
)
from steps.framework_init import ramp


def _values(text):
    return [float(v) for v in text.replace(" and ", ",").split(",") if v.strip()]


@given('a scaler fitted on the values {values} with margin {margin:g}')
def step_fit_scaler(context, values, margin):
    context.scaler = fit_scaler(_values(values), margin)


@then('scaling {value:g} gives {expected:g}')
def step_scaling(context, value, expected):
    scaled = float(context.scaler.scale([value])[0])
    assert math.isclose(scaled, expected, rel_tol=1e-12, abs_tol=1e-12), scaled


@given('a zero-weight network with {n_input:d} inputs and {n_hidden:d} hidden neurons')
def step_zero_net(context, n_input, n_hidden):
    context.net = RecurrentNet.zeros(NetConfig(n_input=n_input, n_hidden=n_hidden))


@given('a network with 1 input and 1 hidden neuron whose weights are all one except the biases')
def step_unit_net(context):
    config = NetConfig(n_input=1, n_hidden=1, horizon=1)
    context.net = RecurrentNet(config, np.array([[1.0], [0.0]]), np.array([1.0, 0.0]))


@given('a random network with {n_input:d} inputs, {n_hidden:d} hidden neurons, '
       '{n_feedback:d} fed-back inputs and horizon {horizon:d}')
def step_random_net(context, n_input, n_hidden, n_feedback, horizon):
    context.config = NetConfig(n_input=n_input, n_hidden=n_hidden, n_feedback=n_feedback,
                               horizon=horizon, rng_seed=17)
    context.net = RecurrentNet.initialize(context.config)


@when('I forecast {steps:d} steps from the history {history}')
def step_forecast(context, steps, history):
    context.outputs, _ = predict_multi_step(context.net, _values(history), steps)


@when('I run one forward step on the input {value:g}')
def step_forward(context, value):
    context.output, _ = forward_one(context.net, [value])


@when('I compute the BPTT and finite-difference gradients on random data')
def step_gradients(context):
    rng = np.random.default_rng(5)
    history = rng.uniform(0.1, 0.9, context.config.n_input)
    targets = rng.uniform(0.1, 0.9, context.config.horizon)
    context.bptt, _ = bptt_gradient(context.net, history, targets)
    context.numeric = finite_diff_gradient(context.net, history, targets, 1e-6)


@when("I compute the BPTT gradient against the network's own forecasts")
def step_perfect_fit(context):
    history = np.linspace(0.2, 0.8, context.config.n_input)
    targets, _ = predict_multi_step(context.net, history, context.config.horizon)
    context.bptt, context.loss = bptt_gradient(context.net, history, targets)


@when('I train it for {epochs:d} epochs with learning rate {lr:g} on a ramp of {count:d} points')
def step_train(context, epochs, lr, count):
    config = NetConfig(n_input=context.config.n_input, n_hidden=context.config.n_hidden,
                       n_feedback=context.config.n_feedback, horizon=context.config.horizon,
                       learning_rate=lr, epochs=epochs, rng_seed=context.config.rng_seed)
    context.trained, context.curve = train(context.net, ramp(count), config)


@then('every forecast equals {value:g}')
def step_every_forecast(context, value):
    assert np.all(context.outputs == value), context.outputs


@then('the output is close to {value:g}')
def step_output_close(context, value):
    assert math.isclose(context.output, value, abs_tol=1e-5), context.output


@then('the gradients agree within a relative error of {tolerance:g}')
def step_gradients_agree(context, tolerance):
    np.testing.assert_allclose(context.bptt.as_vector(), context.numeric.as_vector(), rtol=tolerance, atol=1e-8)


@then('the loss and the gradient are zero')
def step_zero_gradient(context):
    assert context.loss == 0.0
    assert np.all(context.bptt.as_vector() == 0.0)


@then('the trained weights equal the initial weights')
def step_weights_unchanged(context):
    assert np.array_equal(context.trained.w_in_hidden, context.net.w_in_hidden)
    assert np.array_equal(context.trained.w_hidden_out, context.net.w_hidden_out)


@then('the final training error is below {percent:g} percent of the first')
def step_converged(context, percent):
    assert context.curve.e_train[-1] < percent / 100.0 * context.curve.e_train[0], context.curve.e_train[::50]


@given('{count:d} random ramp-like series of {length:d} points')
def step_series_set(context, count, length):
    rng = np.random.default_rng(9)
    context.series_set = [np.cumsum(rng.uniform(5.0, 15.0, length)) for _ in range(count)]


@when('I run grid selection over inputs {ne_lo:d} to {ne_hi:d} and hidden neurons {nc_lo:d} to {nc_hi:d}')
def step_grid(context, ne_lo, ne_hi, nc_lo, nc_hi):
    base = NetConfig(epochs=5, learning_rate=0.1, rng_seed=1)
    context.selection = grid_select(context.series_set, range(ne_lo, ne_hi + 1), range(nc_lo, nc_hi + 1), base)


@then('the selected combination is {n_input:d} inputs and {n_hidden:d} hidden neurons')
def step_selected(context, n_input, n_hidden):
    assert (context.selection.best_n_input, context.selection.best_n_hidden) == (n_input, n_hidden)
    assert list(context.selection.table) == [(n_input, n_hidden)]
