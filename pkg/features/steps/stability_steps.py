"""
Step definitions for link and path expiration times.
"""

import math

import numpy as np
from behave import given, when, then

from stablepath.predictor import TraceOracle
from stablepath.mobility import sample_trace
from stablepath.stability import (
    DistanceSeries,
    ExpirationTime,
    PredictedTrack,
    distances,
    fit_polynomial,
    link_expiration_time,
    path_expiration_time,
    predicted_let,
)
from steps.framework_init import static_trace


def _numbers(text):
    return [float(v) for v in text.replace(" and ", ",").split(",") if v.strip()]


@given('node a is static at {ax:g},{ay:g} and node b is static at {bx:g},{by:g} for {steps:d} steps')
def step_static_pair(context, ax, ay, bx, by, steps):
    times = np.arange(1, steps + 1, dtype=float)
    context.track_a = PredictedTrack(times, np.tile([ax, ay], (steps, 1)))
    context.track_b = PredictedTrack(times, np.tile([bx, by], (steps, 1)))


@given('node a is static at {ax:g},{ay:g} and node b moves from {bx:g},{by:g} at {speed:g} m/s along x')
def step_receding_pair(context, ax, ay, bx, by, speed):
    times = np.array([1.0, 2.0, 3.0])
    context.track_a = PredictedTrack(times, np.tile([ax, ay], (3, 1)))
    context.track_b = PredictedTrack(times, np.column_stack([bx + speed * times, np.full(3, by)]))


@given('distances {values} at times {times} from base time {base:g}')
def step_distance_series_with_base(context, values, times, base):
    context.distance_series = DistanceSeries(base, _numbers(times), _numbers(values))


@given('distances {values} at times {times}')
def step_distance_series(context, values, times):
    times = _numbers(times)
    context.distance_series = DistanceSeries(times[0] - 1.0, times, _numbers(values))


@given('the link expiration times {lets}')
def step_lets(context, lets):
    context.lets = [ExpirationTime.parse(v) for v in lets.split(",")]


@given('two static nodes {gap:g} meters apart with exact predictors')
def step_static_nodes(context, gap):
    trace_a = static_trace("a", (0.0, 0.0), 0.0, 100.0)
    trace_b = static_trace("b", (gap, 0.0), 0.0, 100.0)
    context.histories = [sample_trace(t, 10.0, 0.0, 4) for t in (trace_a, trace_b)]
    context.predictors = [TraceOracle(trace_a, n_input=4), TraceOracle(trace_b, n_input=4)]


@when('I compute their distances')
def step_distances(context):
    context.distances = distances(context.track_a, context.track_b)


@when('I fit the distance polynomial')
def step_fit(context):
    context.poly = fit_polynomial(context.distance_series)


@when('I predict their link expiration time with range {tx_range:g} and {steps:d} steps')
def step_predicted_let(context, tx_range, steps):
    context.let = predicted_let(*context.predictors, *context.histories, tx_range, steps)


@then('every distance equals {value:g}')
def step_every_distance(context, value):
    assert np.allclose(context.distances.distances, value, rtol=0, atol=1e-12), context.distances.distances


@then('the distances are {values}')
def step_distance_values(context, values):
    assert np.allclose(context.distances.distances, _numbers(values), rtol=0, atol=1e-9)


@then('the polynomial evaluates to {value:g} at time {t:g}')
def step_poly_value(context, value, t):
    assert math.isclose(float(context.poly(t)), value, rel_tol=1e-9), float(context.poly(t))


@then('the link expires after {seconds:g} seconds for a range of {tx_range:g}')
def step_let_value(context, seconds, tx_range):
    let = link_expiration_time(context.poly, tx_range)
    assert not let.is_beyond_horizon
    assert math.isclose(let.value, seconds, abs_tol=1e-6), let


@then('the link expiration time is beyond the horizon for a range of {tx_range:g}')
def step_let_beyond_range(context, tx_range):
    assert link_expiration_time(context.poly, tx_range).is_beyond_horizon


@then('the link expiration time is beyond the horizon')
def step_let_beyond(context):
    assert context.let.is_beyond_horizon, context.let


@then('the path expiration time is {pet}')
def step_pet(context, pet):
    assert str(path_expiration_time(context.lets)) == pet
