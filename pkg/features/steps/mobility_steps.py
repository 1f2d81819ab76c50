"""
Step definitions for Random Waypoint generation and trace sampling.
"""

import math

import numpy as np
from behave import given, when, then

from stablepath.errors import SamplingRangeError
from stablepath.mobility import RwmParams, Territory, build_fig2_scenario, generate_rwm_trace, sample_trace
from stablepath.routing import build_topology
from stablepath.stability import link_break_time
from steps.framework_init import linear_trace


@given('Random Waypoint parameters with speeds between {vmin:g} and {vmax:g} m/s for {duration:g} seconds')
def step_rwm_params(context, vmin, vmax, duration):
    context.territory = Territory.from_size(1000.0, 1000.0)
    context.rwm = dict(territory=context.territory, v_min=vmin, v_max=vmax, pause_max=20.0, duration=duration)


@given('a node moving along x at {speed:g} m/s from the origin for {duration:g} seconds')
def step_linear_node(context, speed, duration):
    context.trace = linear_trace("n0", (0.0, 0.0), (speed, 0.0), 0.0, duration)


@given('the four-node scenario')
def step_fig2(context):
    context.scenario = build_fig2_scenario()


@when('I generate a trace with seed {seed:d}')
def step_generate(context, seed):
    context.trace = generate_rwm_trace(RwmParams(rng_seed=seed, **context.rwm))


@when('I generate another trace with seed {seed:d}')
def step_generate_other(context, seed):
    context.other_trace = generate_rwm_trace(RwmParams(rng_seed=seed, **context.rwm))


@when('I sample the trace every {interval:g} seconds from {start:g} for {count:d} samples')
def step_sample(context, interval, start, count):
    context.series = sample_trace(context.trace, interval, start, count)


@when('I try to sample the trace every {interval:g} seconds from {start:g} for {count:d} samples')
def step_try_sample(context, interval, start, count):
    try:
        sample_trace(context.trace, interval, start, count)
        context.error = None
    except SamplingRangeError as e:
        context.error = e


@then('all sampled positions are identical')
def step_all_identical(context):
    positions = context.series.positions()
    assert np.all(positions == positions[0]), positions


@then('both traces have identical waypoints')
def step_identical_traces(context):
    assert context.trace.waypoints == context.other_trace.waypoints


@then('every waypoint lies inside the {width:g} by {height:g} territory')
def step_inside(context, width, height):
    for wp in context.trace.waypoints:
        assert 0.0 <= wp.position[0] <= width and 0.0 <= wp.position[1] <= height, wp


@then('every leg speed lies between {vmin:g} and {vmax:g} m/s')
def step_leg_speeds(context, vmin, vmax):
    for wp in context.trace.waypoints[1:]:
        assert vmin < wp.speed <= vmax, wp


@then('the series has {count:d} points ending at {end:g} seconds')
def step_series_length(context, count, end):
    assert len(context.series) == count
    assert context.series.times[-1] == end


@then('consecutive samples are at most {limit:g} meters apart')
def step_max_displacement(context, limit):
    steps = np.linalg.norm(np.diff(context.series.positions(), axis=0), axis=1)
    assert steps.max() <= limit + 1e-9, steps.max()


@then('a sampling range error is raised')
def step_range_error(context):
    assert isinstance(context.error, SamplingRangeError)


@then('sample k has x equal to 10 times k')
def step_exact_line(context):
    for k, x in enumerate(context.series.x):
        assert x == 10.0 * k, (k, x)


@then('at time 0 the links A-B, A-C, B-D and C-D exist and no others')
def step_fig2_links(context):
    index = context.scenario.series["A"].index_of(0.0)
    snapshot = build_topology(context.scenario.positions_at(index), context.scenario.transmission_range)
    assert snapshot.edges() == [("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")], snapshot.edges()


@then('the ground-truth break of link A-B happens before that of link A-C')
def step_fig2_breaks(context):
    scenario = context.scenario
    t_ab = link_break_time(scenario.ground_truth("A"), scenario.ground_truth("B"), 250.0, 0.0, 60.0)
    t_ac = link_break_time(scenario.ground_truth("A"), scenario.ground_truth("C"), 250.0, 0.0, 60.0)
    assert math.isclose(t_ab, (math.sqrt(30100.0) - 150.0) / 20.0, rel_tol=1e-9), t_ab
    assert t_ac is None or t_ac > t_ab
