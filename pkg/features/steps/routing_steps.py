"""
Step definitions for path enumeration, selection and policy comparison.
"""

import math

from behave import given, when, then

from stablepath.mobility import build_fig2_scenario
from stablepath.routing import RoutingPolicy, build_topology, enumerate_paths, run_comparison, select_path
from stablepath.stability import predicted_let
from steps.framework_init import (
    FIG2_HISTORY,
    oracle_predictors,
    scenario_from_traces,
    static_trace,
    trained_fig2_predictors,
)


def _paths(text):
    return {tuple(p.strip().split("-")) for p in text.replace(" and ", ",").split(",")}


@given('two nodes {gap:g} meters apart')
def step_two_nodes(context, gap):
    context.positions = {"a": (0.0, 0.0), "b": (gap, 0.0)}


@given('the four-node scenario at time 0')
def step_fig2_at_zero(context):
    context.scenario = build_fig2_scenario()
    context.index = context.scenario.series["A"].index_of(0.0)
    context.snapshot = build_topology(context.scenario.positions_at(context.index), 250.0, 0.0)


@given('three static nodes in a line {gap:g} meters apart')
def step_static_line(context, gap):
    traces = {n: static_trace(n, (i * gap, 0.0), 0.0, 100.0) for i, n in enumerate("SMD")}
    context.scenario = scenario_from_traces("line", traces, "S", "D", 10.0, 0.0, 11)


@given('a source {gap:g} meters away from two connected nodes')
def step_isolated(context, gap):
    traces = {
        "S": static_trace("S", (0.0, 0.0), 0.0, 100.0),
        "M": static_trace("M", (gap, 0.0), 0.0, 100.0),
        "D": static_trace("D", (gap + 100.0, 0.0), 0.0, 100.0),
    }
    context.scenario = scenario_from_traces("isolated", traces, "S", "D", 10.0, 0.0, 11)


@when('I build the topology with range {tx_range:g}')
def step_build(context, tx_range):
    context.snapshot = build_topology(context.positions, tx_range)


@when('I enumerate paths from {source} to {destination} with at most {hops:d} hops')
def step_enumerate(context, source, destination, hops):
    context.paths = enumerate_paths(context.snapshot, source, destination, hops)


@when('I select a path from {source} to {destination} with the {policy} policy using exact predictions')
def step_select(context, source, destination, policy):
    scenario = context.scenario
    predictors = oracle_predictors(scenario)

    def let_fn(a, b):
        return predicted_let(
            predictors[a], predictors[b],
            scenario.series[a].window(context.index, FIG2_HISTORY),
            scenario.series[b].window(context.index, FIG2_HISTORY),
            250.0, 3,
        )

    paths = enumerate_paths(context.snapshot, source, destination)
    context.selected = select_path(paths, RoutingPolicy(policy), let_fn)


@when('I compare the stable and shortest policies using exact predictions')
def step_compare_exact(context):
    reports = run_comparison(context.scenario, ["stable", "shortest"], oracle_predictors(context.scenario))
    context.reports = {r.policy: r for r in reports}


@when('I compare the stable and shortest policies using trained predictors')
def step_compare_trained(context):
    reports = run_comparison(context.scenario, ["stable", "shortest"], trained_fig2_predictors())
    context.reports = {r.policy: r for r in reports}


@then('the nodes are connected')
def step_connected(context):
    assert context.snapshot.has_link("a", "b")


@then('the nodes are not connected')
def step_not_connected(context):
    assert not context.snapshot.has_link("a", "b")


@then('the candidate paths are {paths}')
def step_candidates(context, paths):
    assert {p.nodes for p in context.paths} == _paths(paths), [str(p) for p in context.paths]


@then('the selected path is {path}')
def step_selected_path(context, path):
    assert str(context.selected) == path, str(context.selected)


@then('the stable policy first selects {path}')
def step_stable_first(context, path):
    assert "-".join(context.reports["stable"].path) == path, context.reports["stable"].path


@then('the stable route lives longer than the shortest route')
def step_stable_longer(context):
    assert context.reports["stable"].realized_lifetime > context.reports["shortest"].realized_lifetime


@then('the {policy} route breaks after about {seconds:g} seconds')
def step_route_lifetime(context, policy, seconds):
    lifetime = context.reports[policy].realized_lifetime
    assert math.isclose(lifetime, seconds, abs_tol=0.01), lifetime


@then('neither policy records an interruption')
def step_no_interruptions(context):
    for report in context.reports.values():
        assert report.interruptions == 0 and not report.no_route, report


@then('both reports show no route and zero lifetime')
def step_no_route(context):
    for report in context.reports.values():
        assert report.no_route and report.realized_lifetime == 0.0, report
