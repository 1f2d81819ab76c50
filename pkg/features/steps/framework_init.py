"""
Shared fixtures for the stablepath BDD suites: synthetic series, small
scenarios, oracle and trained predictors, and brute-force references.
"""

import itertools
from functools import lru_cache
from typing import Dict, List, Tuple

import numpy as np

from stablepath.mobility import (
    ContinuousTrace,
    Scenario,
    Waypoint,
    build_fig2_scenario,
    sample_trace,
)
from stablepath.predictor import NetConfig, NodePredictor, TraceOracle, train_node_predictor

FIG2_HISTORY = 8
FIG2_NET = NetConfig(n_input=8, n_hidden=5, horizon=3, learning_rate=0.5, epochs=1000, rng_seed=2)


def ramp(count: int, start: float = 0.1, stop: float = 0.9) -> np.ndarray:
    return np.linspace(start, stop, count)


def static_trace(node_id: str, position: Tuple[float, ...], start: float, end: float) -> ContinuousTrace:
    return ContinuousTrace(node_id, (Waypoint(start, tuple(float(p) for p in position)),), end)


def linear_trace(node_id: str, origin, velocity, start: float, end: float) -> ContinuousTrace:
    """Straight-line motion with ``position(t) = origin + velocity * t``."""
    origin = np.asarray(origin, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    p0 = origin + velocity * start
    p1 = origin + velocity * end
    speed = float(np.linalg.norm(velocity))
    if speed == 0.0:
        return static_trace(node_id, tuple(p0), start, end)
    return ContinuousTrace(
        node_id,
        (Waypoint(start, tuple(map(float, p0))), Waypoint(end, tuple(map(float, p1)), speed=speed)),
        end,
    )


def scenario_from_traces(name: str, traces: Dict[str, ContinuousTrace], source: str, destination: str,
                         interval: float, start: float, count: int, transmission_range: float = 250.0) -> Scenario:
    series = {node: sample_trace(trace, interval, start, count) for node, trace in traces.items()}
    return Scenario(name, series, source, destination, transmission_range, dict(traces))


def oracle_predictors(scenario: Scenario, n_input: int = FIG2_HISTORY) -> Dict[str, TraceOracle]:
    return {node: TraceOracle(scenario.ground_truth(node), n_input=n_input) for node in scenario.node_ids}


@lru_cache(maxsize=1)
def trained_fig2_predictors() -> Dict[str, NodePredictor]:
    scenario = build_fig2_scenario()
    predictors = {}
    for node in scenario.node_ids:
        predictor, _ = train_node_predictor(scenario.training_series(node), FIG2_NET)
        predictors[node] = predictor
    return predictors


def brute_force_paths(edges: List[Tuple[str, str]], nodes: List[str], source: str, destination: str) -> set:
    """Every simple source-destination path, by checking all node orderings."""
    adjacent = {frozenset(e) for e in edges}
    inner = [n for n in nodes if n not in (source, destination)]
    found = set()
    for size in range(len(inner) + 1):
        for middle in itertools.permutations(inner, size):
            route = (source,) + middle + (destination,)
            if all(frozenset(pair) in adjacent for pair in zip(route, route[1:])):
                found.add(route)
    return found
