"""
Stable-Path Routing Simulation
==============================
Connectivity snapshots, source-destination path enumeration and the two
route selection policies:

- shortest: fewest hops, ties broken by node-id order
- stable: greatest predicted Path Expiration Time, ties broken by fewer
  hops then node-id order

``run_comparison`` replays a scenario under each policy, rerouting only when
the chosen path actually breaks, and scores every route against the exact
ground-truth link break times.
"""

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import structlog

from .errors import NoRouteError, ParameterError
from .mobility import Position, Scenario
from .observability import trace_operation
from .stability import (
    BEYOND_HORIZON,
    ExpirationTime,
    link_break_time,
    path_expiration_time,
    predicted_let,
)

logger = structlog.get_logger(__name__)


class RoutingPolicy(str, Enum):
    STABLE = "stable"
    SHORTEST = "shortest"


@dataclass
class TopologySnapshot:
    time: float
    positions: Dict[str, Position]
    transmission_range: float
    graph: nx.Graph

    @property
    def nodes(self) -> List[str]:
        return list(self.graph.nodes)

    def edges(self) -> List[Tuple[str, str]]:
        return sorted(tuple(sorted(edge)) for edge in self.graph.edges)

    def has_link(self, a: str, b: str) -> bool:
        return self.graph.has_edge(a, b)


@dataclass(frozen=True)
class Path:
    nodes: Tuple[str, ...]
    pet: Optional[ExpirationTime] = None

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1

    @property
    def source(self) -> str:
        return self.nodes[0]

    @property
    def destination(self) -> str:
        return self.nodes[-1]

    def links(self) -> List[Tuple[str, str]]:
        return list(zip(self.nodes, self.nodes[1:]))

    def __str__(self) -> str:
        return "-".join(self.nodes)


@dataclass
class RouteRecord:
    time: float
    path: Tuple[str, ...]
    predicted_pet: ExpirationTime
    realized_lifetime: float
    broken: bool


@dataclass
class SimulationReport:
    policy: str
    path: Optional[Tuple[str, ...]]
    predicted_pet: Optional[ExpirationTime]
    realized_lifetime: float
    interruptions: int
    rediscoveries: int
    no_route: bool = False
    history: List[RouteRecord] = field(default_factory=list)


# ============================================================================
# TOPOLOGY AND PATHS
# ============================================================================

def build_topology(positions: Mapping[str, Position], transmission_range: float, time: float = 0.0) -> TopologySnapshot:
    """Unit-disk graph: an edge joins nodes at most ``transmission_range`` apart."""
    if transmission_range <= 0:
        raise ParameterError(f"transmission range must be > 0, got {transmission_range}")

    graph = nx.Graph()
    nodes = sorted(positions)
    graph.add_nodes_from(nodes)
    for i, a in enumerate(nodes):
        for b in nodes[i + 1:]:
            if math.dist(positions[a], positions[b]) <= transmission_range:
                graph.add_edge(a, b)
    return TopologySnapshot(float(time), dict(positions), float(transmission_range), graph)


def enumerate_paths(
    snapshot: TopologySnapshot,
    source: str,
    destination: str,
    max_hops: Optional[int] = None,
) -> List[Path]:
    """All simple paths of at most ``max_hops`` hops, depth-first."""
    for node in (source, destination):
        if node not in snapshot.graph:
            raise ParameterError(f"node {node!r} is not in the topology")
    if source == destination:
        return [Path((source,))]
    if max_hops is None:
        max_hops = snapshot.graph.number_of_nodes() - 1
    if max_hops < 1:
        return []
    return [
        Path(tuple(nodes))
        for nodes in nx.all_simple_paths(snapshot.graph, source, destination, cutoff=max_hops)
    ]


def path_pet(path: Path, let_fn: Callable[[str, str], ExpirationTime]) -> ExpirationTime:
    if path.hops == 0:
        return BEYOND_HORIZON
    return path_expiration_time([let_fn(a, b) for a, b in path.links()])


def select_path(
    paths: Sequence[Path],
    policy: RoutingPolicy,
    let_fn: Optional[Callable[[str, str], ExpirationTime]] = None,
) -> Path:
    """Choose a route; the returned path carries its PET when ``let_fn`` is given."""
    if not paths:
        raise NoRouteError("no candidate path between source and destination")
    policy = RoutingPolicy(policy)
    if policy is RoutingPolicy.STABLE and let_fn is None:
        raise ParameterError("stable-path selection needs link expiration times")

    if let_fn is not None:
        paths = [Path(p.nodes, path_pet(p, let_fn)) for p in paths]

    if policy is RoutingPolicy.STABLE:
        return min(paths, key=lambda p: (-p.pet.seconds, p.hops, p.nodes))
    return min(paths, key=lambda p: (p.hops, p.nodes))


# ============================================================================
# SIMULATION
# ============================================================================

class _LetCache:
    """Predicted LETs per (sample index, link), shared between policies."""

    def __init__(self, scenario: Scenario, predictors: Mapping[str, object], transmission_range: float, horizon: int):
        self.scenario = scenario
        self.predictors = predictors
        self.transmission_range = transmission_range
        self.horizon = horizon
        self._values: Dict[Tuple[int, str, str], ExpirationTime] = {}
        self._lock = threading.Lock()

    def let(self, index: int, a: str, b: str) -> ExpirationTime:
        a, b = sorted((a, b))
        key = (index, a, b)
        with self._lock:
            if key in self._values:
                return self._values[key]
        n_input = max(self.predictors[a].n_input, self.predictors[b].n_input)
        value = predicted_let(
            self.predictors[a],
            self.predictors[b],
            self.scenario.series[a].window(index, n_input),
            self.scenario.series[b].window(index, n_input),
            self.transmission_range,
            self.horizon,
        )
        with self._lock:
            self._values.setdefault(key, value)
        return value


def _path_break_time(scenario: Scenario, path: Path, transmission_range: float, t_start: float, t_end: float) -> Optional[float]:
    breaks = [
        link_break_time(scenario.ground_truth(a), scenario.ground_truth(b), transmission_range, t_start, t_end)
        for a, b in path.links()
    ]
    breaks = [t for t in breaks if t is not None]
    return min(breaks) if breaks else None


def _simulate_policy(
    scenario: Scenario,
    policy: RoutingPolicy,
    cache: _LetCache,
    setup_index: int,
    max_hops: Optional[int],
) -> SimulationReport:
    times = scenario.times
    t_end = float(times[-1])
    history: List[RouteRecord] = []
    interruptions = 0
    discoveries = 0
    index = setup_index

    while index < len(scenario):
        t0 = float(times[index])
        discoveries += 1
        snapshot = build_topology(scenario.positions_at(index), cache.transmission_range, t0)
        paths = enumerate_paths(snapshot, scenario.source, scenario.destination, max_hops)
        if not paths:
            index += 1
            continue

        path = select_path(paths, policy, lambda a, b, i=index: cache.let(i, a, b))
        break_time = _path_break_time(scenario, path, cache.transmission_range, t0, t_end)
        lifetime = (t_end if break_time is None else break_time) - t0
        history.append(RouteRecord(t0, path.nodes, path.pet, lifetime, break_time is not None))
        logger.debug("route_selected", policy=policy.value, time=t0, path=str(path),
                     pet=str(path.pet), lifetime=lifetime)

        if break_time is None:
            break
        interruptions += 1
        index = int(np.searchsorted(times, break_time, side="right"))

    # every discovery after the one at setup, successful or not
    rediscoveries = max(discoveries - 1, 0)
    if not history:
        logger.warning("no_route", policy=policy.value, source=scenario.source, destination=scenario.destination)
        return SimulationReport(policy.value, None, None, 0.0, interruptions, rediscoveries, no_route=True)

    first = history[0]
    return SimulationReport(
        policy=policy.value,
        path=first.path,
        predicted_pet=first.predicted_pet,
        realized_lifetime=first.realized_lifetime,
        interruptions=interruptions,
        rediscoveries=rediscoveries,
        history=history,
    )


def run_comparison(
    scenario: Scenario,
    policies: Sequence[str],
    predictors: Mapping[str, object],
    horizon: int = 3,
    transmission_range: Optional[float] = None,
    max_hops: Optional[int] = None,
    parallel: bool = False,
) -> List[SimulationReport]:
    """Replay ``scenario`` under each policy with on-break rerouting.

    ``predictors`` maps every node to an object with ``n_input`` and
    ``forecast_positions(history, horizon)``. The route is set up at the
    scenario's setup sample, or later when a predictor needs more history.
    """
    missing = [node for node in scenario.node_ids if node not in predictors]
    if missing:
        raise ParameterError(f"no predictor for nodes {missing}")
    policies = [RoutingPolicy(p) for p in policies]
    transmission_range = transmission_range or scenario.transmission_range

    history = max(predictors[node].n_input for node in scenario.node_ids)
    setup_index = max(history - 1, scenario.setup_index)
    if setup_index >= len(scenario):
        raise ParameterError(
            f"scenario has {len(scenario)} samples, route setup needs sample {setup_index}"
        )

    cache = _LetCache(scenario, predictors, transmission_range, horizon)
    for node in scenario.node_ids:
        scenario.ground_truth(node)

    with trace_operation("routing.run_comparison", scenario=scenario.name, policies=",".join(p.value for p in policies)):
        if parallel and len(policies) > 1:
            with ThreadPoolExecutor(max_workers=len(policies)) as executor:
                reports = list(executor.map(
                    lambda p: _simulate_policy(scenario, p, cache, setup_index, max_hops), policies
                ))
        else:
            reports = [_simulate_policy(scenario, p, cache, setup_index, max_hops) for p in policies]

    for report in reports:
        logger.info("policy_simulated", policy=report.policy, path=report.path,
                    lifetime_s=report.realized_lifetime, interruptions=report.interruptions)
    return reports
