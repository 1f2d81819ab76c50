"""
Random Waypoint Mobility
========================
Node trajectories under the Random Waypoint model, exact sampling of
piecewise-linear traces into location time series, and the named scenarios
driving the routing simulations.

A trace is a sequence of waypoints. Waypoint ``i`` is reached at
``time``, held for ``pause`` seconds, then left in a straight line towards
waypoint ``i + 1``. ``speed`` is the speed of the leg that arrives at the
waypoint (0 for the first one). The last waypoint is held until the trace
end time.
"""

import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from .errors import ParameterError, SamplingRangeError
from .seeding import derive_seed

logger = structlog.get_logger(__name__)

Position = Tuple[float, ...]

DEFAULT_TRANSMISSION_RANGE = 250.0


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True)
class Territory:
    """Rectangular (or box-shaped) mobility territory, in meters."""
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: Optional[float] = None
    z_max: Optional[float] = None

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ParameterError(f"territory x bounds must satisfy x_min < x_max, got {self.x_min}, {self.x_max}")
        if not self.y_min < self.y_max:
            raise ParameterError(f"territory y bounds must satisfy y_min < y_max, got {self.y_min}, {self.y_max}")
        if (self.z_min is None) != (self.z_max is None):
            raise ParameterError("territory z bounds must be given together")
        if self.z_min is not None and not self.z_min < self.z_max:
            raise ParameterError(f"territory z bounds must satisfy z_min < z_max, got {self.z_min}, {self.z_max}")

    @classmethod
    def from_size(cls, width: float, height: float, depth: Optional[float] = None) -> "Territory":
        if depth is None:
            return cls(0.0, float(width), 0.0, float(height))
        return cls(0.0, float(width), 0.0, float(height), 0.0, float(depth))

    @property
    def dimensions(self) -> int:
        return 2 if self.z_min is None else 3

    def bounds(self) -> List[Tuple[float, float]]:
        bounds = [(self.x_min, self.x_max), (self.y_min, self.y_max)]
        if self.z_min is not None:
            bounds.append((self.z_min, self.z_max))
        return bounds

    def contains(self, position: Sequence[float]) -> bool:
        return all(lo <= p <= hi for p, (lo, hi) in zip(position, self.bounds()))

    def uniform_point(self, rng: np.random.Generator) -> Position:
        return tuple(float(rng.uniform(lo, hi)) for lo, hi in self.bounds())


@dataclass(frozen=True)
class RwmParams:
    """Random Waypoint parameters: speeds in m/s, times in seconds."""
    territory: Territory
    v_min: float
    v_max: float
    pause_max: float
    duration: float
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.v_min <= self.v_max:
            raise ParameterError(f"speeds must satisfy 0 <= v_min <= v_max, got [{self.v_min}, {self.v_max}]")
        if self.pause_max < 0.0:
            raise ParameterError(f"pause_max must be >= 0, got {self.pause_max}")
        if self.duration <= 0.0:
            raise ParameterError(f"duration must be > 0, got {self.duration}")


@dataclass(frozen=True)
class Waypoint:
    time: float
    position: Position
    speed: float = 0.0
    pause: float = 0.0

    @property
    def departure(self) -> float:
        return self.time + self.pause


@dataclass(frozen=True)
class ContinuousTrace:
    """Exact piecewise-linear ground-truth trajectory of one node."""
    node_id: str
    waypoints: Tuple[Waypoint, ...]
    end_time: float

    def __post_init__(self):
        if not self.waypoints:
            raise ParameterError("a trace needs at least one waypoint")
        times = [wp.time for wp in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ParameterError("waypoint arrival times must be strictly increasing")
        if self.end_time < times[-1]:
            raise ParameterError("trace end time precedes its last waypoint")
        dims = {len(wp.position) for wp in self.waypoints}
        if len(dims) != 1:
            raise ParameterError("all waypoints must have the same dimensionality")

    @cached_property
    def _arrivals(self) -> List[float]:
        return [wp.time for wp in self.waypoints]

    @property
    def start_time(self) -> float:
        return self.waypoints[0].time

    @property
    def dimensions(self) -> int:
        return len(self.waypoints[0].position)

    def position_at(self, t: float) -> Position:
        """Position at time ``t`` by exact linear interpolation along the active leg."""
        if t < self.start_time or t > self.end_time:
            raise SamplingRangeError(
                f"time {t} outside trace {self.node_id} span [{self.start_time}, {self.end_time}]"
            )
        i = bisect_right(self._arrivals, t) - 1
        wp = self.waypoints[i]
        if i == len(self.waypoints) - 1 or t <= wp.departure:
            return wp.position
        nxt = self.waypoints[i + 1]
        elapsed = t - wp.departure
        span = nxt.time - wp.departure
        return tuple(p + (q - p) * elapsed / span for p, q in zip(wp.position, nxt.position))

    def event_times(self) -> List[float]:
        """Times at which the velocity may change (arrivals and departures)."""
        events = set()
        for wp in self.waypoints:
            events.add(wp.time)
            if wp.departure < self.end_time:
                events.add(wp.departure)
        events.add(self.end_time)
        return sorted(events)

    @classmethod
    def from_series(cls, series: "LocationSeries") -> "ContinuousTrace":
        """Ground truth reconstructed from samples by linear interpolation."""
        positions = series.positions()
        times = series.times
        waypoints = [Waypoint(float(times[0]), tuple(float(v) for v in positions[0]))]
        for k in range(1, len(series)):
            step = math.dist(positions[k - 1], positions[k])
            waypoints.append(Waypoint(
                float(times[k]),
                tuple(float(v) for v in positions[k]),
                speed=step / series.sample_interval,
            ))
        return cls(series.node_id, tuple(waypoints), float(times[-1]))


@dataclass(frozen=True, eq=False)
class LocationSeries:
    """Regularly sampled coordinates of one node."""
    node_id: str
    sample_interval: float
    start_time: float
    x: np.ndarray
    y: np.ndarray
    z: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        if self.z is not None:
            object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        if self.sample_interval <= 0:
            raise ParameterError(f"sample_interval must be > 0, got {self.sample_interval}")
        lengths = {len(self.x), len(self.y)} | ({len(self.z)} if self.z is not None else set())
        if len(lengths) != 1:
            raise ParameterError(f"coordinate series of {self.node_id} have unequal lengths {sorted(lengths)}")
        if len(self.x) < 1:
            raise ParameterError(f"series {self.node_id} is empty")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(len(self)) * self.sample_interval

    @property
    def coordinates(self) -> Tuple[str, ...]:
        return ("x", "y") if self.z is None else ("x", "y", "z")

    def coordinate(self, name: str) -> np.ndarray:
        if name not in self.coordinates:
            raise ParameterError(f"series {self.node_id} has no coordinate {name!r}")
        return getattr(self, name)

    def positions(self) -> np.ndarray:
        return np.column_stack([self.coordinate(c) for c in self.coordinates])

    def position(self, index: int) -> Position:
        return tuple(float(self.coordinate(c)[index]) for c in self.coordinates)

    def index_of(self, t: float) -> int:
        """Index of the sample taken at time ``t``."""
        k = (t - self.start_time) / self.sample_interval
        index = int(round(k))
        if abs(k - index) > 1e-9 or not 0 <= index < len(self):
            raise SamplingRangeError(f"no sample of {self.node_id} at time {t}")
        return index

    def window(self, stop: int, length: Optional[int] = None) -> "LocationSeries":
        """Samples up to and including index ``stop`` (the last ``length`` of them)."""
        if not 0 <= stop < len(self):
            raise SamplingRangeError(f"index {stop} outside series {self.node_id} of length {len(self)}")
        begin = 0 if length is None else stop + 1 - length
        if begin < 0:
            raise ParameterError(f"series {self.node_id} has only {stop + 1} samples up to index {stop}, need {length}")
        sl = slice(begin, stop + 1)
        return LocationSeries(
            self.node_id,
            self.sample_interval,
            self.start_time + begin * self.sample_interval,
            self.x[sl],
            self.y[sl],
            None if self.z is None else self.z[sl],
        )


@dataclass
class Scenario:
    """Node series sharing one time base, with a source/destination pair."""
    name: str
    series: Dict[str, LocationSeries]
    source: str
    destination: str
    transmission_range: float = DEFAULT_TRANSMISSION_RANGE
    traces: Dict[str, ContinuousTrace] = field(default_factory=dict)
    setup_time: Optional[float] = None

    def __post_init__(self):
        if self.source == self.destination:
            raise ParameterError("scenario source and destination must differ")
        for node in (self.source, self.destination):
            if node not in self.series:
                raise ParameterError(f"scenario has no series for node {node!r}")
        if self.transmission_range <= 0:
            raise ParameterError(f"transmission_range must be > 0, got {self.transmission_range}")
        shapes = {(s.sample_interval, s.start_time, len(s)) for s in self.series.values()}
        if len(shapes) != 1:
            raise ParameterError("all scenario series must share sample_interval, start_time and length")
        if self.setup_time is not None:
            try:
                self._first().index_of(self.setup_time)
            except SamplingRangeError as e:
                raise ParameterError(f"setup_time {self.setup_time} is not a sample time of the scenario") from e

    @property
    def node_ids(self) -> List[str]:
        return list(self.series)

    def _first(self) -> LocationSeries:
        return next(iter(self.series.values()))

    @property
    def sample_interval(self) -> float:
        return self._first().sample_interval

    @property
    def start_time(self) -> float:
        return self._first().start_time

    @property
    def times(self) -> np.ndarray:
        return self._first().times

    def __len__(self) -> int:
        return len(self._first())

    @property
    def setup_index(self) -> int:
        """Sample index of ``setup_time``; 0 when the scenario sets none."""
        return 0 if self.setup_time is None else self._first().index_of(self.setup_time)

    def training_series(self, node: str) -> LocationSeries:
        """Samples of ``node`` up to and including the setup sample."""
        if self.setup_time is None:
            raise ParameterError(f"scenario {self.name} has no setup_time to bound predictor training")
        return self.series[node].window(self.setup_index)

    def positions_at(self, index: int) -> Dict[str, Position]:
        return {node: s.position(index) for node, s in self.series.items()}

    def ground_truth(self, node: str) -> ContinuousTrace:
        trace = self.traces.get(node)
        if trace is None:
            trace = ContinuousTrace.from_series(self.series[node])
            self.traces[node] = trace
        return trace


# ============================================================================
# OPERATIONS
# ============================================================================

def _draw_speed(params: RwmParams, rng: np.random.Generator) -> float:
    # v_min = 0 is allowed; a zero draw would stall the leg forever
    while True:
        speed = float(rng.uniform(params.v_min, params.v_max))
        if speed > 0.0:
            return speed


def generate_rwm_trace(params: RwmParams, node_id: str = "n0") -> ContinuousTrace:
    """Generate a Random Waypoint trace covering ``[0, params.duration]``.

    Destinations are uniform in the territory, leg speeds uniform in
    ``[v_min, v_max]`` (redrawn until strictly positive) and pauses uniform in
    ``[0, pause_max]``. ``v_max == 0`` yields a node that never moves. The
    final leg is cut at ``duration``.
    """
    territory = params.territory
    rng = np.random.default_rng(params.rng_seed)

    position = territory.uniform_point(rng)
    t = 0.0
    speed = 0.0
    waypoints: List[Waypoint] = []

    while True:
        pause = float(rng.uniform(0.0, params.pause_max)) if params.pause_max > 0 else 0.0
        waypoints.append(Waypoint(t, position, speed, pause))
        departure = t + pause
        if params.v_max <= 0.0 or departure >= params.duration:
            break

        destination = territory.uniform_point(rng)
        distance = math.dist(position, destination)
        if distance == 0.0:
            continue
        speed = _draw_speed(params, rng)
        arrival = departure + distance / speed

        if arrival >= params.duration:
            frac = (params.duration - departure) / (arrival - departure)
            cut = tuple(p + frac * (q - p) for p, q in zip(position, destination))
            waypoints.append(Waypoint(params.duration, cut, speed, 0.0))
            break

        t, position = arrival, destination

    logger.debug("rwm_trace_generated", node_id=node_id, waypoints=len(waypoints), seed=params.rng_seed)
    return ContinuousTrace(node_id, tuple(waypoints), float(params.duration))


def sample_trace(trace: ContinuousTrace, interval: float, start: float, count: int) -> LocationSeries:
    """Sample ``count`` positions every ``interval`` seconds from ``start``."""
    if interval <= 0:
        raise ParameterError(f"sampling interval must be > 0, got {interval}")
    if count < 1:
        raise ParameterError(f"sample count must be >= 1, got {count}")
    last = start + (count - 1) * interval
    slack = 1e-9 * max(1.0, abs(trace.end_time))
    if start < trace.start_time or last > trace.end_time + slack:
        raise SamplingRangeError(
            f"sampling window [{start}, {last}] exceeds trace {trace.node_id} span "
            f"[{trace.start_time}, {trace.end_time}]"
        )

    times = np.minimum(start + np.arange(count) * interval, trace.end_time)
    positions = np.array([trace.position_at(float(t)) for t in times], dtype=float)
    return LocationSeries(
        node_id=trace.node_id,
        sample_interval=float(interval),
        start_time=float(start),
        x=positions[:, 0],
        y=positions[:, 1],
        z=positions[:, 2] if trace.dimensions == 3 else None,
    )


# Four-node scenario: A static, B leaving A and D fast, C drifting slowly
# towards A, D static. Positions at t=0 give links A-B, A-C, B-D, C-D only.
# Routes are set up at t=0; the 20 samples up to it are the predictors'
# training data.
FIG2_SAMPLE_INTERVAL = 5.0
FIG2_START_TIME = -95.0
FIG2_SETUP_TIME = 0.0
FIG2_END_TIME = 60.0
FIG2_TRANSMISSION_RANGE = 250.0
FIG2_WAYPOINTS: Dict[str, Tuple[Waypoint, ...]] = {
    "A": (Waypoint(-95.0, (0.0, 0.0)),),
    "B": (Waypoint(-95.0, (180.0, -1750.0)), Waypoint(60.0, (180.0, 1350.0), speed=20.0)),
    "C": (Waypoint(-95.0, (236.0, -177.0)), Waypoint(60.0, (112.0, -84.0), speed=1.0)),
    "D": (Waypoint(-95.0, (360.0, 0.0)),),
}


def build_fig2_scenario() -> Scenario:
    """The four-node A/B/C/D scenario, source A, destination D, range 250 m."""
    count = int(round((FIG2_END_TIME - FIG2_START_TIME) / FIG2_SAMPLE_INTERVAL)) + 1
    traces = {
        node: ContinuousTrace(node, waypoints, FIG2_END_TIME)
        for node, waypoints in FIG2_WAYPOINTS.items()
    }
    series = {
        node: sample_trace(trace, FIG2_SAMPLE_INTERVAL, FIG2_START_TIME, count)
        for node, trace in traces.items()
    }
    return Scenario(
        name="fig2",
        series=series,
        source="A",
        destination="D",
        transmission_range=FIG2_TRANSMISSION_RANGE,
        traces=traces,
        setup_time=FIG2_SETUP_TIME,
    )


def build_rwm_scenario(
    params: RwmParams,
    node_ids: Iterable[str],
    source: str,
    destination: str,
    sample_interval: float,
    sample_count: int,
    transmission_range: float = DEFAULT_TRANSMISSION_RANGE,
    start: float = 0.0,
    name: str = "rwm",
) -> Scenario:
    """Multi-node Random Waypoint scenario, one derived seed per node."""
    traces = {}
    series = {}
    for node in node_ids:
        node_params = replace(params, rng_seed=derive_seed(params.rng_seed, f"node:{node}"))
        trace = generate_rwm_trace(node_params, node_id=node)
        traces[node] = trace
        series[node] = sample_trace(trace, sample_interval, start, sample_count)
    return Scenario(name, series, source, destination, transmission_range, traces)
