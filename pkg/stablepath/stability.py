"""
Link and Path Stability
=======================
Link Expiration Time (LET) from predicted positions: the predicted
inter-node distances are interpolated by a polynomial and the first upward
crossing of the transmission range is located. Path Expiration Time (PET)
is the minimum LET over the links of a path.

Also provides the exact ground-truth break time of a link between two
piecewise-linear traces, used to score routing decisions.
"""

import math
from dataclasses import dataclass
from functools import total_ordering
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.optimize import brentq

from .errors import NumericError, ParameterError
from .mobility import ContinuousTrace, LocationSeries, Scenario

logger = structlog.get_logger(__name__)

BEYOND_HORIZON_LABEL = "beyond-horizon"
SCAN_DIVISIONS = 100
ROOT_TOLERANCE = 1e-7
MAX_WELL_CONDITIONED_POINTS = 6


@total_ordering
@dataclass(frozen=True)
class ExpirationTime:
    """Seconds from the base time, or ``None`` for beyond the prediction horizon."""
    value: Optional[float]

    def __post_init__(self):
        if self.value is not None and not self.value >= 0:
            raise ParameterError(f"expiration time must be >= 0, got {self.value}")

    @property
    def is_beyond_horizon(self) -> bool:
        return self.value is None

    @property
    def seconds(self) -> float:
        return math.inf if self.value is None else self.value

    def __lt__(self, other: "ExpirationTime") -> bool:
        if not isinstance(other, ExpirationTime):
            return NotImplemented
        return self.seconds < other.seconds

    def __str__(self) -> str:
        return BEYOND_HORIZON_LABEL if self.value is None else repr(float(self.value))

    @classmethod
    def parse(cls, text: str) -> "ExpirationTime":
        text = text.strip()
        if text == BEYOND_HORIZON_LABEL:
            return BEYOND_HORIZON
        return cls(float(text))


BEYOND_HORIZON = ExpirationTime(None)


@dataclass(frozen=True, eq=False)
class PredictedTrack:
    """Predicted positions of one node at future times, shape (N, dims)."""
    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        positions = np.asarray(self.positions, dtype=float)
        if positions.ndim == 1:
            positions = positions.reshape(-1, 1)
        object.__setattr__(self, "positions", positions)
        if len(self.times) != len(self.positions):
            raise ParameterError(f"track has {len(self.times)} times but {len(self.positions)} positions")


@dataclass(frozen=True, eq=False)
class DistanceSeries:
    base_time: float
    times: np.ndarray
    distances: np.ndarray
    base_distance: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "distances", np.asarray(self.distances, dtype=float))
        if len(self.times) != len(self.distances):
            raise ParameterError("distance series times and distances differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ParameterError("distance series times must be strictly increasing")
        if np.any(self.distances < 0):
            raise ParameterError("distances must be >= 0")


@dataclass(frozen=True, eq=False)
class DistancePolynomial:
    """Interpolating polynomial in ``t - time_origin``, descending coefficients.

    When ``squared`` is set the coefficients interpolate squared distances
    and calling the polynomial returns the square root of its value.
    """
    coefficients: np.ndarray
    time_origin: float
    base_time: float
    times: np.ndarray
    squared: bool = False

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def last_time(self) -> float:
        return float(self.times[-1])

    @property
    def interval(self) -> float:
        return float(self.times[1] - self.times[0])

    def __call__(self, t):
        value = np.polyval(self.coefficients, np.asarray(t, dtype=float) - self.time_origin)
        if self.squared:
            return np.sqrt(np.maximum(value, 0.0))
        return value


def _pad(positions: np.ndarray, dims: int) -> np.ndarray:
    # a missing z coordinate counts as 0
    if positions.shape[1] == dims:
        return positions
    return np.hstack([positions, np.zeros((len(positions), dims - positions.shape[1]))])


# ============================================================================
# OPERATIONS
# ============================================================================

def distances(
    track_a: PredictedTrack,
    track_b: PredictedTrack,
    base_time: Optional[float] = None,
    base_distance: Optional[float] = None,
) -> DistanceSeries:
    """Euclidean distance between two tracks at their shared times.

    ``base_time`` defaults to one sample spacing before the first time.
    """
    if len(track_a.times) != len(track_b.times) or not np.array_equal(track_a.times, track_b.times):
        raise ParameterError("predicted tracks are not aligned in time")
    if len(track_a.times) == 0:
        raise ParameterError("predicted tracks are empty")

    dims = max(track_a.positions.shape[1], track_b.positions.shape[1])
    delta = _pad(track_a.positions, dims) - _pad(track_b.positions, dims)
    dist = np.sqrt(np.sum(delta * delta, axis=1))

    times = track_a.times
    if base_time is None:
        base_time = float(times[0] - (times[1] - times[0])) if len(times) > 1 else float(times[0])
    return DistanceSeries(float(base_time), times.copy(), dist, base_distance)


def fit_polynomial(series: DistanceSeries, squared: bool = False) -> DistancePolynomial:
    """Solve the Vandermonde system through all N points, times shifted to the first point.

    With ``squared`` the system is solved for the squared distances, which
    are exactly quadratic in time for two nodes in constant-velocity motion.
    """
    n = len(series.times)
    if n < 2:
        raise ParameterError(f"need at least 2 points to fit a distance polynomial, got {n}")
    if n > MAX_WELL_CONDITIONED_POINTS:
        logger.warning("high_degree_distance_fit", points=n)

    origin = float(series.times[0])
    shifted = series.times - origin
    if len(np.unique(shifted)) < n:
        raise NumericError("duplicate fit times make the Vandermonde system singular")
    try:
        values = series.distances ** 2 if squared else series.distances
        coefficients = np.linalg.solve(np.vander(shifted, n), values)
    except np.linalg.LinAlgError as e:
        raise NumericError(f"Vandermonde system is singular: {e}") from e
    if not np.all(np.isfinite(coefficients)):
        raise NumericError("Vandermonde solve produced non-finite coefficients")

    return DistancePolynomial(coefficients, origin, series.base_time, series.times.copy(), squared)


def link_expiration_time(
    poly: DistancePolynomial,
    transmission_range: float,
    horizon_end: Optional[float] = None,
    current_distance: Optional[float] = None,
) -> ExpirationTime:
    """First upward crossing of ``transmission_range`` after the base time.

    The polynomial is only evaluated on ``[base_time, min(horizon_end,
    last fitted time)]``. A link already out of range at the base time
    (``current_distance``, or P(base_time) when not given) expires at 0.
    When the measured distance is in range but the polynomial starts above
    it, the search begins where the polynomial first drops to the range;
    a polynomial that never does expires at 0.
    """
    if transmission_range <= 0:
        raise ParameterError(f"transmission range must be > 0, got {transmission_range}")
    base = poly.base_time
    end = poly.last_time if horizon_end is None else min(float(horizon_end), poly.last_time)
    if end <= base:
        raise ParameterError(f"horizon end {end} must be after base time {base}")

    start_distance = float(poly(base)) if current_distance is None else float(current_distance)
    if start_distance > transmission_range:
        return ExpirationTime(0.0)

    step = poly.interval / SCAN_DIVISIONS
    grid = base + step * np.arange(int(math.ceil((end - base) / step)) + 1)
    grid = np.append(grid[grid < end], end)
    excess = poly(grid) - transmission_range

    inside = np.flatnonzero(excess <= 0)
    if inside.size == 0:
        return ExpirationTime(0.0)
    first_inside = int(inside[0])
    above = np.flatnonzero(excess[first_inside:] > 0)
    if above.size == 0:
        return BEYOND_HORIZON
    i = first_inside + int(above[0])

    f = lambda t: float(poly(t)) - transmission_range
    root = brentq(f, float(grid[i - 1]), float(grid[i]), xtol=ROOT_TOLERANCE)
    return ExpirationTime(max(0.0, root - base))


def path_expiration_time(link_lets: Sequence[ExpirationTime]) -> ExpirationTime:
    if not link_lets:
        raise ParameterError("a path needs at least one link expiration time")
    return min(link_lets)


def predicted_let(
    predictor_a,
    predictor_b,
    history_a: LocationSeries,
    history_b: LocationSeries,
    transmission_range: float,
    horizon: int,
    squared_fit: bool = True,
) -> ExpirationTime:
    """LET of the link between two nodes from their own forecasts.

    Predictors expose ``forecast_positions(history, horizon)``. The last
    history sample is the base time; its measured distance decides whether
    the link is already broken. The crossing is taken from a fit of the
    squared distances unless ``squared_fit`` is off.
    """
    if horizon < 2:
        raise ParameterError(f"a LET needs a forecast horizon of at least 2 steps, got {horizon}")
    if history_a.sample_interval != history_b.sample_interval or history_a.times[-1] != history_b.times[-1]:
        raise ParameterError(f"histories of {history_a.node_id} and {history_b.node_id} are not aligned")

    base_time = float(history_a.times[-1])
    times = base_time + history_a.sample_interval * np.arange(1, horizon + 1)
    track_a = PredictedTrack(times, predictor_a.forecast_positions(history_a, horizon))
    track_b = PredictedTrack(times, predictor_b.forecast_positions(history_b, horizon))

    last_a = np.asarray(history_a.position(len(history_a) - 1))
    last_b = np.asarray(history_b.position(len(history_b) - 1))
    dims = max(len(last_a), len(last_b))
    gap = np.pad(last_a, (0, dims - len(last_a))) - np.pad(last_b, (0, dims - len(last_b)))
    current = float(np.sqrt(np.sum(gap * gap)))

    series = distances(track_a, track_b, base_time=base_time, base_distance=current)
    return link_expiration_time(
        fit_polynomial(series, squared=squared_fit), transmission_range, current_distance=current
    )


def link_break_time(
    trace_a: ContinuousTrace,
    trace_b: ContinuousTrace,
    transmission_range: float,
    t_start: float,
    t_end: float,
) -> Optional[float]:
    """Exact first time in ``[t_start, t_end]`` at which the distance exceeds the range.

    Both traces move linearly between their events, so on each segment the
    crossing solves ``|r0 + v s|^2 = R^2``. Returns ``None`` if the link
    survives the window.
    """
    if t_end < t_start:
        raise ParameterError(f"t_end {t_end} precedes t_start {t_start}")
    r_sq = transmission_range * transmission_range

    cuts = {t_start, t_end}
    for t in trace_a.event_times() + trace_b.event_times():
        if t_start < t < t_end:
            cuts.add(t)
    cuts = sorted(cuts)

    dims = max(trace_a.dimensions, trace_b.dimensions)

    def rel(t: float) -> np.ndarray:
        a = np.asarray(trace_a.position_at(t), dtype=float)
        b = np.asarray(trace_b.position_at(t), dtype=float)
        return np.pad(b, (0, dims - len(b))) - np.pad(a, (0, dims - len(a)))

    if float(rel(t_start) @ rel(t_start)) > r_sq:
        return t_start

    for s0, s1 in zip(cuts, cuts[1:]):
        length = s1 - s0
        if length <= 0:
            continue
        r0 = rel(s0)
        v = (rel(s1) - r0) / length
        a = float(v @ v)
        if a == 0.0:
            continue
        b = 2.0 * float(r0 @ v)
        c = float(r0 @ r0) - r_sq
        if c > 0:
            return s0
        sq = math.sqrt(max(b * b - 4.0 * a * c, 0.0))
        if b >= 0:
            q = -0.5 * (b + sq)
            tau = c / q if q != 0 else 0.0
        else:
            tau = -0.5 * (b - sq) / a
        if tau <= length:
            return s0 + tau
    return None


def let_matrix(
    scenario: Scenario,
    predictors: Mapping[str, object],
    index: int,
    transmission_range: Optional[float] = None,
    horizon: int = 3,
) -> List[Tuple[float, str, str, ExpirationTime]]:
    """Predicted LET of every in-range node pair at sample ``index``."""
    transmission_range = transmission_range or scenario.transmission_range
    time = float(scenario.times[index])
    positions = scenario.positions_at(index)
    nodes = scenario.node_ids
    rows = []
    for i, node_i in enumerate(nodes):
        for node_j in nodes[i + 1:]:
            if math.dist(positions[node_i], positions[node_j]) > transmission_range:
                continue
            n_input = max(predictors[node_i].n_input, predictors[node_j].n_input)
            let = predicted_let(
                predictors[node_i],
                predictors[node_j],
                scenario.series[node_i].window(index, n_input),
                scenario.series[node_j].window(index, n_input),
                transmission_range,
                horizon,
            )
            rows.append((time, node_i, node_j, let))
    return rows
