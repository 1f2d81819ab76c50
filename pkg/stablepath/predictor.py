"""
Recurrent Location Predictor
============================
Three-layer sigmoid network with a single output fed back into its input
window (a tapped delay line), trained with Back Propagation Through Time
over an N-step closed-loop horizon. One network is trained per coordinate
series of a node.

Weight layout:
    w_in_hidden   (n_input + 1, n_hidden)  last row is the input bias unit
    w_hidden_out  (n_hidden + 1,)          last entry is the hidden bias unit
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import structlog
from scipy.special import expit

from .errors import ParameterError
from .mobility import ContinuousTrace, LocationSeries
from .observability import trace_operation
from .seeding import derive_seed

logger = structlog.get_logger(__name__)

CLAMP_LOW = 0.001
CLAMP_HIGH = 0.999
DEFAULT_MARGIN = 0.1
EVAL_HORIZON = 3


def sigmoid(x):
    # expit is overflow-safe for any finite input
    return expit(x)


def sigmoid_prime(x):
    s = expit(x)
    return s * (1.0 - s)


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True)
class NetConfig:
    n_input: int = 8
    n_hidden: int = 5
    n_feedback: Optional[int] = None
    horizon: int = 3
    learning_rate: float = 0.05
    epochs: int = 500
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_input < 1:
            raise ParameterError(f"n_input must be >= 1, got {self.n_input}")
        if self.n_hidden < 1:
            raise ParameterError(f"n_hidden must be >= 1, got {self.n_hidden}")
        if self.horizon < 1:
            raise ParameterError(f"horizon must be >= 1, got {self.horizon}")
        if self.learning_rate < 0:
            raise ParameterError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ParameterError(f"epochs must be >= 0, got {self.epochs}")
        if self.n_feedback is None:
            object.__setattr__(self, "n_feedback", max(1, min(self.horizon - 1, self.n_input)))
        if not 1 <= self.n_feedback <= self.n_input:
            raise ParameterError(f"n_feedback must lie in [1, {self.n_input}], got {self.n_feedback}")


@dataclass(frozen=True)
class Scaler:
    """Affine map ``s = (x - offset) * gain`` from meters into (0, 1)."""
    offset: float
    gain: float

    def __post_init__(self):
        if not self.gain > 0:
            raise ParameterError(f"scaler gain must be > 0, got {self.gain}")

    def scale(self, values, clamp: bool = True) -> np.ndarray:
        scaled = (np.asarray(values, dtype=float) - self.offset) * self.gain
        if clamp:
            outside = (scaled <= 0.0) | (scaled >= 1.0)
            if np.any(outside):
                logger.warning("scaled_values_clamped", count=int(np.count_nonzero(outside)))
                scaled = np.where(outside, np.clip(scaled, CLAMP_LOW, CLAMP_HIGH), scaled)
        return scaled

    def unscale(self, scaled) -> np.ndarray:
        return np.asarray(scaled, dtype=float) / self.gain + self.offset


def fit_scaler(values, margin: float = DEFAULT_MARGIN) -> Scaler:
    """Min-max scaler mapping min to ``margin`` and max to ``1 - margin``."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ParameterError("cannot fit a scaler on an empty series")
    if not 0.0 <= margin < 0.5:
        raise ParameterError(f"margin must lie in [0, 0.5), got {margin}")

    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        gain = (1.0 - 2.0 * margin) / (hi - lo)
        return Scaler(offset=lo - margin / gain, gain=gain)
    gain = 1.0 - 2.0 * margin
    return Scaler(offset=lo - 0.5 / gain, gain=gain)


@dataclass
class RecurrentNet:
    config: NetConfig
    w_in_hidden: np.ndarray
    w_hidden_out: np.ndarray
    scaler: Optional[Scaler] = None

    def __post_init__(self):
        self.w_in_hidden = np.asarray(self.w_in_hidden, dtype=float)
        self.w_hidden_out = np.asarray(self.w_hidden_out, dtype=float)
        expected_in = (self.config.n_input + 1, self.config.n_hidden)
        expected_out = (self.config.n_hidden + 1,)
        if self.w_in_hidden.shape != expected_in:
            raise ParameterError(f"w_in_hidden shape {self.w_in_hidden.shape} != {expected_in}")
        if self.w_hidden_out.shape != expected_out:
            raise ParameterError(f"w_hidden_out shape {self.w_hidden_out.shape} != {expected_out}")
        if not (np.all(np.isfinite(self.w_in_hidden)) and np.all(np.isfinite(self.w_hidden_out))):
            raise ParameterError("network weights must be finite")

    @classmethod
    def initialize(cls, config: NetConfig, scaler: Optional[Scaler] = None) -> "RecurrentNet":
        """Weights uniform in [-0.5, 0.5] drawn from ``config.rng_seed``."""
        rng = np.random.default_rng(config.rng_seed)
        w_in = rng.uniform(-0.5, 0.5, size=(config.n_input + 1, config.n_hidden))
        w_out = rng.uniform(-0.5, 0.5, size=config.n_hidden + 1)
        return cls(config, w_in, w_out, scaler)

    @classmethod
    def zeros(cls, config: NetConfig) -> "RecurrentNet":
        return cls(config, np.zeros((config.n_input + 1, config.n_hidden)), np.zeros(config.n_hidden + 1))

    @property
    def n_input(self) -> int:
        return self.config.n_input

    def copy(self) -> "RecurrentNet":
        return RecurrentNet(self.config, self.w_in_hidden.copy(), self.w_hidden_out.copy(), self.scaler)

    def forecast(self, history, horizon: int) -> np.ndarray:
        outputs, _ = predict_multi_step(self, history, horizon)
        return outputs


@dataclass
class ForwardStep:
    inputs_aug: np.ndarray
    i_c: np.ndarray
    o_c: np.ndarray
    hidden_aug: np.ndarray
    i_s: float
    output: float


@dataclass
class ForwardTrace:
    steps: List[ForwardStep] = field(default_factory=list)

    @property
    def outputs(self) -> np.ndarray:
        return np.array([step.output for step in self.steps])

    def next_window(self) -> np.ndarray:
        """Input window that would feed the step after the last recorded one."""
        last = self.steps[-1]
        return np.append(last.inputs_aug[1:-1], last.output)


@dataclass
class Gradient:
    d_in_hidden: np.ndarray
    d_hidden_out: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.d_in_hidden.ravel(), self.d_hidden_out])


class Forecaster(Protocol):
    n_input: int

    def forecast(self, history, horizon: int) -> np.ndarray:
        ...


@dataclass(frozen=True)
class PersistenceForecaster:
    """Predicts the last observed value for every future step."""
    n_input: int = 1

    def forecast(self, history, horizon: int) -> np.ndarray:
        return np.full(horizon, float(np.asarray(history, dtype=float)[-1]))


@dataclass
class ErrorCurve:
    e_train: List[float] = field(default_factory=list)
    e_gener: List[Optional[float]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.e_train)

    def rows(self) -> List[Tuple[int, float, Optional[float]]]:
        return [(i + 1, tr, ge) for i, (tr, ge) in enumerate(zip(self.e_train, self.e_gener))]


# ============================================================================
# FORWARD PASS
# ============================================================================

def forward_one(net: RecurrentNet, input_vector) -> Tuple[float, ForwardStep]:
    inputs = np.asarray(input_vector, dtype=float)
    if inputs.shape != (net.n_input,):
        raise ParameterError(f"input vector must have length {net.n_input}, got {inputs.shape}")

    inputs_aug = np.append(inputs, 1.0)
    i_c = inputs_aug @ net.w_in_hidden
    o_c = sigmoid(i_c)
    hidden_aug = np.append(o_c, 1.0)
    i_s = float(hidden_aug @ net.w_hidden_out)
    output = float(sigmoid(i_s))
    return output, ForwardStep(inputs_aug, i_c, o_c, hidden_aug, i_s, output)


def predict_multi_step(net: RecurrentNet, history, horizon: int) -> Tuple[np.ndarray, ForwardTrace]:
    """Closed-loop forecast: each output is shifted into the input window."""
    window = np.asarray(history, dtype=float)
    if window.shape != (net.n_input,):
        raise ParameterError(f"history must hold exactly {net.n_input} values, got {window.shape}")
    if horizon < 1:
        raise ParameterError(f"horizon must be >= 1, got {horizon}")

    trace = ForwardTrace()
    for _ in range(horizon):
        output, step = forward_one(net, window)
        trace.steps.append(step)
        window = np.append(window[1:], output)
    return trace.outputs, trace


def loss(net: RecurrentNet, history, targets) -> float:
    targets = np.asarray(targets, dtype=float)
    outputs, _ = predict_multi_step(net, history, len(targets))
    return float(0.5 * np.sum((outputs - targets) ** 2))


# ============================================================================
# GRADIENTS
# ============================================================================

def bptt_gradient(net: RecurrentNet, history, targets) -> Tuple[Gradient, float]:
    """Gradient of ``J = sum_k 0.5 * (s_k - r_k)^2`` over the closed-loop horizon.

    The derivative of each output is accumulated forward in time: its direct
    dependence on the weights plus the chain through the previous outputs
    sitting in the last ``n_feedback`` input slots.
    """
    targets = np.asarray(targets, dtype=float)
    if targets.ndim != 1 or len(targets) < 1:
        raise ParameterError("targets must be a non-empty 1-D sequence")
    outputs, trace = predict_multi_step(net, history, len(targets))

    n_input = net.n_input
    n_hidden = net.config.n_hidden
    n_feedback = min(net.config.n_feedback, n_input)
    w2 = net.w_hidden_out[:n_hidden]

    d_out_in: List[np.ndarray] = []
    d_out_hidden: List[np.ndarray] = []
    grad_in = np.zeros_like(net.w_in_hidden)
    grad_out = np.zeros_like(net.w_hidden_out)
    errors = outputs - targets

    for k, step in enumerate(trace.steps):
        fs = step.output * (1.0 - step.output)
        back = fs * w2 * (step.o_c * (1.0 - step.o_c))

        d_in = np.outer(step.inputs_aug, back)
        d_hidden = fs * step.hidden_aug

        for j in range(1, min(k, n_feedback) + 1):
            coef = float(back @ net.w_in_hidden[n_input - j])
            d_in = d_in + coef * d_out_in[k - j]
            d_hidden = d_hidden + coef * d_out_hidden[k - j]

        d_out_in.append(d_in)
        d_out_hidden.append(d_hidden)
        grad_in += errors[k] * d_in
        grad_out += errors[k] * d_hidden

    j_total = float(0.5 * np.sum(errors ** 2))
    return Gradient(grad_in, grad_out), j_total


def finite_diff_gradient(net: RecurrentNet, history, targets, step: float = 1e-6) -> Gradient:
    """Central-difference gradient of the closed-loop loss."""
    if step <= 0:
        raise ParameterError(f"finite difference step must be > 0, got {step}")

    grads = []
    for name in ("w_in_hidden", "w_hidden_out"):
        weights = getattr(net, name)
        grad = np.zeros_like(weights)
        for idx in np.ndindex(weights.shape):
            plus = net.copy()
            minus = net.copy()
            getattr(plus, name)[idx] += step
            getattr(minus, name)[idx] -= step
            grad[idx] = (loss(plus, history, targets) - loss(minus, history, targets)) / (2.0 * step)
        grads.append(grad)
    return Gradient(*grads)


# ============================================================================
# TRAINING AND EVALUATION
# ============================================================================

def _windows(values: np.ndarray, n_input: int, horizon: int):
    for start in range(len(values) - n_input - horizon + 1):
        yield values[start:start + n_input], values[start + n_input:start + n_input + horizon]


def window_error(forecaster: Forecaster, values, horizon: int = EVAL_HORIZON) -> float:
    """Sum over all windows of ``sum_k 0.5 * (prediction - actual)^2``."""
    values = np.asarray(values, dtype=float)
    n_input = forecaster.n_input
    if len(values) < n_input + horizon:
        raise ParameterError(f"need at least {n_input + horizon} points, got {len(values)}")
    total = 0.0
    for history, actual in _windows(values, n_input, horizon):
        predicted = forecaster.forecast(history, horizon)
        total += float(0.5 * np.sum((predicted - actual) ** 2))
    return total


def train(
    net: RecurrentNet,
    series,
    config: Optional[NetConfig] = None,
    validation=None,
) -> Tuple[RecurrentNet, ErrorCurve]:
    """Per-window gradient descent over ``config.epochs`` passes of ``series``.

    Every epoch visits all windows once, in an order reshuffled from
    ``config.rng_seed``. The recorded training error of an epoch is the sum
    of the window losses seen during that epoch. When ``validation`` is given
    its window error is recorded after every epoch. The input net is left
    untouched.
    """
    config = config or net.config
    values = np.asarray(series, dtype=float)
    horizon = config.horizon
    if len(values) < net.n_input + horizon:
        raise ParameterError(
            f"training series has {len(values)} points, need at least {net.n_input + horizon}"
        )
    if validation is not None:
        validation = np.asarray(validation, dtype=float)
        if len(validation) < net.n_input + horizon:
            raise ParameterError(
                f"validation series has {len(validation)} points, need at least {net.n_input + horizon}"
            )

    trained = net.copy()
    curve = ErrorCurve()
    lr = config.learning_rate
    windows = list(_windows(values, net.n_input, horizon))
    order_rng = np.random.default_rng(derive_seed(config.rng_seed, "train:order"))

    with trace_operation("predictor.train", n_input=net.n_input, n_hidden=net.config.n_hidden,
                         epochs=config.epochs, points=len(values)):
        for epoch in range(config.epochs):
            epoch_error = 0.0
            for index in order_rng.permutation(len(windows)):
                history, targets = windows[index]
                grad, j_window = bptt_gradient(trained, history, targets)
                trained.w_in_hidden -= lr * grad.d_in_hidden
                trained.w_hidden_out -= lr * grad.d_hidden_out
                epoch_error += j_window

            e_gener = window_error(trained, validation, horizon) if validation is not None else None
            curve.e_train.append(epoch_error)
            curve.e_gener.append(e_gener)
            if (epoch + 1) % 50 == 0 or epoch == 0:
                logger.debug("epoch_completed", epoch=epoch + 1, e_train=epoch_error, e_gener=e_gener)

    if not (np.all(np.isfinite(trained.w_in_hidden)) and np.all(np.isfinite(trained.w_hidden_out))):
        raise ParameterError("training diverged to non-finite weights; lower the learning rate")
    return trained, curve


def evaluate(forecaster: Forecaster, series, split: int, horizon: int = EVAL_HORIZON) -> Tuple[float, float]:
    """(E_train, E_gener) over windows lying wholly before / after ``split``."""
    values = np.asarray(series, dtype=float)
    need = forecaster.n_input + horizon
    if split < need or len(values) - split < need:
        raise ParameterError(
            f"split {split} must leave at least {need} points on each side of a {len(values)}-point series"
        )
    return window_error(forecaster, values[:split], horizon), window_error(forecaster, values[split:], horizon)


# ============================================================================
# PER-NODE PREDICTION
# ============================================================================

@dataclass
class NodePredictor:
    """The per-coordinate nets of one node, predicting positions in meters."""
    node_id: str
    nets: Dict[str, RecurrentNet]

    def __post_init__(self):
        if not {"x", "y"} <= set(self.nets):
            raise ParameterError(f"predictor for {self.node_id} needs at least x and y nets")
        for coord, net in self.nets.items():
            if net.scaler is None:
                raise ParameterError(f"net {self.node_id}/{coord} has no scaler")

    @property
    def n_input(self) -> int:
        return max(net.n_input for net in self.nets.values())

    @property
    def coordinates(self) -> List[str]:
        return [c for c in ("x", "y", "z") if c in self.nets]

    def forecast_coordinate(self, coord: str, history, horizon: int) -> np.ndarray:
        net = self.nets[coord]
        values = np.asarray(history, dtype=float)
        if len(values) < net.n_input:
            raise ParameterError(
                f"{self.node_id}/{coord} needs {net.n_input} history values, got {len(values)}"
            )
        scaled = net.scaler.scale(values[-net.n_input:])
        outputs, _ = predict_multi_step(net, scaled, horizon)
        return net.scaler.unscale(outputs)

    def forecast_positions(self, history: LocationSeries, horizon: int) -> np.ndarray:
        """Predicted positions, shape (horizon, dims), pairing per-step coordinates."""
        columns = []
        for coord in self.coordinates:
            if coord not in history.coordinates:
                columns.append(np.zeros(horizon))
                continue
            columns.append(self.forecast_coordinate(coord, history.coordinate(coord), horizon))
        return np.column_stack(columns)


@dataclass(frozen=True)
class TraceOracle:
    """Position "predictor" reading the future off a ground-truth trace.

    Stands in for a perfectly trained NodePredictor. Times past the end of
    the trace hold the final position.
    """
    trace: ContinuousTrace
    n_input: int = 1

    def forecast_positions(self, history: LocationSeries, horizon: int) -> np.ndarray:
        t_last = float(history.times[-1])
        times = [min(t_last + k * history.sample_interval, self.trace.end_time) for k in range(1, horizon + 1)]
        return np.array([self.trace.position_at(t) for t in times], dtype=float)


def train_node_predictor(
    series: LocationSeries,
    config: NetConfig,
    split: Optional[int] = None,
    margin: float = DEFAULT_MARGIN,
) -> Tuple[NodePredictor, Dict[str, ErrorCurve]]:
    """Train one net per coordinate; the scaler is fitted on the training part."""
    nets = {}
    curves = {}
    for coord in series.coordinates:
        values = series.coordinate(coord)
        train_part = values if split is None else values[:split]
        validation = None if split is None else values[split:]
        scaler = fit_scaler(train_part, margin)
        coord_config = replace(config, rng_seed=derive_seed(config.rng_seed, f"{series.node_id}:{coord}"))
        net = RecurrentNet.initialize(coord_config, scaler)
        scaled_validation = None
        if validation is not None and len(validation) >= config.n_input + config.horizon:
            scaled_validation = scaler.scale(validation)
        trained, curve = train(net, scaler.scale(train_part), coord_config, scaled_validation)
        nets[coord] = trained
        curves[coord] = curve
    return NodePredictor(series.node_id, nets), curves


# ============================================================================
# ARCHITECTURE SELECTION
# ============================================================================

@dataclass
class GridSelection:
    best_n_input: int
    best_n_hidden: int
    table: Dict[Tuple[int, int], float]
    per_series: List[Tuple[int, int, float]]

    def rows(self) -> List[Tuple[int, int, float, bool]]:
        best = (self.best_n_input, self.best_n_hidden)
        return [(ne, nc, err, (ne, nc) == best) for (ne, nc), err in sorted(self.table.items())]


def _argmin(errors: Dict[Tuple[int, int], float]) -> Tuple[int, int]:
    return min(errors, key=lambda pair: (errors[pair], pair[0], pair[1]))


def grid_select(
    series_set: Sequence,
    n_input_range: Iterable[int],
    n_hidden_range: Iterable[int],
    base_config: Optional[NetConfig] = None,
    margin: float = DEFAULT_MARGIN,
    max_workers: int = 1,
) -> GridSelection:
    """Train one net per (n_input, n_hidden) per series and pick the lowest
    mean generalization error. Each series is split in half; ties go to the
    smaller n_input, then the smaller n_hidden."""
    base_config = base_config or NetConfig()
    n_inputs = sorted(set(n_input_range))
    n_hiddens = sorted(set(n_hidden_range))
    if not series_set:
        raise ParameterError("grid_select needs at least one series")
    if not n_inputs or not n_hiddens:
        raise ParameterError("grid_select needs non-empty n_input and n_hidden ranges")

    prepared = []
    for values in series_set:
        values = np.asarray(values, dtype=float)
        half = len(values) // 2
        scaler = fit_scaler(values[:half], margin)
        prepared.append((scaler.scale(values[:half]), scaler.scale(values[half:])))

    def run(job):
        index, n_input, n_hidden = job
        train_part, test_part = prepared[index]
        config = replace(
            base_config,
            n_input=n_input,
            n_hidden=n_hidden,
            n_feedback=None,
            rng_seed=derive_seed(base_config.rng_seed, f"grid:{index}:{n_input}:{n_hidden}"),
        )
        trained, _ = train(RecurrentNet.initialize(config), train_part, config)
        return job, window_error(trained, test_part, config.horizon)

    jobs = [(i, ne, nc) for i in range(len(prepared)) for ne in n_inputs for nc in n_hiddens]

    with trace_operation("predictor.grid_select", series=len(prepared), combinations=len(n_inputs) * len(n_hiddens)):
        if max_workers > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as executor:
                results = dict(executor.map(run, jobs))
        else:
            results = dict(run(job) for job in jobs)

    per_series = []
    for i in range(len(prepared)):
        errors = {(ne, nc): results[(i, ne, nc)] for ne in n_inputs for nc in n_hiddens}
        best = _argmin(errors)
        per_series.append((best[0], best[1], errors[best]))

    table = {
        (ne, nc): float(np.mean([results[(i, ne, nc)] for i in range(len(prepared))]))
        for ne in n_inputs for nc in n_hiddens
    }
    best_n_input, best_n_hidden = _argmin(table)
    logger.info("grid_selected", n_input=best_n_input, n_hidden=best_n_hidden, error=table[(best_n_input, best_n_hidden)])
    return GridSelection(best_n_input, best_n_hidden, table, per_series)
