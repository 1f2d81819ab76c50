"""
stablepath
==========
Mobility prediction and stable-path routing for simulated ad hoc networks.
"""

from .errors import (
    ArtifactFormatError,
    NoRouteError,
    NumericError,
    ParameterError,
    SamplingRangeError,
    StablePathError,
)
from .mobility import (
    ContinuousTrace,
    LocationSeries,
    RwmParams,
    Scenario,
    Territory,
    Waypoint,
    build_fig2_scenario,
    build_rwm_scenario,
    generate_rwm_trace,
    sample_trace,
)
from .predictor import (
    NetConfig,
    NodePredictor,
    PersistenceForecaster,
    RecurrentNet,
    Scaler,
    bptt_gradient,
    evaluate,
    finite_diff_gradient,
    fit_scaler,
    forward_one,
    grid_select,
    predict_multi_step,
    train,
)
from .routing import (
    Path,
    RoutingPolicy,
    SimulationReport,
    TopologySnapshot,
    build_topology,
    enumerate_paths,
    run_comparison,
    select_path,
)
from .stability import (
    BEYOND_HORIZON,
    DistancePolynomial,
    DistanceSeries,
    ExpirationTime,
    PredictedTrack,
    distances,
    fit_polynomial,
    link_break_time,
    link_expiration_time,
    path_expiration_time,
    predicted_let,
)

__version__ = "0.1.0"
