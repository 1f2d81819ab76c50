"""
Artifact Files
==============
Readers and writers for every file the toolkit produces or consumes:
trace CSVs, scenario JSON, model JSON, error curves, LET matrices, routing
reports and grid-selection tables. CSVs go through pandas with "\\n" line
endings and shortest round-trip float formatting, so a read followed by a
write reproduces a file byte for byte.
"""

import json
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import structlog

from .errors import ArtifactFormatError, ParameterError
from .mobility import ContinuousTrace, LocationSeries, Scenario, Waypoint, sample_trace
from .predictor import ErrorCurve, GridSelection, NetConfig, NodePredictor, RecurrentNet, Scaler
from .routing import SimulationReport
from .stability import ExpirationTime

logger = structlog.get_logger(__name__)

PathLike = Union[str, Path]

MODEL_VERSION = "1"
TRACE_COLUMNS = ["time", "node_id", "x", "y"]


def write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def _read_csv(path: PathLike, required: Sequence[str], **kwargs) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, float_precision="round_trip", **kwargs)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ArtifactFormatError(f"cannot parse CSV {path}: {e}") from e
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ArtifactFormatError(f"{path} lacks columns {missing}")
    return frame


def _read_json(path: PathLike) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ArtifactFormatError(f"{path} is not valid JSON: {e}") from e


def _write_json(payload: Any, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")
    return path


# ============================================================================
# TRACES
# ============================================================================

def traces_frame(series: Iterable[LocationSeries]) -> pd.DataFrame:
    """Long-format frame ordered by time, then by node order."""
    series = list(series)
    if not series:
        raise ParameterError("no series to write")
    three_d = any(s.z is not None for s in series)
    frames = []
    for order, s in enumerate(series):
        data = {"time": s.times, "node_id": s.node_id, "x": s.x, "y": s.y}
        if three_d:
            data["z"] = s.z if s.z is not None else np.zeros(len(s))
        frame = pd.DataFrame(data)
        frame["_order"] = order
        frames.append(frame)
    frame = pd.concat(frames, ignore_index=True)
    frame = frame.sort_values(["time", "_order"], kind="stable").drop(columns="_order")
    return frame.reset_index(drop=True)


def write_traces(series: Iterable[LocationSeries], path: PathLike) -> Path:
    return write_frame(traces_frame(series), path)


def read_traces(path: PathLike) -> Dict[str, LocationSeries]:
    """Series per node, in order of first appearance."""
    frame = _read_csv(path, TRACE_COLUMNS, dtype={"node_id": str})
    has_z = "z" in frame.columns
    result: Dict[str, LocationSeries] = {}
    for node_id in pd.unique(frame["node_id"]):
        rows = frame[frame["node_id"] == node_id]
        times = rows["time"].to_numpy(dtype=float)
        if len(times) > 1:
            steps = np.diff(times)
            interval = float(steps[0])
            if interval <= 0 or not np.allclose(steps, interval, rtol=1e-9, atol=1e-9):
                raise ArtifactFormatError(f"samples of {node_id} in {path} are not evenly spaced")
        else:
            interval = 1.0
        result[str(node_id)] = LocationSeries(
            node_id=str(node_id),
            sample_interval=interval,
            start_time=float(times[0]),
            x=rows["x"].to_numpy(dtype=float),
            y=rows["y"].to_numpy(dtype=float),
            z=rows["z"].to_numpy(dtype=float) if has_z else None,
        )
    if not result:
        raise ArtifactFormatError(f"{path} holds no samples")
    return result


def read_node_series(path: PathLike, node_id: str) -> LocationSeries:
    series = read_traces(path)
    if node_id not in series:
        raise ParameterError(f"node {node_id!r} not found in {path}; available: {sorted(series)}")
    return series[node_id]


# ============================================================================
# SCENARIOS
# ============================================================================

def _waypoint_dict(wp: Waypoint) -> Dict[str, Any]:
    return {"time": wp.time, "position": list(wp.position), "speed": wp.speed, "pause": wp.pause}


def scenario_to_dict(scenario: Scenario) -> Dict[str, Any]:
    nodes = {}
    for node in scenario.node_ids:
        trace = scenario.ground_truth(node)
        nodes[node] = {"waypoints": [_waypoint_dict(wp) for wp in trace.waypoints], "end_time": trace.end_time}
    return {
        "name": scenario.name,
        "nodes": nodes,
        "source": scenario.source,
        "destination": scenario.destination,
        "transmission_range": scenario.transmission_range,
        "sample_interval": scenario.sample_interval,
        "start_time": scenario.start_time,
        "sample_count": len(scenario),
        "setup_time": scenario.setup_time,
    }


def save_scenario(scenario: Scenario, path: PathLike) -> Path:
    return _write_json(scenario_to_dict(scenario), path)


def load_scenario(path: PathLike) -> Scenario:
    """Load a scenario whose nodes are given by waypoints or by a trace file."""
    path = Path(path)
    doc = _read_json(path)
    try:
        nodes = doc["nodes"]
        source, destination = doc["source"], doc["destination"]
        transmission_range = float(doc["transmission_range"])
        interval = float(doc["sample_interval"])
    except (KeyError, TypeError, ValueError) as e:
        raise ArtifactFormatError(f"scenario {path} is missing field {e}") from e

    series: Dict[str, LocationSeries] = {}
    traces: Dict[str, ContinuousTrace] = {}
    trace_files: Dict[Path, Dict[str, LocationSeries]] = {}

    for node, ref in nodes.items():
        if "waypoints" in ref:
            waypoints = tuple(
                Waypoint(float(w["time"]), tuple(float(v) for v in w["position"]),
                         float(w.get("speed", 0.0)), float(w.get("pause", 0.0)))
                for w in ref["waypoints"]
            )
            start = float(doc.get("start_time", waypoints[0].time))
            count = doc.get("sample_count")
            if count is None:
                raise ArtifactFormatError(f"scenario {path} needs sample_count for waypoint nodes")
            end = float(ref.get("end_time", max(waypoints[-1].time, start + (int(count) - 1) * interval)))
            trace = ContinuousTrace(node, waypoints, end)
            traces[node] = trace
            series[node] = sample_trace(trace, interval, start, int(count))
        elif "trace_file" in ref:
            trace_path = (path.parent / ref["trace_file"]).resolve()
            if trace_path not in trace_files:
                trace_files[trace_path] = read_traces(trace_path)
            node_series = trace_files[trace_path].get(ref.get("node_id", node))
            if node_series is None:
                raise ArtifactFormatError(f"trace file {trace_path} has no node {node!r}")
            series[node] = LocationSeries(node, node_series.sample_interval, node_series.start_time,
                                          node_series.x, node_series.y, node_series.z)
        else:
            raise ArtifactFormatError(f"scenario node {node!r} needs 'waypoints' or 'trace_file'")

    return Scenario(
        name=doc.get("name", path.stem),
        series=series,
        source=source,
        destination=destination,
        transmission_range=transmission_range,
        traces=traces,
        setup_time=None if doc.get("setup_time") is None else float(doc["setup_time"]),
    )


# ============================================================================
# MODELS
# ============================================================================

def model_to_dict(net: RecurrentNet, node_id: str, coordinate: str) -> Dict[str, Any]:
    if net.scaler is None:
        raise ParameterError("only nets with a fitted scaler can be saved")
    return {
        "version": MODEL_VERSION,
        "node_id": node_id,
        "coordinate": coordinate,
        "config": asdict(net.config),
        "scaler": {"offset": net.scaler.offset, "gain": net.scaler.gain},
        "w_in_hidden": net.w_in_hidden.tolist(),
        "w_hidden_out": net.w_hidden_out.tolist(),
    }


def save_model(net: RecurrentNet, path: PathLike, node_id: str, coordinate: str) -> Path:
    return _write_json(model_to_dict(net, node_id, coordinate), path)


def load_model(path: PathLike) -> Tuple[RecurrentNet, str, str]:
    """Return ``(net, node_id, coordinate)``."""
    doc = _read_json(path)
    if not isinstance(doc, dict) or doc.get("version") != MODEL_VERSION:
        raise ArtifactFormatError(f"{path} is not a version {MODEL_VERSION} model file")
    try:
        net = RecurrentNet(
            config=NetConfig(**doc["config"]),
            w_in_hidden=np.array(doc["w_in_hidden"], dtype=float),
            w_hidden_out=np.array(doc["w_hidden_out"], dtype=float),
            scaler=Scaler(**doc["scaler"]),
        )
        return net, str(doc["node_id"]), str(doc["coordinate"])
    except (KeyError, TypeError, ParameterError) as e:
        raise ArtifactFormatError(f"model file {path} is malformed: {e}") from e


def model_path(model_dir: PathLike, node_id: str, coordinate: str) -> Path:
    return Path(model_dir) / f"{node_id}_{coordinate}.json"


def save_node_predictor(predictor: NodePredictor, model_dir: PathLike) -> List[Path]:
    return [
        save_model(net, model_path(model_dir, predictor.node_id, coord), predictor.node_id, coord)
        for coord, net in predictor.nets.items()
    ]


def load_node_predictors(model_dir: PathLike, node_ids: Iterable[str]) -> Tuple[Dict[str, NodePredictor], List[str]]:
    """Predictors for the nodes with x and y models in ``model_dir``, plus the missing node ids."""
    predictors: Dict[str, NodePredictor] = {}
    missing: List[str] = []
    for node in node_ids:
        nets = {}
        for coord in ("x", "y", "z"):
            path = model_path(model_dir, node, coord)
            if path.exists():
                nets[coord] = load_model(path)[0]
        if "x" in nets and "y" in nets:
            predictors[node] = NodePredictor(node, nets)
        else:
            missing.append(node)
    return predictors, missing


# ============================================================================
# RESULTS
# ============================================================================

def error_curve_frame(curve: ErrorCurve) -> pd.DataFrame:
    rows = curve.rows()
    return pd.DataFrame({
        "epoch": [r[0] for r in rows],
        "E_train": [r[1] for r in rows],
        "E_gener": [np.nan if r[2] is None else r[2] for r in rows],
    })


def write_error_curve(curve: ErrorCurve, path: PathLike) -> Path:
    return write_frame(error_curve_frame(curve), path)


def write_let_matrix(rows: Iterable[Tuple[float, str, str, ExpirationTime]], path: PathLike) -> Path:
    rows = list(rows)
    frame = pd.DataFrame({
        "time": [r[0] for r in rows],
        "node_i": [r[1] for r in rows],
        "node_j": [r[2] for r in rows],
        "let_seconds": [str(r[3]) for r in rows],
    })
    return write_frame(frame, path)


def _pet_value(pet: Optional[ExpirationTime]) -> Optional[Union[float, str]]:
    if pet is None:
        return None
    return str(pet) if pet.is_beyond_horizon else pet.value


def report_to_dict(report: SimulationReport) -> Dict[str, Any]:
    return {
        "policy": report.policy,
        "path": list(report.path) if report.path else None,
        "predicted_pet": _pet_value(report.predicted_pet),
        "realized_lifetime": report.realized_lifetime,
        "interruptions": report.interruptions,
        "rediscoveries": report.rediscoveries,
        "no_route": report.no_route,
        "history": [
            {
                "time": r.time,
                "path": list(r.path),
                "predicted_pet": _pet_value(r.predicted_pet),
                "realized_lifetime": r.realized_lifetime,
                "broken": r.broken,
            }
            for r in report.history
        ],
    }


def write_reports(reports: Sequence[SimulationReport], json_path: PathLike, csv_path: Optional[PathLike] = None) -> Path:
    json_path = _write_json([report_to_dict(r) for r in reports], json_path)
    if csv_path is None:
        csv_path = Path(json_path).with_suffix(".csv")
    write_frame(pd.DataFrame({
        "policy": [r.policy for r in reports],
        "lifetime_s": [r.realized_lifetime for r in reports],
        "interruptions": [r.interruptions for r in reports],
        "rediscoveries": [r.rediscoveries for r in reports],
    }), csv_path)
    return json_path


def write_grid_tables(selection: GridSelection, table_path: PathLike, per_series_path: Optional[PathLike] = None) -> Path:
    rows = selection.rows()
    write_frame(pd.DataFrame({
        "n_input": [r[0] for r in rows],
        "n_hidden": [r[1] for r in rows],
        "mean_E_gener": [r[2] for r in rows],
        "selected": [r[3] for r in rows],
    }), table_path)
    if per_series_path is not None:
        write_frame(pd.DataFrame({
            "series": list(range(len(selection.per_series))),
            "best_n_input": [p[0] for p in selection.per_series],
            "best_n_hidden": [p[1] for p in selection.per_series],
            "E_gener": [p[2] for p in selection.per_series],
        }), per_series_path)
    return Path(table_path)


def write_summary(summary: Mapping[str, Any], path: PathLike) -> Path:
    return _write_json(dict(summary), path)
