"""
stablepath command line
=======================
Reproducible experiments over mobility traces, per-coordinate predictors,
link/path expiration times and routing comparisons.

Usage:
    stablepath gen-trace --seed 1 --out traces.csv
    stablepath train --trace traces.csv --node n0 --coord x --out models/n0_x.json
    stablepath predict --model models/n0_x.json --trace traces.csv --at 100 --steps 3
    stablepath let --model-a models/n0_x.json models/n0_y.json --model-b ... --trace traces.csv --at 100
    stablepath route-sim --scenario config/scenarios/fig2.json --models models --train-missing --out report.json
    stablepath paper-eval --out results/paper-eval
    stablepath grid --out grid.csv

Exit codes: 0 success, 1 runtime error, 2 argument or input error.
"""

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog
from pydantic import ValidationError

from . import artifacts
from .config import ExperimentConfig, load_config
from .errors import ArtifactFormatError, ParameterError, StablePathError
from .mobility import Territory, generate_rwm_trace, sample_trace
from .observability import configure_logging, trace_operation
from .predictor import (
    ErrorCurve,
    NetConfig,
    NodePredictor,
    PersistenceForecaster,
    RecurrentNet,
    evaluate,
    fit_scaler,
    grid_select,
    train,
    train_node_predictor,
)
from .routing import run_comparison
from .seeding import derive_seed
from .stability import let_matrix, predicted_let

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


# ============================================================================
# HELPERS
# ============================================================================

def _territory(text: str) -> Tuple[float, ...]:
    try:
        parts = tuple(float(p) for p in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"territory must look like WxH or WxHxD, got {text!r}")
    if len(parts) not in (2, 3) or any(p <= 0 for p in parts):
        raise argparse.ArgumentTypeError(f"territory must look like WxH or WxHxD, got {text!r}")
    return parts


def _int_range(text: str) -> Tuple[int, int]:
    try:
        lo, _, hi = text.partition(":")
        bounds = (int(lo), int(hi or lo))
    except ValueError:
        raise argparse.ArgumentTypeError(f"range must look like LOW:HIGH, got {text!r}")
    if bounds[0] < 1 or bounds[1] < bounds[0]:
        raise argparse.ArgumentTypeError(f"range must satisfy 1 <= LOW <= HIGH, got {text!r}")
    return bounds


def _policies(text: str) -> List[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _config(args: argparse.Namespace, overrides: Dict[str, Any]) -> ExperimentConfig:
    overrides = dict(overrides)
    overrides["seed"] = getattr(args, "seed", None)
    config_path = getattr(args, "config", None)
    return load_config(Path(config_path) if config_path else None, overrides)


def _net_config(config: ExperimentConfig, rng_seed: int) -> NetConfig:
    net = config.net
    return NetConfig(
        n_input=net.n_input,
        n_hidden=net.n_hidden,
        n_feedback=net.n_feedback,
        horizon=net.horizon,
        learning_rate=net.learning_rate,
        epochs=net.epochs,
        rng_seed=rng_seed,
    )


def _net_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "net.n_input": getattr(args, "ne", None),
        "net.n_hidden": getattr(args, "nc", None),
        "net.horizon": getattr(args, "horizon", None),
        "net.epochs": getattr(args, "epochs", None),
        "net.learning_rate": getattr(args, "lr", None),
        "net.margin": getattr(args, "margin", None),
    }


def _predictor_from_models(paths: Sequence[str]) -> NodePredictor:
    nets = {}
    node_ids = set()
    for path in paths:
        net, node_id, coord = artifacts.load_model(path)
        nets[coord] = net
        node_ids.add(node_id)
    if len(node_ids) != 1:
        raise ParameterError(f"models {list(paths)} belong to several nodes {sorted(node_ids)}")
    return NodePredictor(node_ids.pop(), nets)


def _echo(text: str) -> None:
    sys.stdout.write(text + "\n")


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_gen_trace(args: argparse.Namespace) -> int:
    overrides = {
        "rwm.v_min": args.vmin,
        "rwm.v_max": args.vmax,
        "rwm.pause_max": args.pause_max,
        "rwm.duration": args.duration,
        "rwm.sample_interval": args.interval,
    }
    if args.territory is not None:
        overrides["rwm.width"], overrides["rwm.height"] = args.territory[:2]
        overrides["rwm.depth"] = args.territory[2] if len(args.territory) == 3 else None
    config = _config(args, overrides)
    rwm = config.rwm

    count = args.count if args.count is not None else int(math.floor(rwm.duration / rwm.sample_interval + 1e-9)) + 1
    series = []
    for i in range(args.nodes):
        node_id = f"n{i}"
        params = rwm.params(derive_seed(config.seed, f"node:{node_id}"))
        trace = generate_rwm_trace(params, node_id=node_id)
        series.append(sample_trace(trace, rwm.sample_interval, 0.0, count))

    artifacts.write_traces(series, args.out)
    logger.info("traces_written", path=str(args.out), nodes=args.nodes, samples=count)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = _config(args, {**_net_overrides(args), "split": args.split})
    series = artifacts.read_node_series(args.trace, args.node)
    values = series.coordinate(args.coord)

    split = config.split
    train_part = values[:split]
    test_part = values[split:]
    scaler = fit_scaler(train_part, config.net.margin)
    net_config = _net_config(config, derive_seed(config.seed, f"train:{args.node}:{args.coord}"))

    validation = None
    if len(test_part) >= net_config.n_input + net_config.horizon:
        validation = scaler.scale(test_part)
    trained, curve = train(RecurrentNet.initialize(net_config, scaler), scaler.scale(train_part), net_config, validation)

    artifacts.save_model(trained, args.out, args.node, args.coord)
    if args.curve:
        artifacts.write_error_curve(curve, args.curve)
    if len(curve):
        _echo(f"{args.node}/{args.coord}: E_train {curve.e_train[0]:.6g} -> {curve.e_train[-1]:.6g}")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    net, node_id, coord = artifacts.load_model(args.model)
    series = artifacts.read_node_series(args.trace, args.node or node_id)
    index = series.index_of(args.at)
    history = series.window(index, net.n_input).coordinate(coord)

    outputs = net.forecast(net.scaler.scale(history), args.steps)
    frame = pd.DataFrame({
        "time": args.at + series.sample_interval * np.arange(1, args.steps + 1),
        "predicted": net.scaler.unscale(outputs),
    })
    frame.to_csv(sys.stdout, index=False, lineterminator="\n")
    return EXIT_OK


def cmd_let(args: argparse.Namespace) -> int:
    config = _config(args, {"routing.transmission_range": args.range})
    predictor_a = _predictor_from_models(args.model_a)
    predictor_b = _predictor_from_models(args.model_b)
    all_series = artifacts.read_traces(args.trace)
    for node in (predictor_a.node_id, predictor_b.node_id):
        if node not in all_series:
            raise ParameterError(f"node {node!r} not found in {args.trace}")

    series_a = all_series[predictor_a.node_id]
    series_b = all_series[predictor_b.node_id]
    index = series_a.index_of(args.at)
    n_input = max(predictor_a.n_input, predictor_b.n_input)
    let = predicted_let(
        predictor_a,
        predictor_b,
        series_a.window(index, n_input),
        series_b.window(index, n_input),
        config.routing.transmission_range,
        args.steps,
    )
    _echo(str(let))
    return EXIT_OK


def cmd_route_sim(args: argparse.Namespace) -> int:
    overrides = {
        **_net_overrides(args),
        "routing.transmission_range": args.range,
        "routing.max_hops": args.max_hops,
    }
    if args.policies is not None:
        overrides["routing.policies"] = args.policies
    if args.parallel:
        overrides["routing.parallel"] = True
    config = _config(args, overrides)
    scenario = artifacts.load_scenario(args.scenario)
    horizon = config.net.horizon

    predictors, missing = artifacts.load_node_predictors(args.models, scenario.node_ids)
    if missing:
        if not args.train_missing:
            raise ParameterError(f"no models in {args.models} for nodes {missing}; use --train-missing")
        for node in missing:
            net_config = _net_config(config, derive_seed(config.seed, f"route-sim:{node}"))
            predictor, _ = train_node_predictor(scenario.training_series(node), net_config, margin=config.net.margin)
            artifacts.save_node_predictor(predictor, args.models)
            predictors[node] = predictor
            logger.info("node_predictor_trained", node=node)

    reports = run_comparison(
        scenario,
        config.routing.policies,
        predictors,
        horizon=horizon,
        transmission_range=config.routing.transmission_range,
        max_hops=config.routing.max_hops,
        parallel=config.routing.parallel,
    )
    artifacts.write_reports(reports, args.out, args.summary)

    if args.let_matrix:
        setup = max(max(p.n_input for p in predictors.values()) - 1, scenario.setup_index)
        rows = []
        for index in range(setup, len(scenario)):
            rows.extend(let_matrix(scenario, predictors, index, config.routing.transmission_range, horizon))
        artifacts.write_let_matrix(rows, args.let_matrix)

    for report in reports:
        path = "-".join(report.path) if report.path else "no-route"
        _echo(f"{report.policy}: path {path} lifetime {report.realized_lifetime:.3f} s "
              f"interruptions {report.interruptions} rediscoveries {report.rediscoveries}")
    return EXIT_OK


def _prediction_frame(net: RecurrentNet, values: np.ndarray, times: np.ndarray, horizon: int) -> pd.DataFrame:
    """Actual value per target time next to the forecasts made 1..horizon steps before it."""
    scaler = net.scaler
    scaled = scaler.scale(values)
    n = len(values)
    first_base = net.n_input - 1
    forecasts = {
        base: scaler.unscale(net.forecast(scaled[base - net.n_input + 1:base + 1], horizon))
        for base in range(first_base, n - 1)
    }
    frame = pd.DataFrame({"time": times[first_base + 1:], "actual": values[first_base + 1:]})
    for k in range(1, horizon + 1):
        column = []
        for i in range(first_base + 1, n):
            base = i - k
            column.append(forecasts[base][k - 1] if base >= first_base else np.nan)
        frame[f"predicted_{k}"] = column
    return frame


def cmd_paper_eval(args: argparse.Namespace) -> int:
    config = _config(args, {
        **_net_overrides(args),
        "split": args.split,
        "rwm.sample_count": args.count,
    })
    rwm = config.rwm
    horizon = config.net.horizon
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    duration = max(rwm.duration, (rwm.sample_count - 1) * rwm.sample_interval)
    params = replace(rwm.params(config.component_seed("paper-eval:trace")), duration=duration)
    trace = generate_rwm_trace(params, node_id="n0")
    series = sample_trace(trace, rwm.sample_interval, 0.0, rwm.sample_count)
    times = series.times

    summary: Dict[str, Any] = {"seed": config.seed, "split": config.split, "samples": len(series),
                               "config": config.model_dump(mode="json")}
    curves: Dict[str, ErrorCurve] = {}
    one_step = {}

    for coord in ("x", "y"):
        values = series.coordinate(coord)
        scaler = fit_scaler(values[:config.split], config.net.margin)
        scaled = scaler.scale(values)
        net_config = _net_config(config, config.component_seed(f"paper-eval:net:{coord}"))
        trained, curve = train(
            RecurrentNet.initialize(net_config, scaler),
            scaled[:config.split],
            net_config,
            scaled[config.split:],
        )
        curves[coord] = curve
        artifacts.write_error_curve(curve, out / f"{coord}_errors.csv")

        frame = _prediction_frame(trained, values, times, horizon)
        artifacts.write_frame(frame, out / f"{coord}_pred.csv")
        one_step[coord] = frame

        e_train, e_gener = evaluate(trained, scaled, config.split, horizon)
        _, baseline = evaluate(PersistenceForecaster(trained.n_input), scaled, config.split, horizon)
        summary[coord] = {
            "E_train_first_epoch": curve.e_train[0] if len(curve) else None,
            "E_train_final_epoch": curve.e_train[-1] if len(curve) else None,
            "E_train": e_train,
            "E_gener": e_gener,
            "persistence_E_gener": baseline,
        }
        logger.info("coordinate_evaluated", coord=coord, e_train=e_train, e_gener=e_gener, persistence=baseline)

    trajectory = pd.DataFrame({
        "time": one_step["x"]["time"],
        "actual_x": one_step["x"]["actual"],
        "actual_y": one_step["y"]["actual"],
        "predicted_x": one_step["x"]["predicted_1"],
        "predicted_y": one_step["y"]["predicted_1"],
    })
    artifacts.write_frame(trajectory, out / "trajectory.csv")

    total = ErrorCurve(
        e_train=[a + b for a, b in zip(curves["x"].e_train, curves["y"].e_train)],
        e_gener=[a + b for a, b in zip(curves["x"].e_gener, curves["y"].e_gener)],
    )
    artifacts.write_error_curve(total, out / "errors.csv")
    artifacts.write_summary(summary, out / "summary.json")

    _echo(f"paper-eval written to {out}")
    for coord in ("x", "y"):
        _echo(f"{coord}: E_gener {summary[coord]['E_gener']:.6g} (persistence {summary[coord]['persistence_E_gener']:.6g})")
    return EXIT_OK


def cmd_grid(args: argparse.Namespace) -> int:
    overrides = {
        "grid.n_input_range": args.ne_range,
        "grid.n_hidden_range": args.nc_range,
        "grid.series_count": args.series,
        "grid.series_length": args.length,
        "grid.epochs": args.epochs,
        "grid.learning_rate": args.lr,
        "grid.max_workers": args.workers,
    }
    config = _config(args, overrides)
    grid = config.grid
    rwm = config.rwm

    duration = max(rwm.duration, (grid.series_length - 1) * rwm.sample_interval)
    series_set = []
    for i in range(grid.series_count):
        params = replace(rwm.params(config.component_seed(f"grid:series:{i}")), duration=duration)
        trace = generate_rwm_trace(params, node_id=f"s{i}")
        sampled = sample_trace(trace, rwm.sample_interval, 0.0, grid.series_length)
        series_set.append(sampled.coordinate("x" if i % 2 == 0 else "y"))

    base = replace(
        _net_config(config, config.component_seed("grid:nets")),
        epochs=grid.epochs,
        learning_rate=grid.learning_rate,
    )
    selection = grid_select(
        series_set,
        range(grid.n_input_range[0], grid.n_input_range[1] + 1),
        range(grid.n_hidden_range[0], grid.n_hidden_range[1] + 1),
        base_config=base,
        margin=config.net.margin,
        max_workers=grid.max_workers,
    )
    artifacts.write_grid_tables(selection, args.out, args.per_series)
    _echo(f"selected n_input={selection.best_n_input} n_hidden={selection.best_n_hidden}")
    return EXIT_OK


# ============================================================================
# PARSER
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="Global seed for every stochastic component")
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON experiment config file")
    common.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS, help="Enable debug logging")

    parser = argparse.ArgumentParser(
        prog="stablepath",
        description="Mobility prediction and stable-path routing experiments",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def net_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--ne", type=int, help="Input neurons (history length)")
        p.add_argument("--nc", type=int, help="Hidden neurons")
        p.add_argument("--horizon", type=int, help="Prediction steps")
        p.add_argument("--epochs", type=int, help="Training epochs")
        p.add_argument("--lr", type=float, help="Learning rate")
        p.add_argument("--margin", type=float, help="Scaler margin inside (0, 1)")

    p = sub.add_parser("gen-trace", parents=[common], help="Generate Random Waypoint traces")
    p.add_argument("--vmin", type=float, help="Minimum speed (m/s)")
    p.add_argument("--vmax", type=float, help="Maximum speed (m/s)")
    p.add_argument("--pause-max", type=float, help="Maximum pause (s)")
    p.add_argument("--duration", type=float, help="Trace duration (s)")
    p.add_argument("--interval", type=float, help="Sampling interval (s)")
    p.add_argument("--count", type=int, help="Samples per node (default: duration / interval + 1)")
    p.add_argument("--territory", type=_territory, help="Territory size WxH or WxHxD (m)")
    p.add_argument("--nodes", type=int, default=1, help="Number of nodes, named n0, n1, ...")
    p.add_argument("--out", required=True, help="Output trace CSV")
    p.set_defaults(handler=cmd_gen_trace)

    p = sub.add_parser("train", parents=[common], help="Train one coordinate predictor")
    p.add_argument("--trace", required=True, help="Trace CSV")
    p.add_argument("--node", required=True, help="Node id")
    p.add_argument("--coord", required=True, choices=["x", "y", "z"], help="Coordinate")
    net_flags(p)
    p.add_argument("--split", type=int, help="Training/test boundary (samples)")
    p.add_argument("--curve", help="Optional error-curve CSV")
    p.add_argument("--out", required=True, help="Output model JSON")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="Closed-loop forecast from a model")
    p.add_argument("--model", required=True, help="Model JSON")
    p.add_argument("--trace", required=True, help="Trace CSV")
    p.add_argument("--node", help="Node id (default: the model's node)")
    p.add_argument("--at", type=float, required=True, help="Time of the last observed sample")
    p.add_argument("--steps", type=int, default=3, help="Steps to forecast")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("let", parents=[common], help="Predicted link expiration time")
    p.add_argument("--model-a", nargs="+", required=True, help="Model files of node A (one per coordinate)")
    p.add_argument("--model-b", nargs="+", required=True, help="Model files of node B (one per coordinate)")
    p.add_argument("--trace", required=True, help="Trace CSV")
    p.add_argument("--at", type=float, required=True, help="Base time")
    p.add_argument("--range", type=float, help="Transmission range (m)")
    p.add_argument("--steps", type=int, default=3, help="Forecast steps")
    p.set_defaults(handler=cmd_let)

    p = sub.add_parser("route-sim", parents=[common], help="Compare routing policies on a scenario")
    p.add_argument("--scenario", required=True, help="Scenario JSON")
    p.add_argument("--models", required=True, help="Model directory (<node>_<coord>.json)")
    p.add_argument("--range", type=float, help="Transmission range (m)")
    net_flags(p)
    p.add_argument("--policies", type=_policies, help="Comma-separated policies: stable,shortest")
    p.add_argument("--max-hops", type=int, help="Longest path considered")
    p.add_argument("--parallel", action="store_true", help="Simulate policies in parallel")
    p.add_argument("--train-missing", action="store_true", help="Train models for nodes without one")
    p.add_argument("--let-matrix", help="Optional LET matrix CSV over every sample time")
    p.add_argument("--summary", help="Summary CSV (default: report path with .csv)")
    p.add_argument("--out", required=True, help="Report JSON")
    p.set_defaults(handler=cmd_route_sim)

    p = sub.add_parser("paper-eval", parents=[common], help="Train and evaluate x/y predictors on one RWM trace")
    net_flags(p)
    p.add_argument("--count", type=int, help="Samples in the trace")
    p.add_argument("--split", type=int, help="Training/test boundary (samples)")
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(handler=cmd_paper_eval)

    p = sub.add_parser("grid", parents=[common], help="Select (n_input, n_hidden) by generalization error")
    p.add_argument("--ne-range", type=_int_range, help="n_input range LOW:HIGH")
    p.add_argument("--nc-range", type=_int_range, help="n_hidden range LOW:HIGH")
    p.add_argument("--series", type=int, help="Number of RWM series")
    p.add_argument("--length", type=int, help="Points per series")
    p.add_argument("--epochs", type=int, help="Training epochs per net")
    p.add_argument("--lr", type=float, help="Learning rate")
    p.add_argument("--workers", type=int, help="Parallel training workers")
    p.add_argument("--per-series", help="Optional per-series optimum CSV")
    p.add_argument("--out", required=True, help="Error table CSV")
    p.set_defaults(handler=cmd_grid)

    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging(verbose=getattr(args, "verbose", False))

    try:
        with trace_operation(f"cli.{args.command}"):
            return args.handler(args)
    except (ParameterError, ArtifactFormatError, ValidationError) as e:
        logger.error("invalid_input", command=args.command, error=str(e))
        return EXIT_USAGE
    except (StablePathError, OSError) as e:
        logger.error("command_failed", command=args.command, error=str(e))
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
