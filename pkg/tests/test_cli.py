"""
Command line: determinism, outputs and exit codes.
"""

import json

import pandas as pd
import pytest

from stablepath import cli
from stablepath.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, build_parser, run
from stablepath.config import CONFIG_ENV_VAR, SEED_ENV_VAR
from stablepath.stability import ExpirationTime

EVAL_OUTPUT_FILES = ["x_pred.csv", "y_pred.csv", "trajectory.csv", "x_errors.csv", "y_errors.csv", "errors.csv",
                    "summary.json"]

MINIMAL_FLAGS = {
    "gen-trace": ["--out", "t.csv"],
    "train": ["--trace", "t.csv", "--node", "n0", "--coord", "x", "--out", "m.json"],
    "predict": ["--model", "m.json", "--trace", "t.csv", "--at", "0"],
    "let": ["--model-a", "a.json", "--model-b", "b.json", "--trace", "t.csv", "--at", "0"],
    "route-sim": ["--scenario", "s.json", "--models", "models", "--out", "r.json"],
    "paper-eval": ["--out", "out"],
    "grid": ["--out", "g.csv"],
}


@pytest.fixture(autouse=True)
def workdir(monkeypatch, tmp_path):
    monkeypatch.delenv(CONFIG_ENV_VAR, raising=False)
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)
    monkeypatch.chdir(tmp_path)
    return tmp_path


def run_ok(command):
    assert run(command.split()) == EXIT_OK, command


class TestParser:
    @pytest.mark.parametrize("command, flags", sorted(MINIMAL_FLAGS.items()))
    def test_every_command_is_registered(self, command, flags):
        args = build_parser().parse_args([command, *flags])
        assert args.command == command
        assert callable(args.handler)

    def test_seed_accepted_after_the_command(self):
        args = build_parser().parse_args(["gen-trace", "--seed", "9", "--out", "t.csv"])
        assert args.seed == 9


class TestExitCodes:
    def test_missing_required_flag(self):
        assert run(["gen-trace", "--seed", "1"]) == EXIT_USAGE

    def test_unknown_command(self):
        assert run(["teleport"]) == EXIT_USAGE

    def test_invalid_configuration_value(self):
        assert run(["gen-trace", "--vmin", "30", "--vmax", "10", "--out", "t.csv"]) == EXIT_USAGE

    def test_invalid_territory(self):
        assert run(["gen-trace", "--territory", "100", "--out", "t.csv"]) == EXIT_USAGE

    def test_missing_input_file(self):
        assert run(["train", "--trace", "missing.csv", "--node", "n0", "--coord", "x", "--out", "m.json"]) == EXIT_RUNTIME

    def test_unknown_node(self):
        run_ok("gen-trace --seed 1 --duration 100 --out t.csv")
        assert run(["train", "--trace", "t.csv", "--node", "n7", "--coord", "x", "--out", "m.json"]) == EXIT_USAGE

    def test_missing_models_without_training(self, repo_root):
        scenario = str(repo_root / "config" / "scenarios" / "fig2.json")
        assert run(["route-sim", "--scenario", scenario, "--models", "models", "--out", "r.json"]) == EXIT_USAGE


class TestGenTrace:
    def test_same_seed_same_bytes(self, workdir):
        run_ok("gen-trace --seed 1 --nodes 3 --duration 500 --out a.csv")
        run_ok("gen-trace --seed 1 --nodes 3 --duration 500 --out b.csv")
        assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()

    def test_different_seed_different_trace(self, workdir):
        run_ok("gen-trace --seed 1 --duration 500 --out a.csv")
        run_ok("gen-trace --seed 2 --duration 500 --out b.csv")
        assert (workdir / "a.csv").read_bytes() != (workdir / "b.csv").read_bytes()

    def test_default_sample_count(self, workdir):
        run_ok("gen-trace --seed 2 --nodes 2 --out t.csv")
        frame = pd.read_csv(workdir / "t.csv")
        assert frame.groupby("node_id").size().tolist() == [401, 401]
        assert frame["time"].max() == 4000.0

    def test_fractional_interval_keeps_end_sample(self, workdir):
        run_ok("gen-trace --seed 2 --nodes 1 --duration 1 --interval 0.1 --out t.csv")
        frame = pd.read_csv(workdir / "t.csv")
        assert len(frame) == 11
        assert frame["time"].iloc[-1] == pytest.approx(1.0)

    def test_three_dimensional_territory(self, workdir):
        run_ok("gen-trace --seed 3 --duration 200 --territory 500x500x50 --out t.csv")
        frame = pd.read_csv(workdir / "t.csv")
        assert list(frame.columns) == ["time", "node_id", "x", "y", "z"]
        assert frame["z"].between(0.0, 50.0).all()


class TestModels:
    def test_train_predict_and_let(self, workdir, capsys):
        run_ok("gen-trace --seed 4 --nodes 2 --duration 600 --out t.csv")
        for node in ("n0", "n1"):
            for coord in ("x", "y"):
                run_ok(f"train --trace t.csv --node {node} --coord {coord} --epochs 3 --split 40 "
                       f"--out models/{node}_{coord}.json --curve {node}_{coord}.csv")
        assert len(pd.read_csv(workdir / "n0_x.csv")) == 3
        capsys.readouterr()

        run_ok("predict --model models/n0_x.json --trace t.csv --at 200 --steps 3")
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "time,predicted"
        assert [float(line.split(",")[0]) for line in lines[1:]] == [210.0, 220.0, 230.0]

        run_ok("let --model-a models/n0_x.json models/n0_y.json --model-b models/n1_x.json models/n1_y.json "
               "--trace t.csv --at 200")
        ExpirationTime.parse(capsys.readouterr().out)

    def test_models_of_different_nodes_rejected(self, workdir):
        run_ok("gen-trace --seed 4 --nodes 2 --duration 600 --out t.csv")
        run_ok("train --trace t.csv --node n0 --coord x --epochs 1 --split 40 --out a.json")
        run_ok("train --trace t.csv --node n1 --coord y --epochs 1 --split 40 --out b.json")
        assert run(["let", "--model-a", "a.json", "b.json", "--model-b", "a.json", "b.json",
                    "--trace", "t.csv", "--at", "200"]) == EXIT_USAGE


class TestExperiments:
    def test_eval_command_is_reproducible(self, workdir):
        command = "paper-eval --seed 3 --count 120 --split 60 --ne 4 --nc 3 --epochs 30 --lr 0.5 --out {}"
        run_ok(command.format("first"))
        run_ok(command.format("second"))
        for name in EVAL_OUTPUT_FILES:
            assert (workdir / "first" / name).read_bytes() == (workdir / "second" / name).read_bytes(), name

        summary = json.loads((workdir / "first" / "summary.json").read_text())
        assert summary["samples"] == 120 and summary["split"] == 60
        for coord in ("x", "y"):
            assert set(summary[coord]) >= {"E_train", "E_gener", "persistence_E_gener"}
        predictions = pd.read_csv(workdir / "first" / "x_pred.csv")
        assert list(predictions.columns) == ["time", "actual", "predicted_1", "predicted_2", "predicted_3"]
        assert len(predictions) == 120 - 4
        errors = pd.read_csv(workdir / "first" / "errors.csv")
        assert list(errors["epoch"]) == list(range(1, 31))
        assert errors["E_train"].iloc[-1] < errors["E_train"].iloc[0]

    def test_grid_selects_within_ranges(self, workdir):
        run_ok("grid --seed 5 --ne-range 2:3 --nc-range 2:2 --series 2 --length 60 --epochs 2 --lr 0.2 "
               "--per-series per.csv --out grid.csv")
        grid = pd.read_csv(workdir / "grid.csv")
        assert len(grid) == 2 and grid["selected"].sum() == 1
        assert len(pd.read_csv(workdir / "per.csv")) == 2

    def test_route_sim_with_saved_models(self, workdir, repo_root):
        scenario = str(repo_root / "config" / "scenarios" / "fig2.json")
        command = (f"route-sim --scenario {scenario} --models models --train-missing --ne 4 --nc 3 --epochs 3 "
                   f"--out report.json --let-matrix let.csv")
        run_ok(command)
        assert sorted(p.name for p in (workdir / "models").iterdir()) == [
            f"{n}_{c}.json" for n in "ABCD" for c in "xy"
        ]
        report = json.loads((workdir / "report.json").read_text())
        assert [r["policy"] for r in report] == ["stable", "shortest"]
        assert list(pd.read_csv(workdir / "report.csv")["policy"]) == ["stable", "shortest"]
        assert len(pd.read_csv(workdir / "let.csv")) > 0

        first = (workdir / "report.json").read_bytes()
        run_ok(f"route-sim --scenario {scenario} --models models --ne 4 --nc 3 --out report.json")
        assert (workdir / "report.json").read_bytes() == first

    def test_route_sim_trains_only_before_setup(self, workdir, repo_root, mocker):
        spy = mocker.spy(cli, "train_node_predictor")
        scenario = repo_root / "config" / "scenarios" / "fig2.json"
        run_ok(f"route-sim --scenario {scenario} --models models --train-missing --ne 4 --nc 3 --epochs 1 "
               f"--out report.json")
        trained_on = {call.args[0].node_id: call.args[0] for call in spy.call_args_list}
        assert sorted(trained_on) == ["A", "B", "C", "D"]
        for series in trained_on.values():
            assert len(series) == 20
            assert series.times[-1] == 0.0
