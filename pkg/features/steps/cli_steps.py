"""
Step definitions for the command line.
"""

import filecmp
import json
import shlex

import pandas as pd
from behave import when, then

from stablepath.cli import run


def _run(context, argv):
    context.exit_code = run(argv)


def _resolve(context, argv):
    # relative file arguments land in the scenario's work directory
    resolved = []
    for i, arg in enumerate(argv):
        previous = argv[i - 1] if i else ""
        if previous in ("--out", "--trace", "--model", "--curve", "--models", "--summary", "--let-matrix"):
            arg = str(context.workdir / arg)
        resolved.append(arg)
    return resolved


@when('I run gen-trace with seed {seed:d} into "{name}"')
def step_gen_trace(context, seed, name):
    _run(context, ["gen-trace", "--seed", str(seed), "--duration", "500", "--out", str(context.workdir / name)])
    assert context.exit_code == 0


@when('I run "{command}"')
def step_run(context, command):
    _run(context, _resolve(context, shlex.split(command)))


@when('I run route-sim on the four-node scenario with --train-missing')
def step_route_sim(context):
    scenario = context.repo_root / "config" / "scenarios" / "fig2.json"
    context.report_path = context.workdir / "report.json"
    _run(context, [
        "route-sim", "--scenario", str(scenario), "--models", str(context.workdir / "models"),
        "--train-missing", "--epochs", "1000", "--lr", "0.5", "--seed", "3",
        "--out", str(context.report_path),
    ])


@then('the command succeeds')
def step_succeeds(context):
    assert context.exit_code == 0, context.exit_code


@then('the command exits with code {code:d}')
def step_exit_code(context, code):
    assert context.exit_code == code, context.exit_code


@then('the files "{first}" and "{second}" are identical')
def step_identical(context, first, second):
    assert filecmp.cmp(context.workdir / first, context.workdir / second, shallow=False)


@then('"{name}" has {rows:d} rows for each of {nodes:d} nodes')
def step_rows_per_node(context, name, rows, nodes):
    frame = pd.read_csv(context.workdir / name)
    counts = frame.groupby("node_id").size()
    assert len(counts) == nodes and (counts == rows).all(), counts


@then('"{name}" has {rows:d} rows')
def step_rows(context, name, rows):
    assert len(pd.read_csv(context.workdir / name)) == rows


@then('the report lists the stable and shortest policies')
def step_report(context):
    with open(context.report_path) as f:
        reports = json.load(f)
    assert [r["policy"] for r in reports] == ["stable", "shortest"]
    assert context.report_path.with_suffix(".csv").exists()
