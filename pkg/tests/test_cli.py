import csv
import json
import re

import pytest
from typer.testing import CliRunner

from cli import cli_app
from helpers import single_bus_market
from mpflex.services.instance_io import dump_instance, dumps_instance
from mpflex.services.fixtures import five_bus

runner = CliRunner()


@pytest.fixture(scope="module")
def five_bus_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("instances") / "five_bus.json"
    dump_instance(five_bus(), path)
    return path


def invoke(*args):
    return runner.invoke(cli_app, [str(a) for a in args])


def _reported(text: str, label: str) -> float:
    match = re.search(rf"^{re.escape(label)}: (\S+)", text, re.MULTILINE)
    return float(match.group(1))


def test_equilibrium_report(five_bus_path, tmp_path):
    result = invoke("equilibrium", "--instance", five_bus_path, "--theta=-10,-20", "--out", tmp_path)

    assert result.exit_code == 0, result.output
    text = (tmp_path / "equilibrium.txt").read_text()
    assert _reported(text, "cost (quadratic)") == pytest.approx(767.24, abs=0.01)
    assert _reported(text, "cost (linearized)") == pytest.approx(768.42, abs=0.05)
    assert "user-3" in text and "[kW]" in text


def test_reports_are_deterministic(five_bus_path, tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    invoke("equilibrium", "--instance", five_bus_path, "--theta=-10,-20", "--out", first)
    invoke("equilibrium", "--instance", five_bus_path, "--theta=-10,-20", "--out", second)

    assert (first / "equilibrium.txt").read_bytes() == (second / "equilibrium.txt").read_bytes()


def test_simulate_writes_the_trace(five_bus_path, tmp_path):
    result = invoke("simulate", "--instance", five_bus_path, "--theta=-10,-20", "--out", tmp_path)

    assert result.exit_code == 0, result.output
    rows = list(csv.reader((tmp_path / "trace.csv").open()))
    assert rows[0][:2] == ["iteration", "change [kW]"]
    assert len(rows) > 1
    assert "best-response rounds" in (tmp_path / "equilibrium.txt").read_text()


def test_simulate_exit_code_when_not_converged(five_bus_path, tmp_path):
    result = invoke("simulate", "--instance", five_bus_path, "--theta=-10,-20", "--max-iter", 1, "--out", tmp_path)

    assert result.exit_code == 3
    assert "reason=NOT_CONVERGED" in result.output
    assert (tmp_path / "trace.csv").exists()


def test_avg_on_a_single_piece_toy(tmp_path):
    path = tmp_path / "toy.json"
    document = json.loads(dumps_instance(single_bus_market(theta_range=1.0)))
    # Two knots make the interpolant a single line over the box.
    document["analysis"]["segments"] = 2
    path.write_text(json.dumps(document))

    result = invoke("avg", "--instance", path, "--grid", 5, "--dump-mplp", "--out", tmp_path)

    assert result.exit_code == 0, result.output
    assert "pieces: 1" in (tmp_path / "pieces.txt").read_text()
    assert "regions: 1" in (tmp_path / "regions.txt").read_text()
    assert (tmp_path / "error_trace.csv").exists()
    assert (tmp_path / "grid.csv").exists()
    assert (tmp_path / "mplp.txt").exists()


def test_flexibility_on_the_toy_matches_the_grid_hull(tmp_path):
    path = tmp_path / "toy.json"
    dump_instance(single_bus_market(), path)

    result = invoke("flexibility", "--instance", path, "--out", tmp_path)

    assert result.exit_code == 0, result.output
    rows = list(csv.DictReader((tmp_path / "flexibility.csv").open()))
    assert [r["user"] for r in rows] == ["consumer"]
    assert rows[0]["lower [kW]"] == "-5.0000"
    assert rows[0]["upper [kW]"] == "5.0000"


def test_parse_error_exit_code(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{ not json")

    result = invoke("equilibrium", "--instance", path, "--out", tmp_path)

    assert result.exit_code == 4
    assert "reason=PARSE_ERROR" in result.output


def test_undecodable_file_exit_code(tmp_path):
    path = tmp_path / "bad.json"
    path.write_bytes(b'{"name": "\xff\xfe"}')

    result = invoke("avg", "--instance", path, "--out", tmp_path)

    assert result.exit_code == 4
    assert "reason=PARSE_ERROR" in result.output


def test_theta_outside_the_box_is_a_validation_error(five_bus_path, tmp_path):
    result = invoke("equilibrium", "--instance", five_bus_path, "--theta=100,0", "--out", tmp_path)

    assert result.exit_code == 4
    assert "reason=VALIDATION_ERROR" in result.output


def test_infeasible_box_exit_code(five_bus_path, tmp_path):
    document = json.loads(five_bus_path.read_text())
    for parameter in document["parameters"]:
        parameter["lower"] = -400.0
    path = tmp_path / "wide.json"
    path.write_text(json.dumps(document))

    result = invoke("avg", "--instance", path, "--out", tmp_path)

    assert result.exit_code == 2
    assert "reason=INFEASIBLE_PARAMETER" in result.output


def test_export_fixture(tmp_path):
    path = tmp_path / "feeder.json"
    result = invoke("export-fixture", "feeder-69", "--seed", 3, "--out", path)

    assert result.exit_code == 0, result.output
    assert json.loads(path.read_text())["name"] == "feeder-69-seed3"

    unknown = invoke("export-fixture", "nowhere", "--out", path)
    assert unknown.exit_code == 4
