import json

import pytest
import yaml
from typer.testing import CliRunner

from resetlab.cli import cli
from resetlab.env import FOUR_ROOMS_MAP
from resetlab.runlog import read_manifest

runner = CliRunner()


@pytest.fixture
def config_file(tiny_config_data, tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(tiny_config_data), encoding="utf-8")
    return path


def test_help():
    result = runner.invoke(cli, ["help"])
    assert result.exit_code == 0
    assert "dump-oracle" in result.stdout
    assert runner.invoke(cli, ["h"]).stdout == result.stdout


def test_dump_map():
    result = runner.invoke(cli, ["dump-map"])
    assert result.exit_code == 0
    assert result.stdout == FOUR_ROOMS_MAP


def test_dump_oracle(tmp_path):
    out = tmp_path / "oracle.csv"
    result = runner.invoke(cli, ["dump-oracle", "--gamma", "0.9", "-o", str(out)])
    assert result.exit_code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "cell_x,cell_y,goal_kind,dist,v_star,f_star"
    assert len(lines) == 1 + 68 * 2


def test_run_with_overrides(config_file, tmp_path):
    result = runner.invoke(
        cli,
        ["run", str(config_file), "--set", "switching.zeta=0.5", "--seed", "0"],
    )
    assert result.exit_code == 0, result.output
    run_dir = tmp_path / "runs" / "tiny" / "seed_0"
    assert str(run_dir) in result.stdout.splitlines()
    manifest = read_manifest(run_dir)
    assert manifest["status"] == "complete"
    assert manifest["config"]["switching"]["zeta"] == 0.5


def test_run_output_dir_option(config_file, tmp_path):
    elsewhere = str(tmp_path / "elsewhere")
    result = runner.invoke(cli, ["run", str(config_file), "-o", elsewhere])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "elsewhere" / "tiny" / "seed_0" / "manifest.json").is_file()


def test_invalid_config_exits_2(config_file):
    result = runner.invoke(cli, ["run", str(config_file), "--set", "agent.gamma=1.5"])
    assert result.exit_code == 2
    result = runner.invoke(cli, ["run", str(config_file), "--set", "agent.colour=blue"])
    assert result.exit_code == 2


def test_unreadable_config_exits_2(config_file, tmp_path):
    broken = tmp_path / "broken.yaml"
    broken.write_text("agent: {gamma: 0.9\n", encoding="utf-8")
    result = runner.invoke(cli, ["run", str(broken)])
    assert result.exit_code == 2
    assert "invalid YAML" in result.output

    result = runner.invoke(cli, ["run", str(tmp_path / "missing.yaml")])
    assert result.exit_code == 2
    assert "cannot read" in result.output

    result = runner.invoke(cli, ["sweep", str(tmp_path / "missing.yaml")])
    assert result.exit_code == 2

    result = runner.invoke(cli, ["run", str(config_file), "--set", "agent.gamma=[0.9"])
    assert result.exit_code == 2
    assert "Invalid overrides" in result.output


def test_heatmap_and_report(config_file, tmp_path):
    assert runner.invoke(cli, ["run", str(config_file)]).exit_code == 0
    run_dir = tmp_path / "runs" / "tiny" / "seed_0"
    svg = tmp_path / "hm.svg"
    result = runner.invoke(
        cli,
        ["heatmap", str(run_dir), "--step", "100", "--window", "300", "-o", str(svg)],
    )
    assert result.exit_code == 0, result.output
    summary = json.loads(result.stdout)
    assert summary["window"] == 300
    assert summary["svg"] == str(svg)
    assert svg.read_text().startswith("<svg")

    missing = runner.invoke(cli, ["heatmap", str(run_dir), "--step", "50"])
    assert missing.exit_code == 3

    result = runner.invoke(
        cli, ["report", str(run_dir), "-o", str(tmp_path / "report"), "--reps", "50"]
    )
    assert result.exit_code == 0, result.output
    assert (tmp_path / "report" / "aggregate.json").is_file()
