import os

import pytest
import ujson

from mflab.cli import build_parser, main


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "site.yaml"
    path.write_text("lattice:\n  halfWidth: 0\nmodel:\n  preset: bcs\n  coupling: 2.0\nthermo:\n  beta: 2.0\n")
    return str(path)


def load(path):
    with open(path) as f:
        return ujson.load(f)


def test_validate_command(config_file, tmp_path):
    out = str(tmp_path / "out")
    assert main(["validate", "--config", config_file, "--out", out]) == 0
    assert load(os.path.join(out, "report.json"))["passed"]
    assert os.path.exists(os.path.join(out, "mflab.log"))


def test_invalid_override_writes_an_error_report(config_file, tmp_path):
    out = str(tmp_path / "out")
    assert main(["validate", "--config", config_file, "--out", out, "--set", "thermo.beta=-1"]) == 3
    error = load(os.path.join(out, "report.json"))["error"]
    assert error["code"] == "config-invalid"
    assert error["field"] == "thermo.betas"


def test_randomized_command_needs_a_seed(config_file, tmp_path):
    out = str(tmp_path / "out")
    assert main(["gap", "--config", config_file, "--out", out]) == 3
    assert load(os.path.join(out, "report.json"))["error"]["field"] == "seed"
    assert main(["gap", "--config", config_file, "--out", out, "--seed", "5"]) == 0


def test_workers_flag_becomes_an_override(mocker, config_file, tmp_path):
    execute = mocker.patch("mflab.cli.execute", return_value=0)
    main(["sweep", "--config", config_file, "--out", str(tmp_path), "--seed", "1", "-w", "3"])
    config = execute.call_args.args[0]
    assert config.sweep.workers == 3
    assert config.sweep.betas == (2.0,)


def test_parser_rejects_unknown_commands():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["relax", "--config", "x.yaml"])


def test_parallel_sweep_matches_the_in_process_sweep(config_file, tmp_path):
    tables = []
    for workers in ("1", "2"):
        out = str(tmp_path / f"workers-{workers}")
        assert main(["sweep", "--config", config_file, "--out", out, "--seed", "4", "-w", workers,
                     "--set", "sweep.betas=[0.5, 2.0]"]) == 0
        with open(os.path.join(out, "sweep.csv")) as f:
            tables.append(f.read())
    assert tables[0] == tables[1]
    assert len(tables[1].splitlines()) == 3
