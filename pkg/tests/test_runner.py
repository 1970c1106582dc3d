import csv
import os
from queue import Queue

import numpy as np
import pytest
import ujson

from mflab.experiment import parse_config
from mflab.runner import _collect_results, execute, product_state, run, sweep_jobs
from mflab.thermogame import MinmaxReport
from mflab.worker import evaluate_cell

BCS = {"preset": "bcs", "coupling": 2.0, "chemical_potential": 0.5}


def configure(tmp_path, command, seed=3, **blocks):
    document = {"lattice": {"half_widths": [0]}, "model": BCS, "thermo": {"betas": [2.0]},
                "solver": {"restarts": 4}, "seed": seed}
    document.update(blocks)
    return parse_config(document, command, out=str(tmp_path / command))


def read_report(config):
    with open(os.path.join(config.out, "report.json")) as f:
        return ujson.load(f)


def read_table(config, name):
    with open(os.path.join(config.out, f"{name}.csv"), newline="") as f:
        return list(csv.DictReader(f))


def test_validate_writes_a_passing_report(tmp_path):
    config = configure(tmp_path, "validate")
    assert execute(config) == 0
    report = read_report(config)
    assert report["passed"]
    assert report["command"] == "validate"
    assert report["results"]["gauge_charges"] == [-2, 2]
    assert report["results"]["partners"] == [1, 0]
    assert report["tolerances"]["kms"] == 1e-9
    assert len(report["config_hash"]) == 40
    assert "numpy" in report["versions"]


def test_free_pressure_pipeline(tmp_path):
    config = configure(tmp_path, "pressure", model={"preset": "free"}, thermo={"betas": [0.5, 1.0]})
    assert execute(config) == 0
    rows = read_table(config, "pressure")
    assert len(rows) == 2
    for row in rows:
        assert float(row["pressure_lr"]) == pytest.approx(2 * np.log(2) / float(row["beta"]))


def test_gap_pipeline_on_one_site(tmp_path):
    config = configure(tmp_path, "gap")
    assert execute(config) == 0
    rows = read_table(config, "gap")
    assert [row["branch"] for row in rows] == ["ordered", "normal"]
    assert {"c0_re", "c0_im", "c1_re", "c1_im"} <= set(rows[0])
    summary = read_report(config)["results"]["windows"][0]
    assert summary["solutions"] == 2
    assert summary["minmax"] == pytest.approx(-float(rows[0]["game_value"]))


def test_failed_tolerance_exits_with_two(tmp_path):
    config = configure(tmp_path, "kms", tolerances={"kms_control": 1e6})
    assert execute(config) == 2
    report = read_report(config)
    assert not report["passed"]
    failed = [check["name"] for check in report["checks"] if not check["passed"]]
    assert failed and all("control" in name for name in failed)
    assert read_table(config, "kms_bogoliubov")


def test_numeric_failure_exits_with_four(tmp_path):
    config = configure(tmp_path, "validate", lattice={"half_widths": [7]})
    assert execute(config) == 4
    assert read_report(config)["error"]["code"] == "mode-cap-exceeded"


def test_gauge_twist_pipeline(tmp_path):
    config = configure(tmp_path, "demo-gauge-twist", model={}, lattice={"spins": ["s1", "s2", "s3", "s4"]})
    assert execute(config) == 0
    results = read_report(config)["results"]
    assert np.hypot(results["four_mode_value"]["re"], results["four_mode_value"]["im"]) == pytest.approx(0.25)
    assert results["twist_angles"] == pytest.approx([np.pi / 2, -np.pi / 2])


def test_flow_pipeline_from_a_product_state(tmp_path):
    flow = {"initial": "product", "amplitudes": [0.5, 0, 0, 0.8660254037844386], "duration": 1.0, "step": 1e-3,
            "observable": "a(0;down) a(0;up)"}
    config = configure(tmp_path, "flow", flow=flow)
    assert execute(config) == 0
    rows = read_table(config, "flow")
    assert [float(row["t"]) for row in rows] == [0.0, 1.0]
    assert "re_A" in rows[0]


def test_product_state_repeats_the_local_vector(ring):
    state = product_state(ring, [0.0, 1.0, 0.0, 0.0])
    assert state.dim == 64
    assert np.trace(state.density).real == pytest.approx(1.0)


def test_sweep_runs_cells_in_process(tmp_path):
    config = configure(tmp_path, "sweep", sweep={"betas": [0.5, 2.0], "scales": [1.0]})
    report = run(config)
    rows = report.tables["sweep"]
    assert [row["index"] for row in rows] == [0, 1]
    assert [row["branch"] for row in rows] == ["normal", "ordered"]
    for row in rows:
        assert row["minmax_residual"] == pytest.approx(abs(row["minmax"] - row["pressure_lr"]))


def test_sweep_cell_is_reproducible(tmp_path):
    config = configure(tmp_path, "sweep", sweep={"betas": [2.0]})
    job, = sweep_jobs(config)
    assert evaluate_cell(job) == evaluate_cell(job)


def test_sweep_cap(tmp_path, mocker):
    mocker.patch("mflab.runner.SWEEP_CELL_CAP", 1)
    config = configure(tmp_path, "sweep", sweep={"betas": [0.5, 2.0]})
    assert execute(config) == 4
    assert read_report(config)["error"]["code"] == "grid-too-large"


def test_sweep_with_one_cell_matches_the_gap_command(tmp_path):
    cell, = run(configure(tmp_path, "sweep", sweep={"betas": [2.0]})).tables["sweep"]
    gap = run(configure(tmp_path, "gap"))
    best = gap.tables["gap"][0]
    window = gap.results["windows"][0]
    assert cell["branch"] == best["branch"] == "ordered"
    assert cell["gap_0"] == pytest.approx(abs(best["c0"]), abs=1e-9)
    assert cell["pressure_lr"] == pytest.approx(window["pressure_lr"], abs=1e-14)
    assert cell["minmax"] == pytest.approx(window["minmax"], abs=1e-9)


def test_pairing_amplitude_grows_through_the_transition(tmp_path):
    config = configure(tmp_path, "sweep", sweep={"betas": [0.25, 0.5, 0.8, 1.5, 2.0, 3.0]})
    rows = run(config).tables["sweep"]
    gaps = [row["gap_0"] for row in rows]
    assert [row["branch"] for row in rows] == ["normal"] * 3 + ["ordered"] * 3
    assert gaps[0] <= 1e-6
    assert gaps[-1] > 0.1
    assert all(b >= a - 1e-9 for a, b in zip(gaps, gaps[1:]))


def test_lost_cells_are_reported_once_every_worker_has_exited(mocker):
    results_queue = Queue()
    results_queue.put({"status": "done", "row": {"index": 0}})
    exited = mocker.Mock(**{"is_alive.return_value": False})
    results, lost = _collect_results(results_queue, [exited], [{"index": 0}, {"index": 1}], poll=0.01)
    assert lost
    assert results[0]["row"] == {"index": 0}
    assert results[1]["status"] == "failed"
    assert (results[1]["index"], results[1]["error"]) == (1, "worker-lost")


TOY = {"preset": "density", "weight": 1.0, "field": -1.0}


def configure_toy(tmp_path):
    return configure(tmp_path, "pressure", model=TOY, lattice={"half_widths": [0, 1, 2], "spins": ["up"]},
                     thermo={"betas": [1.0]})


def test_pressure_checks_the_minmax_residual_trend(tmp_path):
    config = configure_toy(tmp_path)
    assert execute(config) == 0
    residuals = [float(row["residual"]) for row in read_table(config, "pressure")]
    assert residuals == pytest.approx([0.25, 0.0710, 0.0417], abs=1e-4)
    names = {check["name"] for check in read_report(config)["checks"]}
    assert {"minmax residual decreases with L beta=1.0", "scaled minmax residual spread beta=1.0"} <= names


def test_flat_residual_fails_the_scaling_check(tmp_path, mocker):
    mocker.patch("mflab.runner.minmax_pressure",
                 side_effect=lambda model, beta, ctx, *args: MinmaxReport(1.0, 1.0, 0.1, ctx.volume))
    config = configure_toy(tmp_path)
    assert execute(config) == 2
    failed = [check["name"] for check in read_report(config)["checks"] if not check["passed"]]
    assert failed == ["scaled minmax residual spread beta=1.0"]
