import pytest

from mflab.exceptions import ConfigInvalid
from mflab.experiment import DEFAULT_TOLERANCES, apply_overrides, load_config, parse_config

BCS_CONFIG = """
lattice:
  halfWidths: [0, 1]
  spins: [up, down]
model:
  preset: bcs
  coupling: 2.0
  chemicalPotential: 0.5
thermo:
  betas: [2.0]
solver:
  restarts: 4
  maxIterations: 200
  grid:
    amplitudeStep: 0.05
flow:
  duration: 2.0
  times: [0.5, 1.0]
tolerances:
  kmsControl: 0.001
seed: 42
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "bcs.yaml"
    path.write_text(BCS_CONFIG)
    return str(path)


def test_load_camel_case_config(config_file):
    config = load_config(config_file, "gap")
    assert config.lattice.half_widths == (0, 1)
    assert config.betas == (2.0,)
    assert config.solver.restarts == 4
    assert config.solver.max_iterations == 200
    assert config.solver.grid.amplitude_step == 0.05
    assert config.tolerances["kms_control"] == 0.001
    assert config.tolerances["fixed_point"] == DEFAULT_TOLERANCES["fixed_point"]
    assert config.flow.grid() == [0.0, 0.5, 1.0, 2.0]
    assert config.seed == 42
    assert config.randomized
    assert config.build_model().size == 2
    assert [ctx.half_width for ctx in config.contexts] == [0, 1]


def test_overrides_and_seed_take_precedence(config_file, tmp_path):
    config = load_config(config_file, "gap", ["thermo.betas=[0.5, 1.0]", "solver.damping=0.3"], seed=7,
                         out=str(tmp_path / "out"))
    assert config.betas == (0.5, 1.0)
    assert config.solver.damping == 0.3
    assert config.seed == 7
    assert config.echo["seed"] == 7
    assert config.out == str(tmp_path / "out")


def test_overrides_create_missing_blocks():
    document = apply_overrides({}, ["kms.panelSize=5"])
    assert document == {"kms": {"panel_size": 5}}
    with pytest.raises(ConfigInvalid):
        apply_overrides({}, ["no-equals-sign"])


@pytest.mark.parametrize("document,command,path", [
    ({"thermo": {"betas": [0.0]}}, "validate", "thermo.betas"),
    ({"thermo": {"beta": 500.0}}, "validate", "thermo.betas"),
    ({}, "gap", "seed"),
    ({"model": {"terms": [{"interaction": {}}]}}, "validate", "model.terms[0].weight"),
    ({"model": {"preset": "density", "spin": "left"}}, "validate", "model"),
    ({"tolerances": {"everything": 1.0}}, "validate", "tolerances.everything"),
    ({"tolerances": {"kms": -1.0}}, "validate", "tolerances.kms"),
    ({"flow": {"initial": "thermal"}}, "flow", "flow.initial"),
    ({"flow": {"initial": "product"}}, "flow", "flow.amplitudes"),
    ({"flow": {"duration": 1.0, "times": [2.0]}}, "flow", "flow.times"),
    ({"solver": {"damping": 1.5}}, "validate", "solver.damping"),
    ({"lattice": {"spins": ["up", "up"]}}, "validate", "lattice.spins"),
    ({"lattice": "wide"}, "validate", "lattice"),
    ({"decay": {"epsilon": 0.0}}, "validate", "decay"),
])
def test_invalid_fields_are_reported_by_path(document, command, path):
    with pytest.raises(ConfigInvalid) as e:
        parse_config(document, command)
    assert e.value.field == path
    assert e.value.exit_status == 3


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigInvalid) as e:
        load_config(str(tmp_path / "missing.yaml"), "validate")
    assert e.value.field == "--config"
    broken = tmp_path / "broken.yaml"
    broken.write_text("lattice: [unclosed\n")
    with pytest.raises(ConfigInvalid):
        load_config(str(broken), "validate")
