"""Experiment configuration: YAML documents, overrides and validation.

A config document has the blocks ``lattice``, ``decay``, ``model``, ``thermo``,
``solver``, ``kms``, ``flow``, ``sweep``, ``tolerances`` and ``run`` plus an
optional top-level ``seed``. Keys may be written in camelCase or snake_case.
"""
import logging
from copy import deepcopy
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import humps
import numpy as np
import yaml

from .car import FockContext, build_fock_context
from .config import (BETA_CAP, DAMPING, FIXED_POINT_TOLERANCE, MAX_ITERATIONS, OUTPUT_PATH, RESTARTS,
                     TRACE_DRIFT_TOLERANCE, WORKERS)
from .definitions import parse_model
from .exceptions import ConfigInvalid, MflabError
from .interactions import DecayFunction
from .longrange import LongRangeModel
from .thermogame import GridSpec

logger = logging.getLogger(__name__)

COMMANDS = ("pressure", "gap", "game-surface", "kms", "modular", "flow", "stationarity", "limit-trend",
            "ergodicity", "demo-gauge-twist", "sweep", "validate")
RANDOMIZED = {"pressure", "gap", "game-surface", "kms", "modular", "stationarity", "sweep"}

DEFAULT_TOLERANCES = {
    "fixed_point": FIXED_POINT_TOLERANCE,
    "kms": 1e-9,
    "kms_smeared": 1e-9,
    "kms_control": 1e-2,
    "modular": 1e-8,
    "variational": 1e-10,
    "oracle_value": 1e-3,
    "stationarity": 1e-6,
    "energy_drift": 1e-8,
    "trace_drift": TRACE_DRIFT_TOLERANCE,
    "trend": 1e-8,
    "residual_spread": 3.0,
    "gauge_twist": 1e-12,
}


@dataclass
class LatticeBlock:
    dimension: int = 1
    half_widths: tuple[int, ...] = (0,)
    spins: tuple[str, ...] = ("up", "down")

    def contexts(self) -> list[FockContext]:
        return [build_fock_context(self.dimension, half_width, self.spins) for half_width in self.half_widths]


@dataclass
class SolverBlock:
    damping: float = DAMPING
    restarts: int = RESTARTS
    max_iterations: int = MAX_ITERATIONS
    grid: GridSpec = field(default_factory=GridSpec)


@dataclass
class KmsBlock:
    panel_size: int = 20
    sigma: float = 1.0
    times: tuple[float, ...] = (0.1, 1.0)


@dataclass
class FlowBlock:
    """Initial data and integration settings for the dynamics commands.

    ``initial`` is ``product`` (the same local vector ``amplitudes`` on every site),
    ``gibbs`` (Gibbs state of the approximating Hamiltonian at ``coefficients``)
    or ``tracial``.
    """
    duration: float = 1.0
    step: float = 1e-2
    times: tuple[float, ...] = ()
    observable: str = ""
    initial: str = "tracial"
    amplitudes: tuple[complex, ...] = ()
    coefficients: tuple[complex, ...] = ()
    ell: int = 0

    def grid(self) -> list[float]:
        return sorted({0.0, self.duration, *self.times})


@dataclass
class SweepBlock:
    betas: tuple[float, ...] = ()
    scales: tuple[float, ...] = (1.0,)
    workers: int = WORKERS


@dataclass
class ExperimentConfig:
    command: str
    lattice: LatticeBlock
    decay: DecayFunction
    model_document: dict
    betas: tuple[float, ...]
    solver: SolverBlock
    kms: KmsBlock
    flow: FlowBlock
    sweep: SweepBlock
    tolerances: dict
    seed: Optional[int]
    out: str
    echo: dict

    @property
    def contexts(self) -> list[FockContext]:
        return self.lattice.contexts()

    def build_model(self, scale: float = 1.0) -> LongRangeModel:
        model = build_model(self.model_document, self.lattice, self.decay)
        return model.with_weights(scale) if scale != 1.0 else model

    @property
    def randomized(self) -> bool:
        return self.command in RANDOMIZED


def build_model(document: dict, lattice: LatticeBlock, decay: DecayFunction) -> LongRangeModel:
    """Parse the model block and check that it only uses the lattice's spins.

    Raises:
        ConfigInvalid: With a ``model.`` prefixed path.
    """
    try:
        model = parse_model(document, lattice.dimension, lattice.spins, decay)
    except ConfigInvalid as e:
        raise ConfigInvalid(f"model.{e.field}" if e.field else "model", e.message) from None
    except MflabError as e:
        raise ConfigInvalid("model", str(e)) from None
    used = set(model.base.spins).union(*(term.interaction.spins for term in model.terms))
    unknown = used - set(lattice.spins)
    if unknown:
        raise ConfigInvalid("model", f"spins {sorted(unknown)} are not in lattice.spins {list(lattice.spins)}")
    return model


def _set_path(document: dict, path: str, value: Any) -> None:
    keys = [humps.decamelize(key) for key in path.split(".")]
    node = document
    for key in keys[:-1]:
        child = node.get(key)
        if not isinstance(child, dict):
            child = node[key] = {}
        node = child
    node[keys[-1]] = value


def apply_overrides(document: dict, overrides: Sequence[str]) -> dict:
    """Apply ``a.b=value`` overrides; values are parsed as YAML scalars or flow collections.

    Raises:
        ConfigInvalid: If an override is not of the form key=value.
    """
    document = deepcopy(document)
    for override in overrides:
        path, sep, raw = override.partition("=")
        if not sep or not path.strip():
            raise ConfigInvalid("--set", f"expected key=value, got {override!r}")
        try:
            value = yaml.safe_load(raw) if raw.strip() else ""
        except yaml.YAMLError as e:
            raise ConfigInvalid(path.strip(), f"cannot parse override value: {e}") from None
        _set_path(document, path.strip(), value)
    return document


def _block(document: dict, name: str) -> dict:
    block = document.get(name) or {}
    if not isinstance(block, dict):
        raise ConfigInvalid(name, "must be a mapping")
    return block


def _number(block: dict, path: str, key: str, default, kind=float, minimum=None, exclusive=False):
    value = block.get(key, default)
    try:
        value = kind(value)
    except (TypeError, ValueError):
        raise ConfigInvalid(f"{path}.{key}", f"expected {kind.__name__}, got {value!r}") from None
    if kind is float and not np.isfinite(value):
        raise ConfigInvalid(f"{path}.{key}", f"must be finite, got {value}")
    if minimum is not None and (value <= minimum if exclusive else value < minimum):
        raise ConfigInvalid(f"{path}.{key}", f"must be {'>' if exclusive else '>='} {minimum}, got {value}")
    return value


def _list(block: dict, path: str, key: str, default, kind=float) -> tuple:
    value = block.get(key, default)
    if value is None:
        return tuple(default)
    values = value if isinstance(value, (list, tuple)) else [value]
    try:
        return tuple(kind(item) for item in values)
    except (TypeError, ValueError):
        raise ConfigInvalid(f"{path}.{key}", f"expected a list of {kind.__name__}, got {value!r}") from None


def _complex(value: Any) -> complex:
    return complex(str(value).replace(" ", "")) if isinstance(value, str) else complex(value)


def _lattice(document: dict) -> LatticeBlock:
    block = _block(document, "lattice")
    dimension = _number(block, "lattice", "dimension", 1, int, minimum=1)
    if "half_widths" in block:
        half_widths = _list(block, "lattice", "half_widths", (0,), int)
    else:
        half_widths = (_number(block, "lattice", "half_width", 0, int),)
    if not half_widths or min(half_widths) < 0:
        raise ConfigInvalid("lattice.half_widths", f"must be non-negative integers, got {list(half_widths)}")
    spins = _list(block, "lattice", "spins", ("up", "down"), str)
    if not spins or len(set(spins)) != len(spins):
        raise ConfigInvalid("lattice.spins", f"must be distinct and non-empty, got {list(spins)}")
    return LatticeBlock(dimension, tuple(sorted(set(half_widths))), spins)


def _betas(document: dict) -> tuple[float, ...]:
    block = _block(document, "thermo")
    betas = _list(block, "thermo", "betas", (), float) if "betas" in block else (
        _number(block, "thermo", "beta", 1.0, float),)
    for beta in betas:
        if not 0 < beta <= BETA_CAP:
            raise ConfigInvalid("thermo.betas", f"inverse temperatures must lie in (0, {BETA_CAP}], got {beta}")
    return betas


def _solver(document: dict) -> SolverBlock:
    block = _block(document, "solver")
    damping = _number(block, "solver", "damping", DAMPING, minimum=0.0, exclusive=True)
    if damping > 1:
        raise ConfigInvalid("solver.damping", f"must lie in (0, 1], got {damping}")
    grid = block.get("grid") or {}
    if not isinstance(grid, dict):
        raise ConfigInvalid("solver.grid", "must be a mapping")
    spec = GridSpec(_number(grid, "solver.grid", "amplitude_max", 2.0, minimum=0.0, exclusive=True),
                    _number(grid, "solver.grid", "amplitude_step", 1e-2, minimum=0.0, exclusive=True),
                    _number(grid, "solver.grid", "phases", 1, int, minimum=1))
    return SolverBlock(damping, _number(block, "solver", "restarts", RESTARTS, int, minimum=1),
                       _number(block, "solver", "max_iterations", MAX_ITERATIONS, int, minimum=1), spec)


def _flow(document: dict) -> FlowBlock:
    block = _block(document, "flow")
    duration = _number(block, "flow", "duration", 1.0, minimum=0.0)
    step = _number(block, "flow", "step", 1e-2, minimum=0.0, exclusive=True)
    times = _list(block, "flow", "times", (), float)
    if any(t < 0 or t > duration for t in times):
        raise ConfigInvalid("flow.times", f"snapshot times must lie in [0, {duration}]")
    initial = str(block.get("initial", "tracial"))
    if initial not in ("product", "gibbs", "tracial"):
        raise ConfigInvalid("flow.initial", f"expected product, gibbs or tracial, got {initial!r}")
    amplitudes = _list(block, "flow", "amplitudes", (), _complex)
    if initial == "product" and not amplitudes:
        raise ConfigInvalid("flow.amplitudes", "a product initial state needs local amplitudes")
    return FlowBlock(duration, step, times, str(block.get("observable", "")), initial, amplitudes,
                     _list(block, "flow", "coefficients", (), _complex),
                     _number(block, "flow", "ell", 0, int, minimum=0))


def _tolerances(document: dict) -> dict:
    block = _block(document, "tolerances")
    tolerances = dict(DEFAULT_TOLERANCES)
    for key in block:
        if key not in tolerances:
            raise ConfigInvalid(f"tolerances.{key}", f"unknown tolerance, expected one of {sorted(tolerances)}")
        tolerances[key] = _number(block, "tolerances", key, None, minimum=0.0, exclusive=True)
    return tolerances


def parse_config(document: dict, command: str, seed: Optional[int] = None, out: Optional[str] = None) -> ExperimentConfig:
    """Validate a decamelized document into an ExperimentConfig.

    Raises:
        ConfigInvalid: With the dotted path of the first offending field.
    """
    if not isinstance(document, dict):
        raise ConfigInvalid("", "config must be a mapping")
    if command not in COMMANDS:
        raise ConfigInvalid("command", f"unknown command {command!r}")
    lattice = _lattice(document)
    block = _block(document, "decay")
    try:
        decay = DecayFunction(_number(block, "decay", "varsigma", 0.0), _number(block, "decay", "epsilon", 1.0),
                              lattice.dimension)
    except ValueError as e:
        raise ConfigInvalid("decay", str(e)) from None
    model_document = _block(document, "model")
    build_model(model_document, lattice, decay)

    kms = _block(document, "kms")
    sweep = _block(document, "sweep")
    run = _block(document, "run")
    if seed is None and document.get("seed") is not None:
        try:
            seed = int(document["seed"])
        except (TypeError, ValueError):
            raise ConfigInvalid("seed", f"expected a non-negative integer, got {document['seed']!r}") from None
    if seed is not None and seed < 0:
        raise ConfigInvalid("seed", f"expected a non-negative integer, got {seed}")
    if command in RANDOMIZED and seed is None:
        raise ConfigInvalid("seed", f"command {command!r} draws random numbers and needs a seed")
    betas = _betas(document)
    echo = deepcopy(document)
    echo["seed"] = seed
    return ExperimentConfig(
        command=command,
        lattice=lattice,
        decay=decay,
        model_document=model_document,
        betas=betas,
        solver=_solver(document),
        kms=KmsBlock(_number(kms, "kms", "panel_size", 20, int, minimum=1),
                     _number(kms, "kms", "sigma", 1.0, minimum=0.0, exclusive=True),
                     _list(kms, "kms", "times", (0.1, 1.0), float)),
        flow=_flow(document),
        sweep=SweepBlock(_list(sweep, "sweep", "betas", betas, float), _list(sweep, "sweep", "scales", (1.0,), float),
                         _number(sweep, "sweep", "workers", WORKERS, int, minimum=1)),
        tolerances=_tolerances(document),
        seed=seed,
        out=str(out or run.get("out") or OUTPUT_PATH),
        echo=echo,
    )


def load_config(path: str, command: str, overrides: Sequence[str] = (), seed: Optional[int] = None,
                out: Optional[str] = None) -> ExperimentConfig:
    """Read a YAML config, normalize its keys, apply overrides and validate.

    Raises:
        ConfigInvalid: If the file cannot be read or parsed, or a field is invalid.
    """
    try:
        with open(path) as f:
            document = yaml.safe_load(f)
    except OSError as e:
        raise ConfigInvalid("--config", f"cannot read {path}: {e}") from None
    except yaml.YAMLError as e:
        raise ConfigInvalid("--config", f"cannot parse {path}: {e}") from None
    document = humps.decamelize(document or {})
    document = apply_overrides(document, overrides)
    logger.debug(f"Loaded config {path} with {len(overrides)} overrides")
    return parse_config(document, command, seed, out)
