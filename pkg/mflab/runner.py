"""Command pipelines, reports and exit statuses.

Every command fills a Report with checks (asserted tolerances), results and
tables. ``execute`` writes ``report.json`` plus one CSV per table into the
output directory and returns 0 when every check passes, 2 on a tolerance
failure, 3 on a configuration error and 4 on a numeric failure.
"""
import logging
import os
from dataclasses import dataclass, field
from itertools import product
from multiprocessing import JoinableQueue, Process, Queue
from queue import Empty
from typing import Callable, Optional

import numpy as np

from .car import FockContext, build_fock_context
from .config import DENSE_MODULAR_LIMIT, SWEEP_CELL_CAP, VARIATIONAL_SAMPLES, WORKER_POLL_SECONDS
from .definitions import format_model, parse_monomial
from .dynamics import limit_agreement, selfconsistent_flow, stationarity_check
from .exceptions import ConfigInvalid, GridTooLarge, MflabError, ModeOutOfRange, MonomialSyntaxError, WindowTooSmall
from .experiment import ExperimentConfig
from .interactions import interaction_norm, monomial_operator
from .longrange import LongRangeModel, hahn_split, long_range_hamiltonian, lr_variational_check, pressure_lr
from .serializer import write_report, write_table
from .thermogame import (approximating_hamiltonian, bogoliubov_residual, brute_force_game_oracle, conservative_set,
                         constant_starts, gap_fixed_point, gauge_charges, is_gauge_symmetric, minmax_pressure,
                         selfconsistent_kms_check)
from .thermostate import (State, ergodicity_gap, gauge_twist_demo, gibbs, gibbs_variational_check,
                          kms_boundary_residual, kms_smeared_residual, modular_data, pure_state, random_even_panel,
                          random_state, tracial_state)
from .utils import config_hash, derive_rng, derive_seed, versions
from .worker import evaluate_cell, sweep_worker

logger = logging.getLogger(__name__)

TOLERANCE_FAILURE = 2


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    relation: str
    passed: bool


@dataclass
class Report:
    command: str
    checks: list[Check] = field(default_factory=list)
    results: dict = field(default_factory=dict)
    tables: dict[str, list[dict]] = field(default_factory=dict)

    def check(self, name: str, value: float, tolerance: float, above: bool = False) -> bool:
        """Record value <= tolerance (or value > tolerance with ``above``)."""
        value = float(value)
        passed = bool(value > tolerance) if above else bool(value <= tolerance)
        self.checks.append(Check(name, value, tolerance, ">" if above else "<=", passed))
        if not passed:
            logger.warning(f"Check failed: {name} = {value:.6e} (needs {'>' if above else '<='} {tolerance:.1e})")
        return passed

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


def _grid(config: ExperimentConfig) -> list[tuple[FockContext, float]]:
    return [(ctx, beta) for ctx in config.contexts for beta in config.betas]


def _seed(config: ExperimentConfig, *stream) -> int:
    return derive_seed(config.seed, *stream)


def product_state(ctx: FockContext, amplitudes) -> State:
    """The pure product state with the same local vector on every site.

    Raises:
        ConfigInvalid: If the local vector does not have 2^|S| entries.
    """
    local = np.asarray(amplitudes, dtype=complex)
    if local.shape != (2 ** len(ctx.spins),):
        raise ConfigInvalid("flow.amplitudes", f"expected {2 ** len(ctx.spins)} local amplitudes, got {local.size}")
    vector = np.ones(1, dtype=complex)
    for _ in ctx.sites:
        vector = np.kron(vector, local)
    return pure_state(vector)


def initial_state(config: ExperimentConfig, model: LongRangeModel, ctx: FockContext) -> State:
    flow = config.flow
    if flow.initial == "product":
        return product_state(ctx, flow.amplitudes)
    if flow.initial == "gibbs":
        coefficients = flow.coefficients or (0.0,) * model.size
        if len(coefficients) != model.size:
            raise ConfigInvalid("flow.coefficients", f"expected {model.size} coefficients, got {len(coefficients)}")
        return gibbs(approximating_hamiltonian(model, coefficients, ctx), config.betas[0])
    return tracial_state(ctx)


def observable(config: ExperimentConfig, ctx: FockContext):
    """The configured observable monomial, placed at its own offsets.

    Raises:
        ConfigInvalid: If no observable is configured or it cannot be parsed.
        WindowTooSmall: If it does not fit in the window.
    """
    if not config.flow.observable:
        raise ConfigInvalid("flow.observable", f"command {config.command!r} needs an observable monomial")
    try:
        monomial = parse_monomial(config.flow.observable, ctx.dimension)
    except MonomialSyntaxError as e:
        raise ConfigInvalid("flow.observable", str(e)) from None
    try:
        return monomial_operator(ctx, monomial)
    except ModeOutOfRange as e:
        raise WindowTooSmall(f"Observable {config.flow.observable!r} does not fit in L={ctx.half_width}: {e}") from None


def run_validate(config: ExperimentConfig, report: Report) -> None:
    model = config.build_model()
    split = hahn_split(model)
    report.results.update(
        model=format_model(model),
        partners=list(model.partners),
        norm=model.norm,
        base_norm=interaction_norm(model.base, model.decay),
        repulsive=list(split.repulsive),
        attractive=list(split.attractive),
        gauge_symmetric=is_gauge_symmetric(model),
        gauge_charges=[charge for charge in gauge_charges(model)],
        range=max([model.base.range] + [term.interaction.range for term in model.terms]),
    )
    for ctx in config.contexts:
        report.check(f"range fits L={ctx.half_width}", report.results["range"], ctx.extent)


def run_pressure(config: ExperimentConfig, report: Report) -> None:
    model = config.build_model()
    rows = []
    for ctx, beta in _grid(config):
        rng = derive_rng(config.seed, "pressure", ctx.half_width, beta)
        row = {"half_width": ctx.half_width, "beta": beta, "volume": ctx.volume,
               "pressure_lr": pressure_lr(model, beta, ctx)}
        if model.terms:
            minmax = minmax_pressure(model, beta, ctx, config.solver.restarts,
                                     _seed(config, "minmax", ctx.half_width, beta))
            row.update(minmax=minmax.minmax, residual=minmax.residual, scaled_residual=minmax.residual * ctx.volume)
            variational = lr_variational_check(model, beta, ctx, VARIATIONAL_SAMPLES, rng)
        else:
            variational = gibbs_variational_check(model.base, beta, ctx, VARIATIONAL_SAMPLES, rng)
        row.update(identity_residual=variational.identity_residual, violations=variational.violations,
                   min_margin=variational.min_margin)
        report.check(f"variational identity L={ctx.half_width} beta={beta}", variational.identity_residual,
                     config.tolerances["variational"])
        report.check(f"variational violations L={ctx.half_width} beta={beta}", variational.violations, 0)
        rows.append(row)
    if model.terms:
        for beta in config.betas:
            _check_residual_trend(report, sorted((row for row in rows if row["beta"] == beta),
                                                 key=lambda row: row["half_width"]), beta, config.tolerances)
    report.tables["pressure"] = rows


def _check_residual_trend(report: Report, rows: list[dict], beta: float, tolerances: dict) -> None:
    """The min-max residual shrinks with L while residual * |Lambda_L| stays within a bounded spread."""
    if len(rows) < 2:
        return
    residuals = [row["residual"] for row in rows]
    scaled = [row["scaled_residual"] for row in rows]
    report.check(f"minmax residual decreases with L beta={beta}",
                 max(b - a for a, b in zip(residuals, residuals[1:])), tolerances["trend"])
    if max(scaled) > tolerances["trend"]:
        report.check(f"scaled minmax residual spread beta={beta}",
                     max(scaled) / max(min(scaled), np.finfo(float).tiny), tolerances["residual_spread"])


def _solution_row(ctx: FockContext, beta: float, solution) -> dict:
    row = {"half_width": ctx.half_width, "beta": beta, "rank": solution.rank, "branch": solution.branch,
           "game_value": solution.game_value, "pressure": solution.pressure, "residual": solution.residual,
           "iterations": solution.trace.iterations, "start": solution.trace.start}
    for k, value in enumerate(solution.gap.c):
        row[f"c{k}"] = complex(value)
    return row


def _solve(config: ExperimentConfig, model: LongRangeModel, ctx: FockContext, beta: float) -> list:
    return gap_fixed_point(model, beta, ctx, config.solver.restarts, config.solver.damping,
                           config.tolerances["fixed_point"], config.solver.max_iterations,
                           _seed(config, "gap", ctx.half_width, beta), extra_starts=constant_starts(model))


def run_gap(config: ExperimentConfig, report: Report) -> None:
    model = config.build_model()
    rows, summary = [], []
    for ctx, beta in _grid(config):
        solutions = _solve(config, model, ctx, beta)
        report.check(f"solutions found L={ctx.half_width} beta={beta}", len(solutions), 0, above=True)
        if not solutions:
            continue
        report.check(f"gap residual L={ctx.half_width} beta={beta}", max(s.residual for s in solutions),
                     config.tolerances["fixed_point"])
        rows.extend(_solution_row(ctx, beta, solution) for solution in solutions)
        entry = {"half_width": ctx.half_width, "beta": beta, "solutions": len(solutions),
                 "pressure_lr": pressure_lr(model, beta, ctx)}
        if model.terms:
            strategies = conservative_set(model, beta, ctx, config.solver.restarts,
                                          _seed(config, "gap", ctx.half_width, beta), solutions=solutions)
            entry.update(minmax=strategies.pressure, conservative=[s.d_minus for s in strategies.strategies])
        summary.append(entry)
    report.tables["gap"] = rows
    report.results["windows"] = summary


def run_game_surface(config: ExperimentConfig, report: Report) -> None:
    model = config.build_model()
    rows, summary = [], []
    for ctx, beta in _grid(config):
        oracle = brute_force_game_oracle(model, beta, ctx, config.solver.grid)
        strategies = conservative_set(model, beta, ctx, config.solver.restarts,
                                      _seed(config, "game", ctx.half_width, beta))
        difference = abs(oracle.minmax - strategies.value)
        report.check(f"oracle minmax L={ctx.half_width} beta={beta}", difference, config.tolerances["oracle_value"])
        distance = min((float(np.linalg.norm(np.abs(oracle.argmin) - np.abs(_embed(model, s.d_minus))))
                        for s in strategies.strategies), default=0.0)
        summary.append({"half_width": ctx.half_width, "beta": beta, "minmax": oracle.minmax, "maxmin": oracle.maxmin,
                        "conservative_value": strategies.value, "difference": difference,
                        "argmin": oracle.argmin, "argmin_distance": distance})
        for i, low in enumerate(oracle.attractive_cells):
            for j, high in enumerate(oracle.repulsive_cells):
                row = {"half_width": ctx.half_width, "beta": beta, "i": i, "j": j}
                for k, value in enumerate(low + high):
                    row[f"c{k}"] = complex(value)
                row["value"] = float(oracle.surface[i, j])
                rows.append(row)
    report.tables["game_surface"] = rows
    report.results["windows"] = summary


def _embed(model: LongRangeModel, d_minus: np.ndarray) -> np.ndarray:
    full = np.zeros(model.size, dtype=complex)
    full[list(hahn_split(model).attractive)] = d_minus
    return full


def run_kms(config: ExperimentConfig, report: Report) -> None:
    model = config.build_model()
    rows, conjunction = [], []
    for ctx, beta in _grid(config):
        rng = derive_rng(config.seed, "kms", ctx.half_width, beta)
        hamiltonian = long_range_hamiltonian(model, ctx)
        state = gibbs(hamiltonian, beta)
        control = tracial_state(ctx)
        panel = random_even_panel(ctx, rng, config.kms.panel_size)
        boundary = max(kms_boundary_residual(state, hamiltonian, beta, a, b) for a, b in panel)
        smeared = max(kms_smeared_residual(state, hamiltonian, beta, a, b, config.kms.sigma) for a, b in panel)
        negative = max(kms_boundary_residual(control, hamiltonian, beta, a, b, warn=False) for a, b in panel)
        report.check(f"kms boundary L={ctx.half_width} beta={beta}", boundary, config.tolerances["kms"])
        report.check(f"kms smeared L={ctx.half_width} beta={beta}", smeared, config.tolerances["kms_smeared"])
        report.check(f"kms tracial control L={ctx.half_width} beta={beta}", negative,
                     config.tolerances["kms_control"], above=True)
        rows.append({"half_width": ctx.half_width, "beta": beta, "boundary": boundary, "smeared": smeared,
                     "tracial_control": negative})

        if not model.terms:
            continue
        solutions = _solve(config, model, ctx, beta)
        strategies = conservative_set(model, beta, ctx, config.solver.restarts,
                                      _seed(config, "gap", ctx.half_width, beta), solutions=solutions)
        for solution in solutions:
            omega = gibbs(approximating_hamiltonian(model, solution.gap.c, ctx), beta)
            kms = selfconsistent_kms_check(omega, model, beta, ctx, rng, config.kms.panel_size)
            bogoliubov = bogoliubov_residual(omega, model, beta, ctx, strategies)
            conservative = bogoliubov <= 10 * config.tolerances["fixed_point"]
            conjunction.append({"half_width": ctx.half_width, "beta": beta, "rank": solution.rank,
                                "branch": solution.branch, "kms_residual": kms.max_residual,
                                "bogoliubov_residual": bogoliubov, "conservative": conservative})
            label = f"L={ctx.half_width} beta={beta} rank={solution.rank}"
            report.check(f"self-consistent kms {label}", kms.max_residual, config.tolerances["kms"])
            if conservative:
                report.check(f"bogoliubov {label}", bogoliubov, 10 * config.tolerances["fixed_point"])
        mixed = random_state(ctx, rng, even=True, weight=0.9)
        negative = selfconsistent_kms_check(mixed, model, beta, ctx, rng, config.kms.panel_size)
        report.check(f"self-consistent kms random-state control L={ctx.half_width} beta={beta}", negative.max_residual,
                     config.tolerances["kms_control"], above=True)
    report.tables["kms"] = rows
    if conjunction:
        report.tables["kms_bogoliubov"] = conjunction


def run_modular(config: ExperimentConfig, report: Report) -> None:
    model = config.build_model()
    rows = []
    tolerance = config.tolerances["modular"]
    for ctx, beta in _grid(config):
        rng = derive_rng(config.seed, "modular", ctx.half_width, beta)
        hamiltonian = long_range_hamiltonian(model, ctx)
        data = modular_data(gibbs(hamiltonian, beta))
        (a, b), = random_even_panel(ctx, rng, 1)
        row = {"half_width": ctx.half_width, "beta": beta, "rank": data.rank(),
               "flow": max(data.flow_residual(hamiltonian, beta, a, t) for t in config.kms.times),
               "panel": data.panel_residual(a, b),
               "conjugation": data.conjugation_residual(rng),
               "commutant": data.commutant_residual(a, b)}
        if ctx.fock_dim <= DENSE_MODULAR_LIMIT:
            tomita = data.tomita_residuals()
            row.update(tomita_delta=tomita["delta"], tomita_conjugation=tomita["conjugation"])
        for key in ("flow", "panel", "conjugation", "commutant", "tomita_delta", "tomita_conjugation"):
            if key in row:
                report.check(f"modular {key} L={ctx.half_width} beta={beta}", row[key], tolerance)
        report.check(f"cyclic and separating L={ctx.half_width} beta={beta}", ctx.fock_dim - row["rank"], 0)
        rows.append(row)
    report.tables["modular"] = rows


def run_flow(config: ExperimentConfig, report: Report) -> None:
    model = config.build_model()
    rows = []
    for ctx in config.contexts:
        observables = {"A": observable(config, ctx)} if config.flow.observable else {}
        trajectory = selfconsistent_flow(model, ctx, initial_state(config, model, ctx), config.flow.duration,
                                         config.flow.step, config.flow.grid(), observables)
        for row in trajectory.rows():
            rows.append({"half_width": ctx.half_width, **row})
        report.check(f"energy drift L={ctx.half_width}", trajectory.energy_drift, config.tolerances["energy_drift"])
        report.check(f"trace drift L={ctx.half_width}", float(np.max(trajectory.trace_drift)),
                     config.tolerances["trace_drift"])
        report.results[f"L={ctx.half_width}"] = {"repairs": trajectory.repairs, "halvings": trajectory.halvings,
                                                 "method": trajectory.method, "step": trajectory.step}
    report.tables["flow"] = rows


def run_stationarity(config: ExperimentConfig, report: Report) -> None:
    model = config.build_model()
    beta = config.betas[0]
    rows = []
    for ctx in config.contexts:
        solutions = _solve(config, model, ctx, beta)
        if not solutions:
            report.check(f"solutions found L={ctx.half_width}", 0, 0, above=True)
            continue
        result = stationarity_check(model, beta, ctx, solutions[0], config.flow.duration, config.flow.step,
                                    config.flow.grid())
        rows.append({"half_width": ctx.half_width, "beta": beta, "branch": solutions[0].branch,
                     "selfconsistent_deviation": result.selfconsistent_deviation,
                     "exact_deviation": result.exact_deviation})
        report.check(f"self-consistent stationarity L={ctx.half_width}", result.selfconsistent_deviation,
                     config.tolerances["stationarity"])
    trend = [row["exact_deviation"] for row in rows if row["half_width"] >= 1]
    if model.terms and len(trend) >= 2:
        report.check("exact deviation decreases with L", max(b - a for a, b in zip(trend, trend[1:])), 0.0)
    report.tables["stationarity"] = rows


def run_limit_trend(config: ExperimentConfig, report: Report) -> None:
    model = config.build_model()
    rows = limit_agreement(model, config.contexts, lambda ctx: initial_state(config, model, ctx),
                           lambda ctx: observable(config, ctx), config.flow.duration, config.flow.step)
    deviations = [row["deviation"] for row in rows]
    if len(deviations) >= 2:
        report.check("deviation non-increasing in L", max(b - a for a, b in zip(deviations, deviations[1:])),
                     config.tolerances["trend"])
    report.tables["limit_trend"] = rows


def run_ergodicity(config: ExperimentConfig, report: Report) -> None:
    model = config.build_model()
    rows = []
    for ctx in config.contexts:
        state = initial_state(config, model, ctx)
        operator = observable(config, ctx)
        gaps = [ergodicity_gap(ctx, state, operator, ell) for ell in range(ctx.half_width + 1)]
        rows.extend({"half_width": ctx.half_width, "ell": ell, "gap": gap} for ell, gap in enumerate(gaps))
        if ctx.half_width >= 2 and gaps[0] > 0:
            report.check(f"ergodicity gap ratio L={ctx.half_width}", gaps[2] / gaps[0], 0.5)
    report.tables["ergodicity"] = rows


def run_gauge_twist(config: ExperimentConfig, report: Report) -> None:
    ctx = build_fock_context(config.lattice.dimension, 0, config.lattice.spins)
    demo = gauge_twist_demo(ctx)
    report.check("twisted states flip the four-mode value", demo.sign_residual, config.tolerances["gauge_twist"])
    report.check("four-mode value is nonzero", abs(demo.four_mode_value), config.tolerances["gauge_twist"], above=True)
    report.check("twisted states differ on the two-mode monomial", demo.separation,
                 config.tolerances["gauge_twist"], above=True)
    report.results.update(four_mode_value=demo.four_mode_value, twist_phases=list(demo.twist_phases),
                          twist_angles=[float(np.angle(phase)) for phase in demo.twist_phases])
    report.tables["gauge_twist"] = demo.table


def sweep_jobs(config: ExperimentConfig) -> list[dict]:
    """One job per (beta, scale, half-width) cell, in row order.

    Raises:
        GridTooLarge: If the sweep has more cells than the cap.
    """
    cells = list(product(config.sweep.betas, config.sweep.scales, config.lattice.half_widths))
    if len(cells) > SWEEP_CELL_CAP:
        raise GridTooLarge(len(cells), SWEEP_CELL_CAP)
    shared = {
        "model": config.model_document,
        "lattice": {"dimension": config.lattice.dimension, "spins": list(config.lattice.spins)},
        "decay": {"varsigma": config.decay.varsigma, "epsilon": config.decay.epsilon},
        "solver": {"restarts": config.solver.restarts, "damping": config.solver.damping,
                   "tolerance": config.tolerances["fixed_point"], "max_iterations": config.solver.max_iterations},
        "seed": config.seed,
    }
    return [{"index": index, "beta": beta, "scale": scale, "half_width": half_width, **shared}
            for index, (beta, scale, half_width) in enumerate(cells)]


def _collect_results(results_queue: Queue, processes: list, jobs: list[dict],
                     poll: float = WORKER_POLL_SECONDS) -> tuple[list[dict], bool]:
    """Gather one result per job; cells still missing once every worker has exited are reported as lost.

    Returns:
        tuple[list[dict], bool]: The results and whether any cell was lost.
    """
    results = []
    while len(results) < len(jobs):
        # a worker that exited before the poll has already flushed its results
        alive = any(process.is_alive() for process in processes)
        try:
            results.append(results_queue.get(timeout=poll))
        except Empty:
            if not alive:
                break
    seen = {result["row"]["index"] if result["status"] == "done" else result["index"] for result in results}
    lost = [job["index"] for job in jobs if job["index"] not in seen]
    for index in lost:
        logger.error(f"Cell {index} was lost: every worker has exited")
        results.append({"status": "failed", "index": index, "error": "worker-lost",
                        "message": f"No result for cell {index} after every worker exited"})
    return results, bool(lost)


def _parallel_sweep(jobs: list[dict], workers: int, log_queue: Queue) -> list[dict]:
    work_queue = JoinableQueue()
    results_queue = Queue()
    processes = []
    for i in range(workers):
        process = Process(target=sweep_worker, args=(i, work_queue, results_queue, log_queue))
        processes.append(process)
        process.start()
    for job in jobs:
        work_queue.put(job)
    for _ in range(workers):
        work_queue.put(None)
    results, lost = _collect_results(results_queue, processes, jobs)
    if not lost:
        work_queue.join()
    for process in processes:
        process.join()
    return results


def run_sweep(config: ExperimentConfig, report: Report, log_queue: Optional[Queue] = None) -> None:
    jobs = sweep_jobs(config)
    logger.info(f"Sweeping {len(jobs)} cells with {config.sweep.workers} workers")
    if config.sweep.workers > 1 and len(jobs) > 1 and log_queue is not None:
        results = _parallel_sweep(jobs, min(config.sweep.workers, len(jobs)), log_queue)
    else:
        results = [{"status": "done", "row": evaluate_cell(job)} for job in jobs]
    failed = [result for result in results if result["status"] != "done"]
    for result in failed:
        logger.error(f"Cell {result['index']} failed: {result['error']}: {result['message']}")
    report.check("failed cells", len(failed), 0)
    report.results["failures"] = [{key: result[key] for key in ("index", "error", "message")} for result in failed]
    report.tables["sweep"] = sorted((result["row"] for result in results if result["status"] == "done"),
                                    key=lambda row: row["index"])


COMMANDS: dict[str, Callable] = {
    "pressure": run_pressure,
    "gap": run_gap,
    "game-surface": run_game_surface,
    "kms": run_kms,
    "modular": run_modular,
    "flow": run_flow,
    "stationarity": run_stationarity,
    "limit-trend": run_limit_trend,
    "ergodicity": run_ergodicity,
    "demo-gauge-twist": run_gauge_twist,
    "sweep": run_sweep,
    "validate": run_validate,
}


def run(config: ExperimentConfig, log_queue: Optional[Queue] = None) -> Report:
    """Run the configured command and return its report; module errors propagate."""
    report = Report(config.command)
    logger.info(f"Running {config.command} on half-widths {list(config.lattice.half_widths)}")
    if config.command == "sweep":
        run_sweep(config, report, log_queue)
    else:
        COMMANDS[config.command](config, report)
    logger.info(f"{config.command}: {sum(c.passed for c in report.checks)}/{len(report.checks)} checks passed")
    return report


def _document(config: ExperimentConfig, report: Report, error: Optional[MflabError] = None) -> dict:
    document = {
        "command": config.command,
        "passed": report.passed and error is None,
        "checks": report.checks,
        "tolerances": config.tolerances,
        "config": config.echo,
        "config_hash": config_hash(config.echo),
        "seed": config.seed,
        "versions": versions(),
        "results": report.results,
        "tables": {name: len(rows) for name, rows in report.tables.items()},
    }
    if error is not None:
        document["error"] = {"code": error.code, "message": str(error)}
    return document


def execute(config: ExperimentConfig, log_queue: Optional[Queue] = None) -> int:
    """Run a command, write its artifacts and return the process exit status."""
    os.makedirs(config.out, exist_ok=True)
    report = Report(config.command)
    error = None
    try:
        report = run(config, log_queue)
    except MflabError as e:
        logger.error(f"{config.command} failed with {e.code}: {e}")
        error = e
    for name, rows in report.tables.items():
        write_table(os.path.join(config.out, f"{name}.csv"), rows)
    write_report(os.path.join(config.out, "report.json"), _document(config, report, error))
    if error is not None:
        return error.exit_status
    return 0 if report.passed else TOLERANCE_FAILURE
