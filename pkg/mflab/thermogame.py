"""Bogoliubov approximation: approximating interactions, the thermodynamic game and its gap equations.

Coefficient vectors c are index-aligned with the model's terms. The game value is

    f(c) = -||c_+||^2 + ||c_-||^2 - P(c)

with ||c_+||^2 = sum over repulsive k of gamma_k |c_k|^2, ||c_-||^2 = sum over
attractive k of |gamma_k| |c_k|^2 and P(c) the pressure of the approximating
Hamiltonian U_L^Phi + sum_k gamma_k (conj(c_k) U_L^{Psi_k} + c_k U_L^{Psi_k}*).
"""
import logging
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Optional, Sequence

import numpy as np

from .car import FockContext, LocalOperator, Parity
from .config import (CLUSTER_DISTANCE, CONSERVATIVE_TOLERANCE, DAMPING, FIXED_POINT_TOLERANCE, GRID_CELL_CAP,
                     MAX_ITERATIONS, MAXIMALITY_SAMPLES, RESTARTS)
from .exceptions import GridTooLarge, LengthMismatch, MaximalityCheckFailed, NoConvergence
from .interactions import Interaction, local_hamiltonian
from .longrange import HahnSplit, LongRangeModel, hahn_split, pressure_lr, term_hamiltonians
from .thermostate import (State, density_matrix, gibbs, kms_boundary_residual, pressure, pressure_of,
                          random_even_panel)

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class GapVector:
    """A coefficient vector with its repulsive/attractive split."""
    c: np.ndarray
    split: HahnSplit
    weights: np.ndarray

    @property
    def c_plus(self) -> np.ndarray:
        return self.c[list(self.split.repulsive)]

    @property
    def c_minus(self) -> np.ndarray:
        return self.c[list(self.split.attractive)]

    @property
    def plus_norm2(self) -> float:
        return float(np.sum(self.weights[list(self.split.repulsive)] * np.abs(self.c_plus) ** 2))

    @property
    def minus_norm2(self) -> float:
        return float(np.sum(-self.weights[list(self.split.attractive)] * np.abs(self.c_minus) ** 2))

    def conjugation_defect(self, partners: Sequence[int]) -> float:
        """max |c_{k*} - conj(c_k)| over adjoint-paired terms."""
        return max((abs(self.c[j] - np.conj(self.c[k])) for k, j in enumerate(partners) if j >= 0), default=0.0)


def gap_vector(model: LongRangeModel, c: Iterable[complex]) -> GapVector:
    return GapVector(_check_length(model, c), hahn_split(model), model.weights)


@dataclass
class SolverTrace:
    iterations: int
    damping: float
    start: int
    residuals: list[float] = field(default_factory=list)


@dataclass(eq=False)
class GapSolution:
    """An accepted solution of the gap equations.

    ``pressure`` is the pressure the branch predicts, minus its game value.
    """
    gap: GapVector
    pressure: float
    game_value: float
    residual: float
    branch: str
    trace: SolverTrace
    rank: int = 0


def _check_length(model: LongRangeModel, c: Iterable[complex]) -> np.ndarray:
    c = np.asarray(list(c) if not isinstance(c, np.ndarray) else c, dtype=complex).reshape(-1)
    if c.shape[0] != model.size:
        raise LengthMismatch(f"Coefficient vector has length {c.shape[0]}, model has {model.size} terms")
    return c


def energy_coefficients(model: LongRangeModel, state: State, ctx: FockContext) -> np.ndarray:
    """e_k(rho) = rho(U_L^{Psi_k}) / |Lambda_L|."""
    density = density_matrix(state)
    return np.array([np.einsum("ij,ji->", density, hamiltonian.matrix) / ctx.volume
                     for hamiltonian in term_hamiltonians(model, ctx)], dtype=complex)


def approximating_interaction(model: LongRangeModel, c: Iterable[complex]) -> Interaction:
    """Phi_m(c) = Phi + sum_k gamma_k (conj(c_k) Psi_k + c_k Psi_k*).

    Raises:
        LengthMismatch: If c does not have one entry per term.
    """
    c = _check_length(model, c)
    phi = model.base
    for coefficient, term in zip(c, model.terms):
        phi = phi + term.interaction * (term.weight * np.conj(coefficient))
        phi = phi + term.interaction.adjoint() * (term.weight * coefficient)
    return Interaction(phi.dimension, phi.anchors, f"{model.base.label} approx")


def approximating_hamiltonian(model: LongRangeModel, c: Iterable[complex], ctx: FockContext) -> LocalOperator:
    """U_L^{Phi_m(c)}, assembled from the cached term Hamiltonians."""
    c = _check_length(model, c)
    matrix = local_hamiltonian(model.base, ctx).matrix.copy()
    for coefficient, term, hamiltonian in zip(c, model.terms, term_hamiltonians(model, ctx)):
        matrix += term.weight * (np.conj(coefficient) * hamiltonian.matrix + coefficient * hamiltonian.matrix.conj().T)
    return LocalOperator(matrix, frozenset(ctx.sites), Parity.EVEN)


def approx_pressure(model: LongRangeModel, c: Iterable[complex], beta: float, ctx: FockContext) -> float:
    return pressure_of(approximating_hamiltonian(model, c, ctx), beta, ctx.volume)


def _game_value(model: LongRangeModel, c: np.ndarray, beta: float, ctx: FockContext) -> float:
    vector = gap_vector(model, c)
    return -vector.plus_norm2 + vector.minus_norm2 - approx_pressure(model, c, beta, ctx)


def _combine(split: HahnSplit, size: int, c_minus: Sequence[complex], c_plus: Sequence[complex]) -> np.ndarray:
    if len(c_minus) != len(split.attractive) or len(c_plus) != len(split.repulsive):
        raise LengthMismatch(f"Split lengths ({len(c_minus)}, {len(c_plus)}) do not match "
                             f"({len(split.attractive)}, {len(split.repulsive)})")
    c = np.zeros(size, dtype=complex)
    c[list(split.attractive)] = c_minus
    c[list(split.repulsive)] = c_plus
    return c


def game_value(model: LongRangeModel, c_minus: Sequence[complex], c_plus: Sequence[complex], beta: float,
               ctx: FockContext) -> float:
    """f(c_- + c_+) = -||c_+||^2 + ||c_-||^2 - P(c_- + c_+)."""
    return _game_value(model, _combine(hahn_split(model), model.size, c_minus, c_plus), beta, ctx)


def fixed_point_map(model: LongRangeModel, c: np.ndarray, beta: float, ctx: FockContext) -> np.ndarray:
    """e(omega_c) for the Gibbs state omega_c of the approximating Hamiltonian."""
    return energy_coefficients(model, gibbs(approximating_hamiltonian(model, c, ctx), beta), ctx)


def _iterate(update, start: np.ndarray, damping: float, tolerance: float, max_iterations: int) -> tuple:
    c = start.copy()
    history = []
    for _ in range(max_iterations):
        target = update(c)
        residual = float(np.linalg.norm(c - target))
        history.append(residual)
        if residual <= tolerance:
            return c, residual, history
        c = (1.0 - damping) * c + damping * target
    raise NoConvergence(max_iterations, history[-1] if history else float("nan"))


def decision_rule(model: LongRangeModel, c_minus: Sequence[complex], beta: float, ctx: FockContext,
                  tol: float = FIXED_POINT_TOLERANCE, damping: float = DAMPING, max_iterations: int = MAX_ITERATIONS,
                  rng: Optional[np.random.Generator] = None, perturbation: float = 1e-3) -> np.ndarray:
    """The thermodynamic decision rule r_+(c_-), the maximizer of f over repulsive coordinates.

    Iterates c_+ <- (1 - damping) c_+ + damping e_+(omega_{c_- + c_+}) and checks
    local maximality against random perturbations.

    Raises:
        NoConvergence: If the iteration cap is reached.
        MaximalityCheckFailed: If a perturbation increases the game value.
    """
    split = hahn_split(model)
    c_minus = np.asarray(c_minus, dtype=complex)
    if not split.repulsive:
        return np.zeros(0, dtype=complex)
    repulsive = list(split.repulsive)

    def update(c_plus):
        return fixed_point_map(model, _combine(split, model.size, c_minus, c_plus), beta, ctx)[repulsive]

    c_plus, residual, history = _iterate(update, np.zeros(len(repulsive), dtype=complex), damping, tol,
                                         max_iterations)
    logger.debug(f"Decision rule converged in {len(history)} iterations (residual {residual:.3e})")

    rng = rng or np.random.default_rng(0)
    best = game_value(model, c_minus, c_plus, beta, ctx)
    for _ in range(MAXIMALITY_SAMPLES):
        direction = rng.standard_normal(len(repulsive)) + 1j * rng.standard_normal(len(repulsive))
        direction *= perturbation / np.linalg.norm(direction)
        value = game_value(model, c_minus, c_plus + direction, beta, ctx)
        if value > best + 1e-10:
            raise MaximalityCheckFailed(f"Perturbation raised the game value from {best} to {value}")
    return c_plus


def decision_rule_lipschitz(model: LongRangeModel, c_minus: Sequence[complex], beta: float, ctx: FockContext,
                            step: float = 1e-4, samples: int = 4, rng: Optional[np.random.Generator] = None) -> float:
    """Largest ||r_+(c_- + h) - r_+(c_-)|| / ||h|| over a few random h of size ``step``."""
    c_minus = np.asarray(c_minus, dtype=complex)
    if c_minus.size == 0 or not hahn_split(model).repulsive:
        return 0.0
    rng = rng or np.random.default_rng(0)
    reference = decision_rule(model, c_minus, beta, ctx)
    ratio = 0.0
    for _ in range(samples):
        direction = rng.standard_normal(c_minus.size) + 1j * rng.standard_normal(c_minus.size)
        direction *= step / np.linalg.norm(direction)
        moved = decision_rule(model, c_minus + direction, beta, ctx)
        ratio = max(ratio, float(np.linalg.norm(moved - reference)) / step)
    return ratio


def _charge(monomials: Iterable[tuple]) -> Optional[int]:
    charges = {sum(1 if factor.dagger else -1 for factor in monomial) for monomial in monomials}
    return charges.pop() if len(charges) == 1 else None


def gauge_charges(model: LongRangeModel) -> tuple[Optional[int], ...]:
    """Charge q_k with g_theta(Psi_k) = e^{i q_k theta} Psi_k, or None for an inhomogeneous term."""
    return tuple(_charge(monomial for _, _, monomial in term.interaction.entries()) for term in model.terms)


def is_gauge_symmetric(model: LongRangeModel) -> bool:
    if not model.base.is_zero and _charge(monomial for _, _, monomial in model.base.entries()) != 0:
        return False
    return None not in gauge_charges(model)


def rotate_coefficients(model: LongRangeModel, c: Iterable[complex], theta: float) -> np.ndarray:
    """Coefficients of the gauge-rotated state: c_k -> e^{i q_k theta} c_k."""
    charges = gauge_charges(model)
    if None in charges:
        raise ValueError("Model has terms without a definite gauge charge")
    return _check_length(model, c) * np.exp(1j * theta * np.array(charges, dtype=float))


def canonical_phase(model: LongRangeModel, c: np.ndarray, threshold: float = CLUSTER_DISTANCE) -> np.ndarray:
    """Fix the gauge phase so that the first charged coordinate above ``threshold`` is real and positive."""
    if not is_gauge_symmetric(model):
        return c
    for charge, value in zip(gauge_charges(model), c):
        if charge and abs(value) > threshold:
            return rotate_coefficients(model, c, -np.angle(value) / charge)
    return c


def _branch(model: LongRangeModel, c: np.ndarray) -> str:
    charges = gauge_charges(model)
    charged = [abs(value) for charge, value in zip(charges, c) if charge != 0]
    return "ordered" if charged and max(charged) > CLUSTER_DISTANCE else "normal"


def _random_start(rng: np.random.Generator, size: int, radius: float) -> np.ndarray:
    amplitudes = radius * np.sqrt(rng.uniform(size=size))
    return amplitudes * np.exp(2j * np.pi * rng.uniform(size=size))


def constant_starts(model: LongRangeModel) -> list[np.ndarray]:
    """Real constant starts c_k = r for r in {||m||/2, ||m||}."""
    return [np.full(model.size, radius, dtype=complex) for radius in (0.5 * model.norm, model.norm)]


def gap_fixed_point(model: LongRangeModel, beta: float, ctx: FockContext, restarts: int = RESTARTS,
                    damping: float = DAMPING, tol: float = FIXED_POINT_TOLERANCE,
                    max_iterations: int = MAX_ITERATIONS, seed: int = 0,
                    extra_starts: Sequence[Sequence[complex]] = ()) -> list[GapSolution]:
    """Solve c = e(omega_c) from several starts and return the distinct solutions.

    Start 0 is the origin; the others are uniform in the disc |c_k| <= ||m|| with
    seeds spawned from ``seed``. Solutions of gauge-symmetric models are reported
    with a fixed gauge phase. A start that hits the iteration cap is logged and skipped.
    """
    split = hahn_split(model)
    if not model.terms:
        value = -pressure(model.base, beta, ctx)
        empty = GapVector(np.zeros(0, dtype=complex), split, model.weights)
        return [GapSolution(empty, -value, value, 0.0, "normal", SolverTrace(0, damping, 0))]

    starts = [np.zeros(model.size, dtype=complex)]
    for child in np.random.SeedSequence(seed).spawn(max(restarts - 1, 0)):
        starts.append(_random_start(np.random.default_rng(child), model.size, model.norm))
    starts.extend(_check_length(model, start) for start in extra_starts)

    solutions: list[GapSolution] = []
    for index, start in enumerate(starts):
        try:
            c, residual, history = _iterate(lambda x: fixed_point_map(model, x, beta, ctx), start, damping, tol,
                                            max_iterations)
        except NoConvergence as e:
            logger.warning(f"Gap iteration from start {index} did not converge: {e}")
            continue
        c = canonical_phase(model, c)
        if any(np.linalg.norm(c - other.gap.c) < CLUSTER_DISTANCE for other in solutions):
            continue
        value = _game_value(model, c, beta, ctx)
        trace = SolverTrace(len(history), damping, index, history)
        solutions.append(GapSolution(GapVector(c, split, model.weights), -value, value, residual,
                                     _branch(model, c), trace))
        logger.debug(f"Start {index}: {solutions[-1].branch} solution with game value {value:.12f}")

    solutions.sort(key=lambda s: (round(s.game_value, 12), tuple(np.round(s.gap.c.real, 12)),
                                  tuple(np.round(s.gap.c.imag, 12))))
    for rank, solution in enumerate(solutions):
        solution.rank = rank
    logger.info(f"Gap equations at beta={beta}, L={ctx.half_width}: {len(solutions)} distinct solutions "
                f"from {len(starts)} starts")
    return solutions


@dataclass
class ConservativeStrategy:
    d_minus: np.ndarray
    c_plus: np.ndarray
    value: float


@dataclass
class ConservativeSet:
    """Argmin of d_- -> sup over c_+ of f, among the candidates reachable from the restart budget."""
    strategies: list[ConservativeStrategy]
    value: float
    candidates: int

    @property
    def pressure(self) -> float:
        return -self.value


def conservative_set(model: LongRangeModel, beta: float, ctx: FockContext, restarts: int = RESTARTS,
                     seed: int = 0, tol: float = CONSERVATIVE_TOLERANCE,
                     solutions: Optional[list[GapSolution]] = None) -> ConservativeSet:
    """Conservative strategies d_- with the min-max game value.

    Candidates are the attractive parts of ``solutions``. Without them the gap
    equations are solved from the origin, ``restarts - 1`` random points and the
    two constant starts of ``constant_starts``. Ties within ``tol`` of the minimum
    are all kept.
    """
    split = hahn_split(model)
    if not split.attractive:
        c_plus = decision_rule(model, [], beta, ctx)
        value = game_value(model, [], c_plus, beta, ctx)
        return ConservativeSet([ConservativeStrategy(np.zeros(0, dtype=complex), c_plus, value)], value, 1)

    if solutions is None:
        solutions = gap_fixed_point(model, beta, ctx, restarts, seed=seed, extra_starts=constant_starts(model))
    candidates: list[np.ndarray] = []
    for solution in solutions:
        d_minus = solution.gap.c_minus
        if not any(np.linalg.norm(d_minus - other) < CLUSTER_DISTANCE for other in candidates):
            candidates.append(d_minus)

    evaluated = []
    for d_minus in candidates:
        c_plus = decision_rule(model, d_minus, beta, ctx)
        evaluated.append(ConservativeStrategy(d_minus, c_plus, game_value(model, d_minus, c_plus, beta, ctx)))
    best = min(strategy.value for strategy in evaluated)
    kept = [strategy for strategy in evaluated if strategy.value <= best + tol]
    return ConservativeSet(kept, best, len(candidates))


@dataclass
class MinmaxReport:
    minmax: float
    pressure_lr: float
    residual: float
    volume: int


def minmax_pressure(model: LongRangeModel, beta: float, ctx: FockContext, restarts: int = RESTARTS,
                    seed: int = 0) -> MinmaxReport:
    """-min sup f against the finite-volume long-range pressure."""
    value = conservative_set(model, beta, ctx, restarts, seed).pressure
    reference = pressure_lr(model, beta, ctx)
    return MinmaxReport(value, reference, abs(value - reference), ctx.volume)


def bogoliubov_residual(state: State, model: LongRangeModel, beta: float, ctx: FockContext,
                        strategies: Optional[ConservativeSet] = None) -> float:
    """min over conservative d_- of ||e(rho) - (d_- + r_+(d_-))||."""
    if not model.terms:
        return 0.0
    strategies = strategies or conservative_set(model, beta, ctx)
    split = hahn_split(model)
    coefficients = canonical_phase(model, energy_coefficients(model, state, ctx))
    return min(float(np.linalg.norm(coefficients - _combine(split, model.size, strategy.d_minus, strategy.c_plus)))
               for strategy in strategies.strategies)


@dataclass
class KmsCheckReport:
    coefficients: np.ndarray
    max_residual: float
    residuals: list[float]


def selfconsistent_kms_check(state: State, model: LongRangeModel, beta: float, ctx: FockContext,
                             rng: np.random.Generator, panel_size: int = 10) -> KmsCheckReport:
    """KMS residual of rho for its own approximating Hamiltonian H_c, c = e(rho), over a random panel."""
    coefficients = energy_coefficients(model, state, ctx)
    hamiltonian = approximating_hamiltonian(model, coefficients, ctx)
    residuals = [kms_boundary_residual(state, hamiltonian, beta, a, b, warn=False)
                 for a, b in random_even_panel(ctx, rng, panel_size)]
    report = KmsCheckReport(coefficients, max(residuals, default=0.0), residuals)
    logger.debug(f"Self-consistent KMS check: max residual {report.max_residual:.3e}")
    return report


def game_gradient(model: LongRangeModel, c: Sequence[complex], beta: float, ctx: FockContext,
                  step: float = 1e-6) -> np.ndarray:
    """Central finite differences of f along the 2K real coordinates of c."""
    c = _check_length(model, c)
    gradient = []
    for k in range(model.size):
        for unit in (1.0, 1j):
            shift = np.zeros(model.size, dtype=complex)
            shift[k] = unit * step
            gradient.append((_game_value(model, c + shift, beta, ctx) - _game_value(model, c - shift, beta, ctx))
                            / (2 * step))
    return np.array(gradient)


@dataclass(frozen=True)
class GridSpec:
    amplitude_max: float = 2.0
    amplitude_step: float = 1e-2
    phases: int = 1


@dataclass
class OracleReport:
    """Exhaustive grid evaluation of the game.

    ``surface[i, j]`` is f at attractive cell i and repulsive cell j.
    """
    attractive_cells: list[np.ndarray]
    repulsive_cells: list[np.ndarray]
    surface: np.ndarray
    minmax: float
    maxmin: float
    argmin: np.ndarray
    argmax: np.ndarray


def _orbits(model: LongRangeModel) -> list[tuple[int, ...]]:
    orbits, seen = [], set()
    for k, partner in enumerate(model.partners):
        if k in seen:
            continue
        orbit = (k,) if partner in (-1, k) else (k, partner)
        seen.update(orbit)
        orbits.append(orbit)
    return orbits


def _orbit_values(orbit: tuple[int, ...], grid: GridSpec) -> list[dict[int, complex]]:
    amplitudes = np.arange(0.0, grid.amplitude_max + grid.amplitude_step / 2, grid.amplitude_step)
    if len(orbit) == 1:
        signed = np.concatenate([-amplitudes[:0:-1], amplitudes])
        return [{orbit[0]: complex(x)} for x in signed]
    cells = []
    for r in amplitudes:
        for j in range(grid.phases if r > 0 else 1):
            value = r * np.exp(2j * np.pi * j / grid.phases)
            cells.append({orbit[0]: value, orbit[1]: np.conj(value)})
    return cells


def _grid(orbits: list[tuple[int, ...]], grid: GridSpec, size: int) -> list[np.ndarray]:
    cells = []
    for choice in product(*[_orbit_values(orbit, grid) for orbit in orbits]):
        c = np.zeros(size, dtype=complex)
        for assignment in choice:
            for k, value in assignment.items():
                c[k] = value
        cells.append(c)
    return cells


def brute_force_game_oracle(model: LongRangeModel, beta: float, ctx: FockContext,
                            grid: GridSpec = GridSpec()) -> OracleReport:
    """Tabulate f over a grid with one amplitude (and phase) per adjoint orbit.

    A self-adjoint term takes signed real values; an adjoint pair takes
    (r e^{i phi}, r e^{-i phi}).

    Raises:
        GridTooLarge: With more than two orbits or more cells than the grid cap.
    """
    orbits = _orbits(model)
    weights = model.weights
    attractive = [orbit for orbit in orbits if weights[orbit[0]] < 0]
    repulsive = [orbit for orbit in orbits if weights[orbit[0]] > 0]
    counts = [len(_orbit_values(orbit, grid)) for orbit in orbits]
    cells = int(np.prod(counts)) if counts else 1
    if len(orbits) > 2 or cells > GRID_CELL_CAP:
        raise GridTooLarge(cells, GRID_CELL_CAP)

    attractive_cells = _grid(attractive, grid, model.size)
    repulsive_cells = _grid(repulsive, grid, model.size)
    surface = np.array([[_game_value(model, low + high, beta, ctx) for high in repulsive_cells]
                        for low in attractive_cells])
    inner_max = surface.max(axis=1)
    i = int(np.argmin(inner_max))
    j = int(np.argmax(surface[i]))
    inner_min = surface.min(axis=0)
    logger.info(f"Game oracle over {cells} cells: minmax {inner_max[i]:.10f}, maxmin {inner_min.max():.10f}")
    return OracleReport(attractive_cells, repulsive_cells, surface, float(inner_max[i]), float(inner_min.max()),
                        attractive_cells[i], repulsive_cells[j])


@dataclass
class SimpleModelProbe:
    plus: np.ndarray
    minus: np.ndarray
    separation: float
    simple: bool


def simple_model_probe(model: LongRangeModel, beta: float, ctx: FockContext, epsilon: float = 1e-3,
                       restarts: int = 4, seed: int = 0) -> SimpleModelProbe:
    """Heuristic: break the symmetry with fields +-epsilon (Psi_k + Psi_k*) and compare the preferred branches.

    The model is flagged simple when both fields select gap vectors within 10 epsilon of each other.
    """
    selected = []
    for sign in (1.0, -1.0):
        field_term = Interaction.zero(model.dimension)
        for term in model.terms:
            field_term = field_term + (term.interaction + term.interaction.adjoint()) * (sign * epsilon)
        shifted = LongRangeModel(model.base + field_term, model.terms, model.decay, model.partners)
        solutions = gap_fixed_point(shifted, beta, ctx, restarts, seed=seed)
        selected.append(solutions[0].gap.c if solutions else np.zeros(model.size, dtype=complex))
    separation = float(np.linalg.norm(selected[0] - selected[1]))
    return SimpleModelProbe(selected[0], selected[1], separation, separation <= 10 * epsilon)
