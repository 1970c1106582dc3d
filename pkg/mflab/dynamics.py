"""Finite-volume dynamics: Heisenberg evolution, non-autonomous propagators and the self-consistent flow."""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.linalg import polar

from .car import FockContext, LocalOperator, as_matrix, gauge_matrix
from .config import MAX_HALVINGS, POSITIVITY_FLOOR, POSITIVITY_LIMIT, TRACE_DRIFT_TOLERANCE, UNITARITY_TOLERANCE
from .exceptions import NonPhysicalState, StepTooLarge, WindowTooSmall
from .interactions import Interaction, local_hamiltonian
from .longrange import LongRangeModel, long_range_hamiltonian
from .thermogame import GapSolution, approximating_hamiltonian, energy_coefficients
from .thermostate import State, ThermalState, density_matrix, entropy_density, gibbs, hermitian_part

logger = logging.getLogger(__name__)

Operator = Union[LocalOperator, np.ndarray]
InteractionPath = Callable[[float], Union[Interaction, LocalOperator, np.ndarray]]

# Gauss-Legendre nodes and the commutator-free fourth-order weights
_NODES = (0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6)
_EARLY = (3 - 2 * np.sqrt(3)) / 12
_LATE = (3 + 2 * np.sqrt(3)) / 12


def _wrap(template: Operator, matrix: np.ndarray) -> Operator:
    if isinstance(template, LocalOperator):
        return LocalOperator(matrix, template.support, template.parity)
    return matrix


def _conjugate(energies: np.ndarray, basis: np.ndarray, operator: Operator, t: float) -> Operator:
    unitary = (basis * np.exp(1j * t * energies)) @ basis.conj().T
    return _wrap(operator, unitary @ as_matrix(operator) @ unitary.conj().T)


def heisenberg(hamiltonian: Operator, operator: Operator, t: float) -> Operator:
    """tau_t(A) = e^{itH} A e^{-itH}.

    Raises:
        NonHermitian: If H is not self-adjoint.
    """
    energies, basis = np.linalg.eigh(hermitian_part(hamiltonian))
    return _conjugate(energies, basis, operator, t)


@lru_cache(maxsize=16)
def _long_range_spectrum(model: LongRangeModel, ctx: FockContext) -> tuple[np.ndarray, np.ndarray]:
    return np.linalg.eigh(hermitian_part(long_range_hamiltonian(model, ctx)))


def heisenberg_lr(model: LongRangeModel, ctx: FockContext, operator: Operator, t: float) -> Operator:
    """tau_t^{(L,m)}(A) = e^{itU_L^m} A e^{-itU_L^m}, using a cached spectrum of U_L^m."""
    energies, basis = _long_range_spectrum(model, ctx)
    return _conjugate(energies, basis, operator, t)


def schrodinger_lr(model: LongRangeModel, ctx: FockContext, state: State, t: float) -> np.ndarray:
    """The density e^{-itU_L^m} D e^{itU_L^m}, so that Tr(D_t A) = rho(tau_t(A))."""
    energies, basis = _long_range_spectrum(model, ctx)
    return _conjugate(energies, basis, density_matrix(state), -t)


def _exponential(generator: np.ndarray, step: float) -> np.ndarray:
    """exp(-i step G) for Hermitian G."""
    energies, basis = np.linalg.eigh((generator + generator.conj().T) / 2)
    return (basis * np.exp(-1j * step * energies)) @ basis.conj().T


def _unitarity_drift(unitary: np.ndarray) -> float:
    return float(np.linalg.norm(unitary.conj().T @ unitary - np.eye(unitary.shape[0]), 2))


@dataclass
class Propagator:
    """U(t, s) with tau_{t,s}(A) = U* A U."""
    unitary: np.ndarray
    start: float
    end: float
    steps: int
    halvings: int
    drift: float

    def apply(self, operator: Operator) -> Operator:
        return _wrap(operator, self.unitary.conj().T @ as_matrix(operator) @ self.unitary)


def _path_matrix(path: InteractionPath, ctx: FockContext, t: float) -> np.ndarray:
    value = path(t)
    if isinstance(value, Interaction):
        return local_hamiltonian(value, ctx).matrix
    return as_matrix(value)


def nonautonomous_propagator(path: InteractionPath, ctx: FockContext, s: float, t: float,
                             dt: float = 1e-2) -> Propagator:
    """Solve d/dt tau_{t,s} = tau_{t,s} o delta^{Psi(t)} with a fourth-order commutator-free scheme.

    The unitary is re-orthogonalized by a polar decomposition when its drift
    exceeds 1e-12; a drift beyond the unitarity tolerance halves the step.

    Raises:
        StepTooLarge: If the step has been halved MAX_HALVINGS times without success.
    """
    span = t - s
    for halving in range(MAX_HALVINGS + 1):
        steps = max(int(np.ceil(abs(span) / (dt / 2 ** halving) - 1e-12)), 1) if span else 0
        h = span / steps if steps else 0.0
        unitary = np.eye(ctx.fock_dim, dtype=complex)
        drift = 0.0
        for n in range(steps):
            origin = s + n * h
            early = _path_matrix(path, ctx, origin + _NODES[0] * h)
            late = _path_matrix(path, ctx, origin + _NODES[1] * h)
            unitary = _exponential(_EARLY * early + _LATE * late, h) @ _exponential(_LATE * early + _EARLY * late, h) \
                @ unitary
            drift = _unitarity_drift(unitary)
            if drift > UNITARITY_TOLERANCE:
                break
            if drift > 1e-12:
                unitary = polar(unitary)[0]
        if drift <= UNITARITY_TOLERANCE:
            return Propagator(unitary, s, t, steps, halving, _unitarity_drift(unitary))
        logger.warning(f"Unitarity drift {drift:.3e} at step {dt / 2 ** halving}, halving")
    raise StepTooLarge(f"Propagator from {s} to {t} still drifts after {MAX_HALVINGS} halvings")


@dataclass
class FlowTrajectory:
    """Snapshots of the self-consistent mean-field flow."""
    times: np.ndarray
    states: list[np.ndarray]
    coefficients: np.ndarray
    energies: np.ndarray
    entropies: np.ndarray
    purities: np.ndarray
    trace_drift: np.ndarray
    step: float
    halvings: int = 0
    repairs: int = 0
    method: str = "rk4"
    observables: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energies - self.energies[0]))) if len(self.energies) else 0.0

    def rows(self) -> list[dict]:
        """One flat row per snapshot, ready for a CSV table."""
        rows = []
        for i, t in enumerate(self.times):
            row = {"t": float(t)}
            for k, value in enumerate(self.coefficients[i]):
                row[f"re_c{k}"] = float(value.real)
                row[f"im_c{k}"] = float(value.imag)
            row.update(energy=float(self.energies[i]), entropy=float(self.entropies[i]), purity=float(self.purities[i]))
            for name, values in self.observables.items():
                row[f"re_{name}"] = float(values[i].real)
                row[f"im_{name}"] = float(values[i].imag)
            rows.append(row)
        return rows


def mean_field_energy(model: LongRangeModel, ctx: FockContext, density: np.ndarray) -> float:
    """E(rho) = rho(U_L^Phi)/|Lambda_L| + sum_k gamma_k |c_k|^2."""
    base = local_hamiltonian(model.base, ctx).matrix
    energy = float(np.einsum("ij,ji->", density, base).real) / ctx.volume
    coefficients = energy_coefficients(model, density, ctx)
    return energy + float(np.sum(model.weights * np.abs(coefficients) ** 2)) if model.terms else energy


def _vector_field(model: LongRangeModel, ctx: FockContext, density: np.ndarray) -> np.ndarray:
    coefficients = energy_coefficients(model, density, ctx)
    hamiltonian = approximating_hamiltonian(model, coefficients, ctx).matrix
    return -1j * (hamiltonian @ density - density @ hamiltonian)


def _rk4_segment(model: LongRangeModel, ctx: FockContext, density: np.ndarray, span: float, dt: float) -> np.ndarray:
    steps = max(int(np.ceil(span / dt - 1e-12)), 1)
    h = span / steps
    for _ in range(steps):
        k1 = _vector_field(model, ctx, density)
        k2 = _vector_field(model, ctx, density + 0.5 * h * k1)
        k3 = _vector_field(model, ctx, density + 0.5 * h * k2)
        k4 = _vector_field(model, ctx, density + h * k3)
        density = density + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return density


def _repair_positivity(density: np.ndarray) -> tuple[np.ndarray, bool]:
    density = (density + density.conj().T) / 2
    values, vectors = np.linalg.eigh(density)
    if values[0] < -POSITIVITY_LIMIT:
        raise NonPhysicalState(f"Flow lost positivity, eigenvalue {values[0]:.3e}")
    if values[0] >= -POSITIVITY_FLOOR:
        return density, False
    values = np.clip(values, 0.0, None)
    repaired = (vectors * values) @ vectors.conj().T
    return repaired / np.trace(repaired).real, True


def selfconsistent_flow(model: LongRangeModel, ctx: FockContext, initial: State, duration: float, dt: float = 1e-2,
                        times: Optional[Sequence[float]] = None,
                        observables: Optional[dict[str, Operator]] = None) -> FlowTrajectory:
    """Integrate D'(t) = -i [H(c(t)), D(t)] with c_k(t) = Tr(D(t) U_L^{Psi_k}) / |Lambda_L|.

    H(c) is the approximating Hamiltonian U_L^{Phi_m(c)}; c is re-evaluated in
    every Runge-Kutta stage. Segments between snapshot times are integrated
    separately so that every requested time is hit exactly; a segment whose
    trace drifts beyond TRACE_DRIFT_TOLERANCE is redone with half the step.

    Raises:
        StepTooLarge: If halving the step cannot restore the trace.
        NonPhysicalState: If positivity is lost beyond repair.
    """
    grid = sorted({0.0, float(duration)} if times is None else {float(t) for t in times})
    if grid[0] < 0 or grid[-1] > duration + 1e-12:
        raise ValueError(f"Snapshot times {grid} are outside [0, {duration}]")
    density = np.array(density_matrix(initial), dtype=complex)
    observables = observables or {}
    current, halvings, repairs = 0.0, 0, 0
    snapshots, coefficients, energies, entropies, purities, drifts = [], [], [], [], [], []
    values = {name: [] for name in observables}
    for target in grid:
        if target > current:
            step = dt
            for attempt in range(MAX_HALVINGS + 1):
                advanced = _rk4_segment(model, ctx, density, target - current, step)
                if abs(np.trace(advanced).real - 1.0) <= TRACE_DRIFT_TOLERANCE:
                    break
                step /= 2
                halvings += 1
                logger.warning(f"Trace drift in flow segment ending at t={target}, halving step to {step}")
            else:
                raise StepTooLarge(f"Flow segment ending at t={target} drifts after {MAX_HALVINGS} halvings")
            density, repaired = _repair_positivity(advanced)
            repairs += repaired
            current = target
        snapshots.append(density.copy())
        coefficients.append(energy_coefficients(model, density, ctx))
        energies.append(mean_field_energy(model, ctx, density))
        entropies.append(entropy_density(density, ctx))
        purities.append(float(np.einsum("ij,ji->", density, density).real))
        drifts.append(abs(float(np.trace(density).real) - 1.0))
        for name, operator in observables.items():
            values[name].append(complex(np.einsum("ij,ji->", density, as_matrix(operator))))
    if repairs:
        logger.warning(f"Flow needed {repairs} positivity repairs")
    logger.debug(f"Self-consistent flow to t={duration} with step {dt}: {len(grid)} snapshots")
    return FlowTrajectory(np.array(grid), snapshots, np.array(coefficients).reshape(len(grid), model.size),
                          np.array(energies), np.array(entropies), np.array(purities), np.array(drifts), dt,
                          halvings, repairs, "rk4", {name: np.array(v) for name, v in values.items()})


@dataclass
class StationarityReport:
    times: np.ndarray
    selfconsistent_deviation: float
    exact_deviation: float
    exact_path: np.ndarray


def stationarity_check(model: LongRangeModel, beta: float, ctx: FockContext, solution: GapSolution,
                       duration: float = 1.0, dt: float = 1e-2, times: Optional[Sequence[float]] = None) -> StationarityReport:
    """Evolve the Gibbs state of the gap-solution Hamiltonian under both dynamics and track c(t).

    The self-consistent flow keeps it fixed; the exact finite long-range dynamics
    only does so in the limit, so its deviation is reported per window.
    """
    times = sorted({0.0, float(duration)} if times is None else {float(t) for t in times})
    hamiltonian = approximating_hamiltonian(model, solution.gap.c, ctx)
    state = gibbs(hamiltonian, beta)
    flow = selfconsistent_flow(model, ctx, state, duration, dt, times)
    selfconsistent = float(np.max(np.linalg.norm(flow.coefficients - flow.coefficients[0], axis=1)))
    start = energy_coefficients(model, state, ctx)
    path = np.array([energy_coefficients(model, schrodinger_lr(model, ctx, state, t), ctx) for t in times])
    exact = float(np.max(np.linalg.norm(path - start, axis=1))) if model.terms else 0.0
    logger.info(f"Stationarity at L={ctx.half_width}: self-consistent {selfconsistent:.3e}, exact {exact:.3e}")
    return StationarityReport(np.array(times), selfconsistent, exact, path)


def limit_agreement(model: LongRangeModel, contexts: Sequence[FockContext], state_factory: Callable[[FockContext], State],
                    observable_factory: Callable[[FockContext], LocalOperator], t: float,
                    dt: float = 1e-2) -> list[dict]:
    """|rho_L(tau_t^{(L,m)}(A)) - varpi_L(t; rho_L)(A)| for each window.

    Raises:
        WindowTooSmall: If the observable does not fit in a window.
    """
    rows = []
    for ctx in contexts:
        observable = observable_factory(ctx)
        if not observable.support <= set(ctx.sites):
            raise WindowTooSmall(f"Observable support {sorted(observable.support)} exceeds window L={ctx.half_width}")
        state = state_factory(ctx)
        density = density_matrix(state)
        exact = complex(np.einsum("ij,ji->", density, as_matrix(heisenberg_lr(model, ctx, observable, t))))
        if t > 0:
            flow = selfconsistent_flow(model, ctx, state, t, dt, [t], {"A": observable})
            selfconsistent = complex(flow.observables["A"][-1])
        else:
            selfconsistent = complex(np.einsum("ij,ji->", density, observable.matrix))
        rows.append({"half_width": ctx.half_width, "exact": exact, "selfconsistent": selfconsistent,
                     "deviation": abs(exact - selfconsistent)})
        logger.debug(f"Limit agreement at L={ctx.half_width}: deviation {rows[-1]['deviation']:.3e}")
    return rows


def gauge_rotate_state(ctx: FockContext, state: State, theta: float) -> ThermalState:
    """The state rho o g_{-theta}, with density e^{i theta N} D e^{-i theta N}."""
    return ThermalState(gauge_matrix(ctx, theta, density_matrix(state)))
