"""Thermal states, thermodynamic functionals, KMS checks and modular data.

Every e^{-beta H} is evaluated in the eigenbasis of H after shifting the
spectrum by its minimum; e^{+beta H} is never formed as a matrix.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np
from scipy.special import entr, logsumexp

from .car import (FockContext, LocalOperator, Parity, annihilation, as_matrix, gauge_matrix, occupation_table,
                  random_local_operator, space_average)
from .config import (BETA_CAP, DENSE_MODULAR_LIMIT, FAITHFUL_TOLERANCE, GENERATOR_TOLERANCE, HERMITIAN_TOLERANCE,
                     STATE_TOLERANCE)
from .exceptions import (NonHermitian, NonPhysicalState, SpinSetTooSmall, StateNotFaithful, StateNotGibbsOfH,
                         TemperatureOutOfRange)
from .interactions import Interaction, local_hamiltonian

logger = logging.getLogger(__name__)

Operator = Union[LocalOperator, np.ndarray]


@dataclass(frozen=True, eq=False)
class ThermalState:
    """A density matrix on the window's Fock space.

    Gibbs states also carry their inverse temperature, generator and the
    eigendata of the generator, with ``weights`` the Gibbs weights in that basis.
    """
    density: np.ndarray
    beta: Optional[float] = None
    generator: Optional[np.ndarray] = field(default=None, repr=False)
    energies: Optional[np.ndarray] = field(default=None, repr=False)
    basis: Optional[np.ndarray] = field(default=None, repr=False)
    weights: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.density.shape[0]

    def expectation(self, operator: Operator) -> complex:
        return complex(np.einsum("ij,ji->", self.density, as_matrix(operator)))

    @cached_property
    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues and eigenvectors of the density matrix."""
        if self.weights is not None and self.basis is not None:
            return self.weights, self.basis
        return np.linalg.eigh(self.density)


State = Union[ThermalState, np.ndarray]


def density_matrix(state: State) -> np.ndarray:
    return state.density if isinstance(state, ThermalState) else np.asarray(state, dtype=complex)


def check_beta(beta: float) -> float:
    if not 0 < beta <= BETA_CAP:
        raise TemperatureOutOfRange(f"Inverse temperature {beta} is outside (0, {BETA_CAP}]")
    return float(beta)


def hermitian_part(operator: Operator) -> np.ndarray:
    """Symmetrized matrix of an operator that must be self-adjoint.

    Raises:
        NonHermitian: If ||H - H*|| exceeds the Hermiticity tolerance.
    """
    matrix = as_matrix(operator)
    residual = float(np.linalg.norm(matrix - matrix.conj().T))
    if residual > HERMITIAN_TOLERANCE * max(1.0, float(np.linalg.norm(matrix))):
        raise NonHermitian(f"Operator is not self-adjoint, ||H - H*|| = {residual:.3e}")
    return (matrix + matrix.conj().T) / 2


def _gibbs_weights(energies: np.ndarray, beta: float) -> np.ndarray:
    weights = np.exp(-beta * (energies - energies[0]))
    return weights / weights.sum()


def gibbs(hamiltonian: Operator, beta: float) -> ThermalState:
    """The Gibbs state e^{-beta H}/Z.

    Raises:
        NonHermitian: If H is not self-adjoint.
        TemperatureOutOfRange: If beta is not in (0, BETA_CAP].
    """
    beta = check_beta(beta)
    matrix = hermitian_part(hamiltonian)
    energies, basis = np.linalg.eigh(matrix)
    weights = _gibbs_weights(energies, beta)
    density = (basis * weights) @ basis.conj().T
    return ThermalState(density, beta, matrix, energies, basis, weights)


def from_density(matrix: np.ndarray, tolerance: float = STATE_TOLERANCE) -> ThermalState:
    """Wrap a density matrix after checking it is a state.

    Raises:
        NonPhysicalState: If the matrix is not Hermitian, not positive or not normalized.
    """
    matrix = np.array(matrix, dtype=complex)
    if np.linalg.norm(matrix - matrix.conj().T) > tolerance * max(1.0, float(np.linalg.norm(matrix))):
        raise NonPhysicalState("Density matrix is not Hermitian")
    matrix = (matrix + matrix.conj().T) / 2
    trace = float(np.trace(matrix).real)
    if abs(trace - 1.0) > tolerance:
        raise NonPhysicalState(f"Density matrix has trace {trace}")
    lowest = float(np.linalg.eigvalsh(matrix)[0])
    if lowest < -tolerance:
        raise NonPhysicalState(f"Density matrix has negative eigenvalue {lowest:.3e}")
    return ThermalState(matrix)


def tracial_state(ctx: FockContext) -> ThermalState:
    return ThermalState(np.eye(ctx.fock_dim, dtype=complex) / ctx.fock_dim)


def pure_state(vector: np.ndarray) -> ThermalState:
    vector = np.asarray(vector, dtype=complex)
    vector = vector / np.linalg.norm(vector)
    return ThermalState(np.outer(vector, vector.conj()))


def random_state(ctx: FockContext, rng: np.random.Generator, even: bool = True,
                 weight: Optional[float] = None) -> ThermalState:
    """A Haar-random pure state mixed with the tracial state.

    Args:
        ctx (FockContext): The window.
        rng (np.random.Generator): Random source.
        even (bool): Restrict the pure part to the even parity sector.
        weight (float): Weight of the pure part; drawn uniformly from [0, 1) if omitted.
    """
    dim = ctx.fock_dim
    vector = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    if even:
        vector[occupation_table(ctx.n_modes).sum(axis=1) % 2 == 1] = 0.0
    vector /= np.linalg.norm(vector)
    weight = rng.uniform() if weight is None else weight
    density = weight * np.outer(vector, vector.conj()) + (1.0 - weight) * np.eye(dim) / dim
    return ThermalState(density)


def entropy(state: State) -> float:
    """von Neumann entropy -Tr(D ln D) with 0 ln 0 = 0."""
    probabilities = state.spectrum[0] if isinstance(state, ThermalState) else np.linalg.eigvalsh(density_matrix(state))
    return float(np.sum(entr(np.clip(probabilities, 0.0, None))))


def entropy_density(state: State, ctx: FockContext) -> float:
    return entropy(state) / ctx.volume


def energy_density(state: State, phi: Interaction, ctx: FockContext) -> float:
    hamiltonian = local_hamiltonian(phi, ctx).matrix
    return float(np.einsum("ij,ji->", density_matrix(state), hamiltonian).real) / ctx.volume


def free_energy_density(state: State, phi: Interaction, beta: float, ctx: FockContext) -> float:
    """f = rho(U_L)/|Lambda_L| - entropy_density / beta."""
    return energy_density(state, phi, ctx) - entropy_density(state, ctx) / beta


def log_partition(hamiltonian: Operator, beta: float) -> float:
    beta = check_beta(beta)
    energies = np.linalg.eigvalsh(hermitian_part(hamiltonian))
    return float(logsumexp(-beta * energies))


def pressure_of(hamiltonian: Operator, beta: float, volume: int) -> float:
    return log_partition(hamiltonian, beta) / (beta * volume)


def pressure(phi: Interaction, beta: float, ctx: FockContext) -> float:
    """(beta |Lambda_L|)^{-1} ln Tr e^{-beta U_L}."""
    return pressure_of(local_hamiltonian(phi, ctx), beta, ctx.volume)


def _in_basis(basis: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    return basis.conj().T @ matrix @ basis


def _eigendata(hamiltonian: Operator, beta: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    energies, basis = np.linalg.eigh(hermitian_part(hamiltonian))
    return energies, basis, _gibbs_weights(energies, beta)


def generator_mismatch(state: State, hamiltonian: Operator, beta: float) -> float:
    """Frobenius distance between a state and the Gibbs state of H at beta."""
    energies, basis, weights = _eigendata(hamiltonian, check_beta(beta))
    return float(np.linalg.norm(_in_basis(basis, density_matrix(state)) - np.diag(weights)))


def kms_boundary_residual(state: State, hamiltonian: Operator, beta: float, a: Operator, b: Operator,
                          strict: bool = False, warn: bool = True) -> float:
    """|rho(A tau_{i beta}(B)) - rho(BA)| with tau_t(B) = e^{itH} B e^{-itH}.

    For the Gibbs state of H the left side is Z^{-1} sum A_nm B_mn e^{-beta E_m}
    in the eigenbasis. For any other state the general eigenbasis formula is used
    and the mismatch is logged; in strict mode it is raised.

    Raises:
        StateNotGibbsOfH: In strict mode, when the state is not the Gibbs state of H.
    """
    beta = check_beta(beta)
    energies, basis, weights = _eigendata(hamiltonian, beta)
    density = _in_basis(basis, density_matrix(state))
    a_tilde = _in_basis(basis, as_matrix(a))
    b_tilde = _in_basis(basis, as_matrix(b))
    rhs = np.einsum("ij,jk,ki->", density, b_tilde, a_tilde)
    mismatch = float(np.linalg.norm(density - np.diag(weights)))
    if mismatch <= GENERATOR_TOLERANCE:
        lhs = np.einsum("nm,mn,m->", a_tilde, b_tilde, weights)
        return float(abs(lhs - rhs))

    exponent = np.clip(-beta * (energies[:, None] - energies[None, :]), None, 700.0)
    lhs = np.einsum("kn,nm,mk->", density, a_tilde, b_tilde * np.exp(exponent))
    residual = float(abs(lhs - rhs))
    if warn:
        logger.warning(f"State is not the Gibbs state of the generator (mismatch {mismatch:.3e}), "
                       f"KMS residual {residual:.3e}")
    if strict:
        raise StateNotGibbsOfH(residual, mismatch)
    return residual


def kms_smeared_residual(state: State, hamiltonian: Operator, beta: float, a: Operator, b: Operator,
                         sigma: float = 1.0) -> float:
    """Residual of the smeared KMS identity with the Gaussian f(t) = exp(-t^2 / 2 sigma^2).

    Compares the integral of f(t - i beta) rho(A tau_t(B)) with the integral of
    f(t) rho(tau_t(B) A); both are evaluated in closed form per eigen-pair.
    """
    beta = check_beta(beta)
    energies, basis = np.linalg.eigh(hermitian_part(hamiltonian))
    density = _in_basis(basis, density_matrix(state))
    a_tilde = _in_basis(basis, as_matrix(a))
    b_tilde = _in_basis(basis, as_matrix(b))
    omega = energies[:, None] - energies[None, :]
    scale = sigma * np.sqrt(2.0 * np.pi)
    shifted = scale * np.exp(np.clip(-beta * omega - 0.5 * sigma ** 2 * omega ** 2, None, 700.0))
    plain = scale * np.exp(-0.5 * sigma ** 2 * omega ** 2)
    lhs = np.einsum("kn,nm,mk->", density, a_tilde, b_tilde * shifted)
    rhs = np.einsum("kn,nm,mk->", density, b_tilde * plain, a_tilde)
    return float(abs(lhs - rhs))


@dataclass(frozen=True, eq=False)
class ModularData:
    """Tomita-Takesaki data of a faithful state in the Hilbert-Schmidt picture.

    Vectors of the doubled space are matrices X, stored row-major when
    vectorized. Omega = D^{1/2}, pi(A) X = A X, Delta X = D X D^{-1} and
    J X = X*, so J pi(A) J acts as X -> X A*.
    """
    density: np.ndarray
    probabilities: np.ndarray
    basis: np.ndarray

    @property
    def dim(self) -> int:
        return self.density.shape[0]

    def power(self, exponent: complex) -> np.ndarray:
        """D^z through the eigendecomposition of D."""
        return (self.basis * self.probabilities.astype(complex) ** exponent) @ self.basis.conj().T

    @cached_property
    def root(self) -> np.ndarray:
        return self.power(0.5)

    @cached_property
    def inverse(self) -> np.ndarray:
        return self.power(-1.0)

    @property
    def omega(self) -> np.ndarray:
        return self.root.reshape(-1)

    def vector(self, operator: Operator) -> np.ndarray:
        """pi(A) Omega."""
        return (as_matrix(operator) @ self.root).reshape(-1)

    def modular_operator(self) -> np.ndarray:
        """Delta = D tensor conj(D^{-1}) on the doubled space."""
        return np.kron(self.density, self.inverse.conj())

    def apply_delta(self, vector: np.ndarray, exponent: complex = 1.0) -> np.ndarray:
        matrix = vector.reshape(self.dim, self.dim)
        return (self.power(exponent) @ matrix @ self.power(-exponent)).reshape(-1)

    def apply_conjugation(self, vector: np.ndarray) -> np.ndarray:
        return vector.reshape(self.dim, self.dim).conj().T.reshape(-1)

    def modular_flow(self, operator: Operator, s: float) -> np.ndarray:
        """sigma_s(pi(A)) = Delta^{is} pi(A) Delta^{-is}, returned as the matrix acting on the left factor."""
        return self.power(1j * s) @ as_matrix(operator) @ self.power(-1j * s)

    def tomita_matrix(self) -> np.ndarray:
        """Linear part M of the antilinear Tomita operator S = M K, with K complex conjugation."""
        dim = self.dim
        swap = np.eye(dim * dim)[[j * dim + i for i in range(dim) for j in range(dim)]]
        return np.kron(self.power(-0.5), self.root.T) @ swap

    def tomita_residuals(self) -> dict:
        """Residuals of Delta = S*S and of J = S Delta^{-1/2} against their closed forms.

        Only available up to DENSE_MODULAR_LIMIT, since the doubled space is formed densely.
        """
        if self.dim > DENSE_MODULAR_LIMIT:
            raise ValueError(f"Dense Tomita matrices need dimension <= {DENSE_MODULAR_LIMIT}, got {self.dim}")
        dim = self.dim
        tomita = self.tomita_matrix()
        delta = (tomita.conj().T @ tomita).conj()
        values, vectors = np.linalg.eigh((delta + delta.conj().T) / 2)
        inverse_root = (vectors * values ** -0.5) @ vectors.conj().T
        conjugation = tomita @ inverse_root.conj()
        swap = np.eye(dim * dim)[[j * dim + i for i in range(dim) for j in range(dim)]]
        return {
            "delta": float(np.linalg.norm(delta - self.modular_operator())),
            "conjugation": float(np.linalg.norm(conjugation - swap)),
        }

    def panel_residual(self, a: Operator, b: Operator) -> float:
        """|<A Omega, Delta B Omega> - <B* Omega, A* Omega>|."""
        a, b = as_matrix(a), as_matrix(b)
        lhs = np.vdot(self.vector(a), self.apply_delta(self.vector(b)))
        rhs = np.vdot(self.vector(b.conj().T), self.vector(a.conj().T))
        return float(abs(lhs - rhs))

    def conjugation_residual(self, rng: np.random.Generator, samples: int = 4) -> float:
        """max ||J Delta J X - Delta^{-1} X|| over random unit vectors X."""
        worst = 0.0
        for _ in range(samples):
            vector = rng.standard_normal(self.dim ** 2) + 1j * rng.standard_normal(self.dim ** 2)
            vector /= np.linalg.norm(vector)
            lhs = self.apply_conjugation(self.apply_delta(self.apply_conjugation(vector)))
            worst = max(worst, float(np.linalg.norm(lhs - self.apply_delta(vector, -1.0))))
        return worst

    def commutant_residual(self, a: Operator, b: Operator) -> float:
        """||[J pi(A) J, pi(B)]|| on the doubled space."""
        a, b = as_matrix(a), as_matrix(b)
        identity = np.eye(self.dim)
        if self.dim <= DENSE_MODULAR_LIMIT:
            right = np.kron(identity, a.conj())
            left = np.kron(b, identity)
            return float(np.linalg.norm(right @ left - left @ right, 2))
        worst = 0.0
        for row in range(self.dim):
            unit = np.zeros(self.dim ** 2, dtype=complex)
            unit[row * self.dim + (row + 1) % self.dim] = 1.0
            twisted = self._commutant_action(a, unit)
            lhs = self._commutant_action(a, (b @ unit.reshape(self.dim, self.dim)).reshape(-1))
            rhs = (b @ twisted.reshape(self.dim, self.dim)).reshape(-1)
            worst = max(worst, float(np.linalg.norm(lhs - rhs)))
        return worst

    def _commutant_action(self, a: np.ndarray, vector: np.ndarray) -> np.ndarray:
        """J pi(A) J applied to a vector."""
        inner = self.apply_conjugation(vector).reshape(self.dim, self.dim)
        return self.apply_conjugation((a @ inner).reshape(-1))

    def rank(self) -> int:
        """Rank of A -> A Omega, full exactly when Omega is cyclic and separating."""
        return int(np.linalg.matrix_rank(self.root))

    def flow_residual(self, hamiltonian: Operator, beta: float, operator: Operator, t: float) -> float:
        """||sigma_{-t/beta}(pi(A)) - pi(e^{itH} A e^{-itH})||."""
        energies, basis = np.linalg.eigh(hermitian_part(hamiltonian))
        phases = np.exp(1j * t * energies)
        evolved = (basis * phases) @ basis.conj().T @ as_matrix(operator) @ (basis * phases.conj()) @ basis.conj().T
        return float(np.linalg.norm(self.modular_flow(operator, -t / beta) - evolved, 2))


def modular_data(state: State) -> ModularData:
    """Modular data of the purification of a faithful state.

    Raises:
        StateNotFaithful: If the smallest eigenvalue is below the faithfulness tolerance.
    """
    density = density_matrix(state)
    probabilities, basis = np.linalg.eigh((density + density.conj().T) / 2)
    if probabilities[0] <= FAITHFUL_TOLERANCE:
        raise StateNotFaithful(f"Smallest eigenvalue {probabilities[0]:.3e} is not above {FAITHFUL_TOLERANCE}")
    return ModularData(density, probabilities, basis)


@dataclass
class VariationalReport:
    gibbs_free_energy: float
    pressure: float
    identity_residual: float
    samples: int
    violations: int
    min_margin: float
    curvature: float


def gibbs_variational_check(phi: Interaction, beta: float, ctx: FockContext, n_samples: int,
                            rng: np.random.Generator, epsilon: float = 1e-3) -> VariationalReport:
    """Compare the Gibbs free energy with -pressure and with random states.

    The curvature entry is the second difference of f along the segment from the
    Gibbs state towards a random state, which is non-negative by convexity.
    """
    hamiltonian = local_hamiltonian(phi, ctx)
    state = gibbs(hamiltonian, beta)
    f_gibbs = free_energy_density(state, phi, beta, ctx)
    p = pressure(phi, beta, ctx)
    violations = 0
    margins = []
    for _ in range(n_samples):
        sample = random_state(ctx, rng, even=False)
        margin = free_energy_density(sample, phi, beta, ctx) - f_gibbs
        margins.append(margin)
        if margin < -1e-12:
            violations += 1
    target = random_state(ctx, rng, even=False).density
    along = [free_energy_density(ThermalState((1 - k * epsilon) * state.density + k * epsilon * target), phi, beta, ctx)
             for k in range(3)]
    curvature = (along[2] - 2 * along[1] + along[0]) / epsilon ** 2
    logger.debug(f"Variational check at beta={beta}: {violations}/{n_samples} violations")
    return VariationalReport(f_gibbs, p, abs(f_gibbs + p), n_samples, violations, min(margins, default=0.0), curvature)


def ergodicity_gap(ctx: FockContext, state: State, operator: LocalOperator, ell: int) -> float:
    """rho(A_ell* A_ell) - |rho(A_ell)|^2 for the space average A_ell over Lambda_ell.

    The value is returned unclamped; a negative one is logged as a warning.

    Raises:
        WindowTooSmall: If Lambda_ell does not fit in the window.
    """
    average = space_average(ctx, operator, ell).matrix
    density = density_matrix(state)
    second = np.einsum("ij,jk,ki->", density, average.conj().T, average).real
    first = np.einsum("ij,ji->", density, average)
    gap = float(second - abs(first) ** 2)
    if gap < -STATE_TOLERANCE:
        logger.warning(f"Negative ergodicity gap {gap:.3e} at ell={ell}; the state is not positive")
    return gap


@dataclass
class GaugeTwistDemo:
    """The three states of the gauge-twist construction and the values that separate them."""
    states: tuple[ThermalState, ThermalState, ThermalState]
    table: list[dict]
    four_mode_value: complex
    sign_residual: float
    twist_phases: tuple[complex, complex]
    separation: float


def gauge_twist_demo(ctx: FockContext) -> GaugeTwistDemo:
    """Build a product state with rho_0(a1 a2 a3 a4) != 0 and its two gauge twists.

    rho_1 = rho_0 o g_{-pi/4} and rho_2 = rho_0 o g_{pi/4} agree with -rho_0 on
    the four-mode monomial but differ on a1 a2, where they pick up e^{i pi/2}
    and e^{-i pi/2} relative to rho_0 for g_theta(a) = e^{-i theta} a.

    Raises:
        SpinSetTooSmall: If fewer than four spins are available.
    """
    if len(ctx.spins) < 4:
        raise SpinSetTooSmall(f"Gauge-twist demo needs four spins, context has {len(ctx.spins)}")
    per_site = len(ctx.spins)
    local = np.zeros(2 ** per_site, dtype=complex)
    offset = per_site - 4
    for pattern in (0b0000, 0b0011, 0b1100, 0b1111):
        local[pattern << offset] = 0.5
    vector = np.ones(1, dtype=complex)
    for _ in ctx.sites:
        vector = np.kron(vector, local)
    base = pure_state(vector)
    first = ThermalState(gauge_matrix(ctx, np.pi / 4, base.density))
    second = ThermalState(gauge_matrix(ctx, -np.pi / 4, base.density))

    generators = [annihilation(ctx, ctx.origin, spin) for spin in ctx.spins[:4]]
    four_mode = generators[0] @ generators[1] @ generators[2] @ generators[3]
    two_mode = generators[0] @ generators[1]
    table = []
    for label, monomial in (("a1 a2 a3 a4", four_mode), ("a1 a2", two_mode)):
        table.append({"monomial": label, "rho0": base.expectation(monomial), "rho1": first.expectation(monomial),
                      "rho2": second.expectation(monomial)})
    value = table[0]["rho0"]
    sign_residual = max(abs(value + table[0]["rho1"]), abs(value + table[0]["rho2"]))
    phases = (table[1]["rho1"] / table[1]["rho0"], table[1]["rho2"] / table[1]["rho0"])
    return GaugeTwistDemo((base, first, second), table, value, float(sign_residual), phases,
                          float(abs(table[1]["rho1"] - table[1]["rho2"])))


def random_even_panel(ctx: FockContext, rng: np.random.Generator, size: int) -> list[tuple[LocalOperator, LocalOperator]]:
    """Random pairs of even operators; every other pair is (A, A*)."""
    panel = []
    for index in range(size):
        a = random_local_operator(ctx, rng, Parity.EVEN)
        b = a.adjoint() if index % 2 else random_local_operator(ctx, rng, Parity.EVEN)
        panel.append((a, b))
    return panel
