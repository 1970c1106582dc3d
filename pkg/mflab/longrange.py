"""Mean-field (long-range) models as finitely supported signed measures over interactions."""
import logging
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from .car import FockContext, LocalOperator, Parity, build_fock_context, reduced_density, space_average
from .exceptions import NonHermitian, WindowTooSmall
from .interactions import (DecayFunction, Interaction, energy_per_site_element, interaction_norm, is_self_adjoint,
                           local_hamiltonian)
from .thermostate import (State, VariationalReport, density_matrix, entropy_density, gibbs, pressure_of,
                          random_state)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeanFieldTerm:
    """One atom gamma * delta_Psi of the measure."""
    interaction: Interaction
    weight: float


@dataclass(frozen=True, eq=False)
class LongRangeModel:
    """A base interaction Phi together with mean-field terms (Psi_k, gamma_k).

    Attributes:
        base (Interaction): Self-adjoint short-range part.
        terms (tuple[MeanFieldTerm, ...]): Unit-norm interactions with nonzero weights.
        decay (DecayFunction): Decay function of the interaction norm.
        partners (tuple[int, ...]): Index of the term holding Psi_k* for each k.
    """
    base: Interaction
    terms: tuple[MeanFieldTerm, ...]
    decay: DecayFunction
    partners: tuple[int, ...] = field(default=())

    @property
    def dimension(self) -> int:
        return self.base.dimension

    @property
    def size(self) -> int:
        return len(self.terms)

    @property
    def weights(self) -> np.ndarray:
        return np.array([term.weight for term in self.terms], dtype=float)

    @property
    def interactions(self) -> tuple[Interaction, ...]:
        return tuple(term.interaction for term in self.terms)

    @cached_property
    def norm(self) -> float:
        """||m|| = ||Phi||_W + sum |gamma_k|."""
        return interaction_norm(self.base, self.decay) + float(np.sum(np.abs(self.weights)))

    def with_weights(self, scale: float) -> "LongRangeModel":
        """The same model with every mean-field weight multiplied by ``scale``."""
        terms = tuple(MeanFieldTerm(term.interaction, term.weight * scale) for term in self.terms)
        return LongRangeModel(self.base, terms, self.decay, self.partners)


def _partner_table(terms: Sequence[MeanFieldTerm], tolerance: float = 1e-12) -> list[Optional[int]]:
    """Index of a term equal to Psi_k* as an interaction, with the same weight."""
    table = []
    for term in terms:
        adjoint = term.interaction.adjoint()
        table.append(next((j for j, other in enumerate(terms)
                           if np.isclose(other.weight, term.weight, rtol=tolerance, atol=0.0)
                           and interaction_norm(other.interaction - adjoint) <= tolerance), None))
    return table


def build_long_range_model(base: Interaction, terms: Iterable[MeanFieldTerm], decay: Optional[DecayFunction] = None,
                           normalize: bool = True, symmetrize: bool = True) -> LongRangeModel:
    """Assemble a long-range model.

    Each Psi_k is rescaled to unit norm with gamma_k * ||Psi_k||^2, which leaves
    U_L^m unchanged. A term whose adjoint is missing gets the partner (Psi_k*, gamma_k)
    appended, with a warning.

    Raises:
        NonHermitian: If the base interaction is not self-adjoint.
    """
    decay = decay or DecayFunction(dimension=base.dimension)
    if not is_self_adjoint(base, decay):
        raise NonHermitian(f"Base interaction '{base.label}' is not self-adjoint")
    prepared = []
    for term in terms:
        if term.interaction.is_zero:
            raise ValueError("Mean-field term with a zero interaction")
        if term.weight == 0:
            continue
        if term.interaction.dimension != base.dimension:
            raise ValueError(f"Term '{term.interaction.label}' has dimension {term.interaction.dimension}, "
                             f"base has {base.dimension}")
        if normalize:
            scale = interaction_norm(term.interaction, decay)
            rescaled = Interaction(base.dimension, (term.interaction * (1.0 / scale)).anchors, term.interaction.label)
            term = MeanFieldTerm(rescaled, float(term.weight) * scale ** 2)
        prepared.append(term)

    if symmetrize:
        for k, partner in enumerate(_partner_table(prepared)):
            if partner is None:
                term = prepared[k]
                logger.warning(f"Measure is not self-adjoint, adding the adjoint of '{term.interaction.label}' "
                               f"with weight {term.weight}")
                prepared.append(MeanFieldTerm(term.interaction.adjoint(), term.weight))
    partners = tuple(-1 if j is None else j for j in _partner_table(prepared))
    return LongRangeModel(base, tuple(prepared), decay, partners)


@dataclass
class HahnSplit:
    """Positive (repulsive) and negative (attractive) parts of the measure."""
    repulsive: tuple[int, ...]
    attractive: tuple[int, ...]
    repulsive_mass: float
    attractive_mass: float

    @property
    def purely_attractive(self) -> bool:
        return not self.repulsive

    @property
    def purely_repulsive(self) -> bool:
        return not self.attractive

    @property
    def total_mass(self) -> float:
        return self.repulsive_mass + self.attractive_mass


def hahn_split(model: LongRangeModel) -> HahnSplit:
    weights = model.weights
    repulsive = tuple(int(k) for k in np.flatnonzero(weights > 0))
    attractive = tuple(int(k) for k in np.flatnonzero(weights < 0))
    return HahnSplit(repulsive, attractive, float(weights[list(repulsive)].sum()),
                     float(-weights[list(attractive)].sum()))


@lru_cache(maxsize=32)
def term_hamiltonians(model: LongRangeModel, ctx: FockContext) -> tuple[LocalOperator, ...]:
    """U_L^{Psi_k} for every term, in term order."""
    return tuple(local_hamiltonian(term.interaction, ctx) for term in model.terms)


@lru_cache(maxsize=32)
def long_range_hamiltonian(model: LongRangeModel, ctx: FockContext) -> LocalOperator:
    """U_L^m = U_L^Phi + |Lambda_L|^{-1} sum_k gamma_k (U_L^{Psi_k})* U_L^{Psi_k}.

    Raises:
        RangeExceedsWindow: If any interaction reaches beyond the window.
    """
    base = local_hamiltonian(model.base, ctx)
    if not model.terms:
        return base
    matrix = base.matrix.copy()
    for term, hamiltonian in zip(model.terms, term_hamiltonians(model, ctx)):
        matrix += term.weight * (hamiltonian.matrix.conj().T @ hamiltonian.matrix) / ctx.volume
    return LocalOperator(matrix, frozenset(ctx.sites), Parity.EVEN)


def energy_bound(model: LongRangeModel, ctx: FockContext) -> float:
    """|Lambda_L| * ||F||_1 * ||m||, an upper bound on ||U_L^m||."""
    total, remainder = model.decay.l1_norm(max(10 * ctx.half_width, 10))
    return ctx.volume * (total + remainder) * model.norm


def space_average_summands(model: LongRangeModel, state: State, ell: int, ctx: FockContext) -> list[float]:
    """rho(|(e_{Psi_k})_ell|^2) for each term, before weighting."""
    density = density_matrix(state)
    summands = []
    for term in model.terms:
        average = space_average(ctx, energy_per_site_element(term.interaction, ctx), ell).matrix
        summands.append(float(np.einsum("ij,jk,ki->", density, average.conj().T, average).real))
    return summands


def space_avg_functional(model: LongRangeModel, state: State, ell: int, ctx: FockContext) -> float:
    """Delta_{a,ell}(rho) = sum_k gamma_k rho(|(e_{Psi_k})_ell|^2)."""
    return float(np.dot(model.weights, space_average_summands(model, state, ell, ctx))) if model.terms else 0.0


def pressure_lr(model: LongRangeModel, beta: float, ctx: FockContext) -> float:
    return pressure_of(long_range_hamiltonian(model, ctx), beta, ctx.volume)


def lr_free_energy(model: LongRangeModel, state: State, beta: float, ell: int, ctx: FockContext) -> float:
    """Delta_{a,ell}(rho) + rho(U_L^Phi)/|Lambda_L| - s(rho)/beta."""
    base = local_hamiltonian(model.base, ctx).matrix
    energy = float(np.einsum("ij,ji->", density_matrix(state), base).real) / ctx.volume
    return space_avg_functional(model, state, ell, ctx) + energy - entropy_density(state, ctx) / beta


@dataclass
class WindowTrace:
    half_widths: tuple[int, ...]
    ell: int
    densities: list[np.ndarray]
    distances: np.ndarray

    def consecutive(self) -> list[float]:
        return [float(self.distances[i, i + 1]) for i in range(len(self.half_widths) - 1)]


def trace_distance(first: np.ndarray, second: np.ndarray) -> float:
    difference = first - second
    return float(np.sum(np.abs(np.linalg.eigvalsh((difference + difference.conj().T) / 2))))


def gibbs_window_trace(model: LongRangeModel, beta: float, half_widths: Sequence[int], ell: int,
                       spins: Sequence[str] = ("up", "down")) -> WindowTrace:
    """Restrict Gibbs(U_L^m, beta) to Lambda_ell for each L and tabulate trace-norm distances.

    Raises:
        WindowTooSmall: If ell exceeds the smallest half-width.
    """
    half_widths = tuple(half_widths)
    if not half_widths or ell > min(half_widths):
        raise WindowTooSmall(f"Window Lambda_{ell} does not fit in every window of {half_widths}")
    densities = []
    for half_width in half_widths:
        ctx = build_fock_context(model.dimension, half_width, spins)
        state = gibbs(long_range_hamiltonian(model, ctx), beta)
        densities.append(reduced_density(ctx, state.density, ctx.box(ell)))
        logger.debug(f"Gibbs window trace: reduced L={half_width} to ell={ell}")
    count = len(densities)
    distances = np.zeros((count, count))
    for i in range(count):
        for j in range(i + 1, count):
            distances[i, j] = distances[j, i] = trace_distance(densities[i], densities[j])
    return WindowTrace(half_widths, ell, densities, distances)


def lr_variational_check(model: LongRangeModel, beta: float, ctx: FockContext, n_samples: int,
                         rng: np.random.Generator, epsilon: float = 1e-3) -> VariationalReport:
    """The Gibbs variational principle for U_L^m: rho(U_L^m)/|Lambda_L| - s(rho)/beta >= -P_L^m.

    The curvature is the second difference of the free energy along the segment
    from the Gibbs state towards one more random state.
    """
    hamiltonian = long_range_hamiltonian(model, ctx).matrix

    def free_energy(density: np.ndarray) -> float:
        energy = float(np.einsum("ij,ji->", density, hamiltonian).real) / ctx.volume
        return energy - entropy_density(density, ctx) / beta

    state = gibbs(hamiltonian, beta)
    f_gibbs = free_energy(state.density)
    p = pressure_lr(model, beta, ctx)
    margins = [free_energy(random_state(ctx, rng, even=False).density) - f_gibbs for _ in range(n_samples)]
    violations = sum(margin < -1e-12 for margin in margins)
    target = random_state(ctx, rng, even=False).density
    along = [free_energy((1 - k * epsilon) * state.density + k * epsilon * target) for k in range(3)]
    curvature = (along[2] - 2 * along[1] + along[0]) / epsilon ** 2
    logger.debug(f"Long-range variational check at beta={beta}: {violations}/{n_samples} violations")
    return VariationalReport(f_gibbs, p, abs(f_gibbs + p), n_samples, violations, min(margins, default=0.0),
                             curvature)
