"""Translation-covariant even interactions and their finite-volume Hamiltonians."""
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import chain
from typing import Iterable, Iterator, Optional

import numpy as np
from scipy import sparse

from .car import FockContext, LocalOperator, Parity, Site, as_matrix, jordan_wigner_annihilators, shift_site
from .exceptions import ModeOutOfRange, OddInteractionTerm, RangeExceedsWindow

logger = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class Factor:
    """A single generator: a*_{offset,spin} if ``dagger`` else a_{offset,spin}."""
    offset: Site
    spin: str
    dagger: bool


Monomial = tuple[Factor, ...]
Entry = tuple[tuple[Site, ...], complex, Monomial]


def monomial_adjoint(monomial: Monomial) -> Monomial:
    return tuple(Factor(factor.offset, factor.spin, not factor.dagger) for factor in reversed(monomial))


def shift_monomial(monomial: Monomial, shift: Site) -> Monomial:
    return tuple(Factor(shift_site(factor.offset, shift), factor.spin, factor.dagger) for factor in monomial)


@dataclass(frozen=True)
class Anchor:
    """The value Phi_Z of an interaction on one translation class of finite sets Z.

    ``offsets`` is Z shifted so that its lexicographically smallest point is the
    origin, and ``terms`` is a sorted tuple of (coefficient, monomial) pairs.
    """
    offsets: tuple[Site, ...]
    terms: tuple[tuple[complex, Monomial], ...]

    @property
    def size(self) -> int:
        return len(self.offsets)

    @property
    def diameter(self) -> int:
        """Largest coordinate spread of Z; a single site has diameter zero."""
        return max(max(coords) - min(coords) for coords in zip(*self.offsets))

    @property
    def spins(self) -> frozenset:
        return frozenset(factor.spin for _, monomial in self.terms for factor in monomial)


def _canonical_anchors(entries: Iterable[Entry], dimension: int) -> tuple[Anchor, ...]:
    merged: dict[tuple[Site, ...], dict[Monomial, complex]] = {}
    origin = (0,) * dimension
    for offsets, coefficient, monomial in entries:
        monomial = tuple(monomial)
        if len(monomial) % 2:
            raise OddInteractionTerm(f"Monomial of degree {len(monomial)} is odd")
        points = {tuple(point) for point in offsets} | {factor.offset for factor in monomial}
        if any(len(point) != dimension for point in points):
            raise ValueError(f"Offsets {sorted(points)} do not all have dimension {dimension}")
        if not points:
            points = {origin}
        base = min(points)
        back = tuple(-value for value in base)
        key = tuple(sorted(shift_site(point, back) for point in points))
        bucket = merged.setdefault(key, {})
        moved = shift_monomial(monomial, back)
        bucket[moved] = bucket.get(moved, 0j) + complex(coefficient)

    anchors = []
    for key in sorted(merged):
        terms = tuple((coefficient, monomial)
                      for monomial, coefficient in sorted(merged[key].items(), key=lambda item: item[0])
                      if coefficient != 0)
        if terms:
            anchors.append(Anchor(key, terms))
    return tuple(anchors)


@dataclass(frozen=True)
class Interaction:
    """A translation-covariant even interaction on Z^d in canonical form.

    Two interactions compare equal exactly when their canonical anchors do; the
    label is a display name only.
    """
    dimension: int = 1
    anchors: tuple[Anchor, ...] = ()
    label: str = field(default="", compare=False)

    @classmethod
    def from_terms(cls, entries: Iterable[Entry], dimension: int = 1, label: str = "") -> "Interaction":
        """Canonicalize (offsets, coefficient, monomial) entries into an interaction.

        Raises:
            OddInteractionTerm: If a monomial has odd degree.
        """
        return cls(dimension, _canonical_anchors(entries, dimension), label)

    @classmethod
    def zero(cls, dimension: int = 1) -> "Interaction":
        return cls(dimension, (), "0")

    def entries(self) -> Iterator[Entry]:
        for anchor in self.anchors:
            for coefficient, monomial in anchor.terms:
                yield anchor.offsets, coefficient, monomial

    @property
    def is_zero(self) -> bool:
        return not self.anchors

    @property
    def range(self) -> int:
        return max((anchor.diameter for anchor in self.anchors), default=0)

    @property
    def spins(self) -> frozenset:
        return frozenset(chain.from_iterable(anchor.spins for anchor in self.anchors))

    def adjoint(self) -> "Interaction":
        label = self.label[:-1] if self.label.endswith("*") else f"{self.label}*"
        return Interaction.from_terms(((offsets, coefficient.conjugate(), monomial_adjoint(monomial))
                                       for offsets, coefficient, monomial in self.entries()),
                                      self.dimension, label)

    def _check_dimension(self, other: "Interaction") -> None:
        if other.dimension != self.dimension:
            raise ValueError(f"Cannot combine interactions of dimension {self.dimension} and {other.dimension}")

    def __add__(self, other: "Interaction") -> "Interaction":
        self._check_dimension(other)
        return Interaction.from_terms(chain(self.entries(), other.entries()), self.dimension,
                                      f"{self.label}+{other.label}")

    def __sub__(self, other: "Interaction") -> "Interaction":
        return self + (-other)

    def __neg__(self) -> "Interaction":
        return self * -1

    def __mul__(self, scalar: complex) -> "Interaction":
        scalar = complex(scalar)
        return Interaction.from_terms(((offsets, scalar * coefficient, monomial)
                                       for offsets, coefficient, monomial in self.entries()),
                                      self.dimension, self.label)

    __rmul__ = __mul__


def _assemble(terms: Iterable[tuple[complex, Monomial]], n_modes: int, locate) -> sparse.csr_matrix:
    annihilators = jordan_wigner_annihilators(n_modes)
    dim = 2 ** n_modes
    total = sparse.csr_matrix((dim, dim), dtype=complex)
    for coefficient, monomial in terms:
        product = sparse.identity(dim, dtype=complex, format="csr")
        for factor in monomial:
            operator = annihilators[locate(factor)]
            product = product @ (operator.conj().T if factor.dagger else operator)
        total = total + coefficient * product
    return total.tocsr()


@lru_cache(maxsize=1024)
def anchor_norm(anchor: Anchor) -> float:
    """Operator norm of Phi_Z, evaluated on a patch holding just Z and the spins it uses."""
    spins = sorted(anchor.spins) or ["_"]
    modes = {(offset, spin): index
             for index, (offset, spin) in enumerate((offset, spin) for offset in anchor.offsets for spin in spins)}
    matrix = _assemble(anchor.terms, len(modes), lambda factor: modes[(factor.offset, factor.spin)])
    return float(np.linalg.norm(matrix.toarray(), 2))


@dataclass(frozen=True)
class DecayFunction:
    """F(r) = exp(-varsigma |r|) / (1 + |r|)^(d + epsilon) with the Euclidean distance."""
    varsigma: float = 0.0
    epsilon: float = 1.0
    dimension: int = 1

    def __post_init__(self):
        if self.varsigma < 0:
            raise ValueError(f"varsigma must be non-negative, got {self.varsigma}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    def __call__(self, x: Iterable[float], y: Optional[Iterable[float]] = None) -> float:
        difference = np.asarray(tuple(x), dtype=float)
        if y is not None:
            difference = difference - np.asarray(tuple(y), dtype=float)
        distance = float(np.linalg.norm(difference))
        return float(np.exp(-self.varsigma * distance) * (1.0 + distance) ** -(self.dimension + self.epsilon))

    def l1_norm(self, radius: int = 10) -> tuple[float, float]:
        """Sum of F over the cube |x|_inf <= radius, with a bound on the neglected tail.

        Returns:
            tuple[float, float]: (truncated sum, remainder bound).
        """
        axis = np.arange(-radius, radius + 1)
        grid = np.stack(np.meshgrid(*[axis] * self.dimension, indexing="ij"), axis=-1).reshape(-1, self.dimension)
        distances = np.linalg.norm(grid, axis=1)
        total = float(np.sum(np.exp(-self.varsigma * distances) * (1.0 + distances) ** -(self.dimension + self.epsilon)))
        remainder = (self.dimension * 2 ** self.dimension * np.exp(-self.varsigma * radius)
                     * (1.0 + radius) ** -self.epsilon / self.epsilon)
        return total, float(remainder)


def interaction_norm(phi: Interaction, decay: Optional[DecayFunction] = None) -> float:
    """The weighted norm sup over x, y of F(x-y)^{-1} sum over Z containing x and y of ||Phi_Z||."""
    decay = decay or DecayFunction(dimension=phi.dimension)
    weights: dict[Site, float] = defaultdict(float)
    for anchor in phi.anchors:
        norm = anchor_norm(anchor)
        for start in anchor.offsets:
            for end in anchor.offsets:
                weights[tuple(b - a for a, b in zip(start, end))] += norm
    return max((value / decay(separation) for separation, value in weights.items()), default=0.0)


def _check_fits(phi: Interaction, ctx: FockContext) -> None:
    if phi.dimension != ctx.dimension:
        raise ValueError(f"Interaction of dimension {phi.dimension} used on a window of dimension {ctx.dimension}")
    if phi.range > ctx.extent:
        raise RangeExceedsWindow(f"Interaction range {phi.range} exceeds the window extent {ctx.extent}")
    unknown = phi.spins - set(ctx.spins)
    if unknown:
        raise ModeOutOfRange(f"Interaction uses spins {sorted(unknown)} missing from {ctx.spins}")


def _place(anchor: Anchor, ctx: FockContext, shift: Site) -> sparse.csr_matrix:
    return _assemble(anchor.terms, ctx.n_modes,
                     lambda factor: ctx.mode_index(ctx.wrap(shift_site(factor.offset, shift)), factor.spin))


def _placements(anchor: Anchor, ctx: FockContext) -> Iterator[tuple[Site, frozenset]]:
    seen = set()
    for shift in ctx.sites:
        placed = frozenset(ctx.wrap(shift_site(offset, shift)) for offset in anchor.offsets)
        if placed in seen:
            continue
        seen.add(placed)
        yield shift, placed


@lru_cache(maxsize=32)
def local_hamiltonian(phi: Interaction, ctx: FockContext) -> LocalOperator:
    """H_L = sum of the distinct torus-wrapped placements of Phi_Z inside the window.

    Raises:
        RangeExceedsWindow: If the interaction range exceeds 2L+1.
    """
    _check_fits(phi, ctx)
    total = sparse.csr_matrix((ctx.fock_dim, ctx.fock_dim), dtype=complex)
    for anchor in phi.anchors:
        for shift, _ in _placements(anchor, ctx):
            total = total + _place(anchor, ctx, shift)
    logger.debug(f"Assembled H_L for '{phi.label}' on {ctx.n_modes} modes")
    support = frozenset(ctx.sites) if phi.anchors else frozenset()
    return LocalOperator(total.toarray(), support, Parity.EVEN)


@lru_cache(maxsize=32)
def energy_per_site_element(phi: Interaction, ctx: FockContext) -> LocalOperator:
    """e_Phi = sum over Z containing the origin of Phi_Z / |Z|."""
    _check_fits(phi, ctx)
    total = sparse.csr_matrix((ctx.fock_dim, ctx.fock_dim), dtype=complex)
    support = set()
    for anchor in phi.anchors:
        for offset in anchor.offsets:
            shift = tuple(-value for value in offset)
            total = total + _place(anchor, ctx, shift) / anchor.size
            support |= {ctx.wrap(shift_site(point, shift)) for point in anchor.offsets}
    return LocalOperator(total.toarray(), frozenset(support), Parity.EVEN)


def derivation(phi: Interaction, ctx: FockContext, operator: LocalOperator) -> LocalOperator:
    """delta_Phi(A) = i [H_L, A], supported on A's support and every placement touching it."""
    hamiltonian = local_hamiltonian(phi, ctx).matrix
    matrix = as_matrix(operator)
    support = set(operator.support)
    for anchor in phi.anchors:
        for _, placed in _placements(anchor, ctx):
            if placed & operator.support:
                support |= placed
    return LocalOperator(1j * (hamiltonian @ matrix - matrix @ hamiltonian), frozenset(support), operator.parity)


def monomial_operator(ctx: FockContext, monomial: Monomial, coefficient: complex = 1.0) -> LocalOperator:
    """The single operator coefficient * monomial placed at its own offsets, without wrapping.

    Raises:
        ModeOutOfRange: If a factor sits outside the window.
    """
    matrix = _assemble([(coefficient, monomial)], ctx.n_modes, lambda factor: ctx.mode_index(factor.offset, factor.spin))
    parity = Parity.ODD if len(monomial) % 2 else Parity.EVEN
    return LocalOperator(matrix.toarray(), frozenset(factor.offset for factor in monomial), parity)


def adjoint_interaction(phi: Interaction) -> Interaction:
    return phi.adjoint()


def is_self_adjoint(phi: Interaction, decay: Optional[DecayFunction] = None, tolerance: float = 1e-12) -> bool:
    return interaction_norm(phi - phi.adjoint(), decay) <= tolerance
