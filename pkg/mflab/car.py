"""Fermionic Fock space over a finite torus window of Z^d.

Modes are ordered lexicographically by (site, spin) and mode 0 is the most
significant bit of a basis index. The basis vector with occupied modes
j1 < ... < jk is a*_{j1} ... a*_{jk} applied to the vacuum, so the generators
are the usual Jordan-Wigner strings.
"""
import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property, lru_cache
from typing import Iterable, Sequence, Union

import numpy as np
from scipy import sparse

from .config import MODE_CAP, STATE_TOLERANCE
from .exceptions import ModeCapExceeded, ModeOutOfRange, WindowTooSmall

logger = logging.getLogger(__name__)

Site = tuple[int, ...]

_LOWER = sparse.csr_matrix(np.array([[0, 1], [0, 0]], dtype=complex))
_STRING = sparse.csr_matrix(np.diag([1.0, -1.0]).astype(complex))
_IDENTITY = sparse.identity(2, dtype=complex, format="csr")


class Parity(Enum):
    """Grading of an operator under conjugation by (-1)^N."""
    EVEN = "even"
    ODD = "odd"
    MIXED = "mixed"

    def __mul__(self, other: "Parity") -> "Parity":
        if Parity.MIXED in (self, other):
            return Parity.MIXED
        return Parity.EVEN if self is other else Parity.ODD


def as_site(site: Union[int, Iterable[int]], dimension: int) -> Site:
    """Normalize an integer or coordinate sequence to a site tuple."""
    if isinstance(site, (int, np.integer)):
        coordinates = (int(site),)
    else:
        coordinates = tuple(int(value) for value in site)
    if len(coordinates) != dimension:
        raise ValueError(f"Site {coordinates} does not have dimension {dimension}")
    return coordinates


def shift_site(site: Site, shift: Site) -> Site:
    return tuple(a + b for a, b in zip(site, shift))


@lru_cache(maxsize=None)
def jordan_wigner_annihilators(n_modes: int) -> tuple[sparse.csr_matrix, ...]:
    """Sparse annihilators a_0, ..., a_{n-1} on the 2**n dimensional Fock space."""
    annihilators = []
    for mode in range(n_modes):
        factors = [_STRING] * mode + [_LOWER] + [_IDENTITY] * (n_modes - mode - 1)
        operator = factors[0]
        for factor in factors[1:]:
            operator = sparse.kron(operator, factor, format="csr")
        annihilators.append(operator)
    return tuple(annihilators)


def sparse_generator(n_modes: int, mode: int, dagger: bool = False) -> sparse.csr_matrix:
    operator = jordan_wigner_annihilators(n_modes)[mode]
    return operator.conj().T.tocsr() if dagger else operator


@lru_cache(maxsize=64)
def _dense_annihilator(n_modes: int, mode: int) -> np.ndarray:
    matrix = jordan_wigner_annihilators(n_modes)[mode].toarray()
    matrix.setflags(write=False)
    return matrix


@lru_cache(maxsize=None)
def occupation_table(n_modes: int) -> np.ndarray:
    """Row b holds the occupation numbers of basis vector b, mode 0 first."""
    index = np.arange(2 ** n_modes, dtype=np.int64)
    shifts = np.arange(n_modes - 1, -1, -1, dtype=np.int64)
    table = (index[:, None] >> shifts[None, :]) & 1
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def number_diagonal(n_modes: int) -> np.ndarray:
    """Diagonal of the total number operator N."""
    diagonal = occupation_table(n_modes).sum(axis=1).astype(float)
    diagonal.setflags(write=False)
    return diagonal


def _modes_of_dimension(dim: int) -> int:
    if dim < 1 or dim & (dim - 1):
        raise ValueError(f"Matrix dimension {dim} is not a power of two")
    return dim.bit_length() - 1


@lru_cache(maxsize=8)
def _odd_mask(dim: int) -> np.ndarray:
    parities = number_diagonal(_modes_of_dimension(dim)).astype(np.int64) % 2
    mask = np.not_equal.outer(parities, parities)
    mask.setflags(write=False)
    return mask


def classify_parity(matrix: np.ndarray, tolerance: float = STATE_TOLERANCE) -> Parity:
    """Return the parity of a Fock-space matrix; the zero matrix counts as even."""
    matrix = np.asarray(matrix)
    mask = _odd_mask(matrix.shape[0])
    odd_part = float(np.abs(matrix[mask]).max(initial=0.0))
    even_part = float(np.abs(matrix[~mask]).max(initial=0.0))
    scale = max(odd_part, even_part, 1.0)
    if odd_part <= tolerance * scale:
        return Parity.EVEN
    if even_part <= tolerance * scale:
        return Parity.ODD
    return Parity.MIXED


@dataclass(frozen=True, eq=False)
class FockContext:
    """The torus window Lambda_L of Z^d together with a spin set and its Fock space.

    Attributes:
        dimension (int): Lattice dimension d.
        half_width (int): L, so the window is {-L, ..., L}^d.
        spins (tuple[str, ...]): Spin labels, in mode order.
        sites (tuple[Site, ...]): Window sites in lexicographic order.
        modes (tuple[tuple[Site, str], ...]): (site, spin) pairs in mode order.
    """
    dimension: int
    half_width: int
    spins: tuple[str, ...]
    sites: tuple[Site, ...]
    modes: tuple[tuple[Site, str], ...]

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def fock_dim(self) -> int:
        return 2 ** self.n_modes

    @property
    def volume(self) -> int:
        return len(self.sites)

    @property
    def extent(self) -> int:
        return 2 * self.half_width + 1

    @property
    def origin(self) -> Site:
        return (0,) * self.dimension

    @cached_property
    def _mode_lookup(self) -> dict:
        return {mode: index for index, mode in enumerate(self.modes)}

    def mode_index(self, site: Union[int, Iterable[int]], spin: str) -> int:
        key = (as_site(site, self.dimension), spin)
        try:
            return self._mode_lookup[key]
        except KeyError:
            raise ModeOutOfRange(f"Mode {key} is not in the window of half-width {self.half_width} "
                                 f"with spins {self.spins}") from None

    def wrap(self, site: Iterable[int]) -> Site:
        """Reduce a site of Z^d onto the torus window."""
        return tuple(((value + self.half_width) % self.extent) - self.half_width for value in site)

    def box(self, ell: int) -> tuple[Site, ...]:
        """Sites of Lambda_ell, the centered cube of half-width ell."""
        if ell < 0 or ell > self.half_width:
            raise WindowTooSmall(f"Box of half-width {ell} does not fit in a window of half-width {self.half_width}")
        return tuple(site for site in self.sites if max(abs(value) for value in site) <= ell)

    def translations(self) -> tuple[Site, ...]:
        return self.sites


def build_fock_context(dimension: int = 1, half_width: int = 0, spins: Sequence[str] = ("up", "down"),
                       mode_cap: int = None) -> FockContext:
    """Build the Fock context of the window {-L, ..., L}^d with the given spins.

    Raises:
        ModeCapExceeded: If (2L+1)^d * |spins| exceeds the mode cap.
    """
    spins = tuple(spins)
    if dimension < 1:
        raise ValueError(f"Lattice dimension must be positive, got {dimension}")
    if half_width < 0:
        raise ValueError(f"Half-width must be non-negative, got {half_width}")
    if not spins or len(set(spins)) != len(spins):
        raise ValueError(f"Spin labels must be distinct and non-empty, got {spins}")
    cap = MODE_CAP if mode_cap is None else mode_cap
    n_modes = (2 * half_width + 1) ** dimension * len(spins)
    if n_modes > cap:
        raise ModeCapExceeded(f"Window d={dimension}, L={half_width} with {len(spins)} spins needs "
                              f"{n_modes} modes, cap is {cap}")
    sites = tuple(itertools.product(range(-half_width, half_width + 1), repeat=dimension))
    modes = tuple((site, spin) for site in sites for spin in spins)
    logger.debug(f"Built Fock context d={dimension}, L={half_width}, {n_modes} modes")
    return FockContext(dimension, half_width, spins, sites, modes)


@dataclass(frozen=True, eq=False)
class LocalOperator:
    """A dense Fock-space matrix with its site support and parity."""
    matrix: np.ndarray
    support: frozenset
    parity: Parity

    def __post_init__(self):
        self.matrix.setflags(write=False)

    @classmethod
    def from_matrix(cls, matrix, support: Iterable[Site] = (), parity: Parity = None) -> "LocalOperator":
        matrix = np.array(matrix, dtype=complex)
        return cls(matrix, frozenset(support), classify_parity(matrix) if parity is None else parity)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def adjoint(self) -> "LocalOperator":
        return LocalOperator(np.ascontiguousarray(self.matrix.conj().T), self.support, self.parity)

    def norm(self) -> float:
        """Operator (spectral) norm."""
        return float(np.linalg.norm(self.matrix, 2))

    def hermiticity_residual(self) -> float:
        return float(np.linalg.norm(self.matrix - self.matrix.conj().T))

    def is_hermitian(self, tolerance: float = STATE_TOLERANCE) -> bool:
        return self.hermiticity_residual() <= tolerance * max(1.0, float(np.linalg.norm(self.matrix)))

    def _sum_parity(self, other: "LocalOperator", matrix: np.ndarray) -> Parity:
        if self.parity is other.parity and self.parity is not Parity.MIXED:
            return self.parity
        return classify_parity(matrix)

    def __add__(self, other: "LocalOperator") -> "LocalOperator":
        matrix = self.matrix + other.matrix
        return LocalOperator(matrix, self.support | other.support, self._sum_parity(other, matrix))

    def __sub__(self, other: "LocalOperator") -> "LocalOperator":
        matrix = self.matrix - other.matrix
        return LocalOperator(matrix, self.support | other.support, self._sum_parity(other, matrix))

    def __neg__(self) -> "LocalOperator":
        return LocalOperator(-self.matrix, self.support, self.parity)

    def __mul__(self, scalar: complex) -> "LocalOperator":
        return LocalOperator(self.matrix * complex(scalar), self.support, self.parity)

    __rmul__ = __mul__

    def __truediv__(self, scalar: complex) -> "LocalOperator":
        return LocalOperator(self.matrix / complex(scalar), self.support, self.parity)

    def __matmul__(self, other: "LocalOperator") -> "LocalOperator":
        matrix = self.matrix @ other.matrix
        parity = self.parity * other.parity
        if parity is Parity.MIXED:
            parity = classify_parity(matrix)
        return LocalOperator(matrix, self.support | other.support, parity)

    def commutator(self, other: "LocalOperator") -> "LocalOperator":
        return self @ other - other @ self

    def anticommutator(self, other: "LocalOperator") -> "LocalOperator":
        return self @ other + other @ self


def as_matrix(operator: Union[LocalOperator, np.ndarray]) -> np.ndarray:
    if isinstance(operator, LocalOperator):
        return operator.matrix
    return np.asarray(operator, dtype=complex)


def identity(ctx: FockContext) -> LocalOperator:
    return LocalOperator(np.eye(ctx.fock_dim, dtype=complex), frozenset(), Parity.EVEN)


def zero(ctx: FockContext) -> LocalOperator:
    return LocalOperator(np.zeros((ctx.fock_dim, ctx.fock_dim), dtype=complex), frozenset(), Parity.EVEN)


def annihilation(ctx: FockContext, site: Union[int, Iterable[int]], spin: str) -> LocalOperator:
    """The annihilator a_{x,s} on the window's Fock space."""
    site = as_site(site, ctx.dimension)
    matrix = _dense_annihilator(ctx.n_modes, ctx.mode_index(site, spin))
    return LocalOperator(matrix, frozenset({site}), Parity.ODD)


def creation(ctx: FockContext, site: Union[int, Iterable[int]], spin: str) -> LocalOperator:
    return annihilation(ctx, site, spin).adjoint()


def number(ctx: FockContext, site: Union[int, Iterable[int]], spin: str) -> LocalOperator:
    site = as_site(site, ctx.dimension)
    column = occupation_table(ctx.n_modes)[:, ctx.mode_index(site, spin)]
    return LocalOperator(np.diag(column.astype(complex)), frozenset({site}), Parity.EVEN)


def number_operator(ctx: FockContext) -> LocalOperator:
    return LocalOperator(np.diag(number_diagonal(ctx.n_modes).astype(complex)), frozenset(ctx.sites), Parity.EVEN)


def parity_unitary(ctx: FockContext) -> LocalOperator:
    """(-1)^N, whose conjugation is the gauge transformation at theta = pi."""
    signs = 1.0 - 2.0 * (number_diagonal(ctx.n_modes) % 2)
    return LocalOperator(np.diag(signs.astype(complex)), frozenset(ctx.sites), Parity.EVEN)


def gauge_matrix(ctx: FockContext, theta: float, matrix: np.ndarray) -> np.ndarray:
    """e^{i theta N} M e^{-i theta N}."""
    phases = np.exp(1j * theta * number_diagonal(ctx.n_modes))
    return phases[:, None] * as_matrix(matrix) * phases.conj()[None, :]


def gauge_automorphism(ctx: FockContext, theta: float, operator: LocalOperator) -> LocalOperator:
    """The gauge automorphism g_theta, which sends a_{x,s} to e^{-i theta} a_{x,s}."""
    return LocalOperator(gauge_matrix(ctx, theta, operator.matrix), operator.support, operator.parity)


@lru_cache(maxsize=256)
def permutation_action(n_modes: int, images: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Basis action of the unitary U with U a_j U* = a_{images[j]}.

    Returns:
        tuple[np.ndarray, np.ndarray]: (target, sign) with U|b> = sign[b] |target[b]>.
    """
    occupations = occupation_table(n_modes)
    shifts = n_modes - 1 - np.asarray(images, dtype=np.int64)
    target = (occupations << shifts[None, :]).sum(axis=1)
    inversions = np.zeros(len(occupations), dtype=np.int64)
    for first, second in itertools.combinations(range(n_modes), 2):
        if images[first] > images[second]:
            inversions += occupations[:, first] * occupations[:, second]
    sign = 1.0 - 2.0 * (inversions % 2)
    target.setflags(write=False)
    sign.setflags(write=False)
    return target, sign


def apply_permutation(matrix: np.ndarray, action: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """U M U* for the mode permutation unitary U described by ``action``."""
    target, sign = action
    matrix = as_matrix(matrix)
    moved = np.empty_like(matrix)
    if matrix.ndim == 1:
        moved[target] = sign * matrix
    else:
        moved[np.ix_(target, target)] = sign[:, None] * matrix * sign[None, :]
    return moved


@lru_cache(maxsize=256)
def _translation_action(ctx: FockContext, shift: Site) -> tuple[np.ndarray, np.ndarray]:
    images = tuple(ctx.mode_index(ctx.wrap(shift_site(site, shift)), spin) for site, spin in ctx.modes)
    return permutation_action(ctx.n_modes, images)


def translate(ctx: FockContext, operator: LocalOperator, shift: Union[int, Iterable[int]]) -> LocalOperator:
    """The torus translation alpha_x, sending a_{y,s} to a_{y+x mod torus,s}."""
    shift = ctx.wrap(as_site(shift, ctx.dimension))
    matrix = apply_permutation(operator.matrix, _translation_action(ctx, shift))
    support = frozenset(ctx.wrap(shift_site(site, shift)) for site in operator.support)
    return LocalOperator(matrix, support, operator.parity)


def space_average(ctx: FockContext, operator: LocalOperator, ell: int) -> LocalOperator:
    """A_ell = |Lambda_ell|^{-1} sum over x in Lambda_ell of alpha_x(A)."""
    box = ctx.box(ell)
    total = np.zeros_like(operator.matrix)
    support = set()
    for shift in box:
        translated = translate(ctx, operator, shift)
        total += translated.matrix
        support |= translated.support
    return LocalOperator(total / len(box), frozenset(support), operator.parity)


def _front_action(ctx: FockContext, sites: Iterable[Site]) -> tuple[tuple[np.ndarray, np.ndarray], int]:
    chosen = {as_site(site, ctx.dimension) for site in sites}
    missing = chosen - set(ctx.sites)
    if missing:
        raise WindowTooSmall(f"Sites {sorted(missing)} are outside the window of half-width {ctx.half_width}")
    kept = [index for index, (site, _) in enumerate(ctx.modes) if site in chosen]
    rest = [index for index, (site, _) in enumerate(ctx.modes) if site not in chosen]
    images = [0] * ctx.n_modes
    for position, index in enumerate(kept + rest):
        images[index] = position
    return permutation_action(ctx.n_modes, tuple(images)), len(kept)


def reduced_density(ctx: FockContext, density: np.ndarray, sites: Iterable[Site]) -> np.ndarray:
    """Partial trace of a Fock-space matrix onto the modes of ``sites``.

    The block's modes are first moved to the front in their original order by a
    mode permutation unitary, so the result is expressed in the block's own
    Jordan-Wigner basis.
    """
    action, kept = _front_action(ctx, sites)
    moved = apply_permutation(as_matrix(density), action)
    kept_dim, rest_dim = 2 ** kept, 2 ** (ctx.n_modes - kept)
    return np.einsum("ajbj->ab", moved.reshape(kept_dim, rest_dim, kept_dim, rest_dim))


def local_part(ctx: FockContext, operator: Union[LocalOperator, np.ndarray], sites: Iterable[Site]) -> np.ndarray:
    """Normalized partial trace, the block part of an operator under the tracial state."""
    sites = list(sites)
    reduced = reduced_density(ctx, as_matrix(operator), sites)
    return reduced / (ctx.fock_dim // reduced.shape[0])


def random_local_operator(ctx: FockContext, rng: np.random.Generator, parity: Parity = Parity.EVEN,
                          hermitian: bool = False) -> LocalOperator:
    """Complex Gaussian operator of the given parity, scaled to operator norm one."""
    dim = ctx.fock_dim
    matrix = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    if hermitian:
        matrix = matrix + matrix.conj().T
    if parity is Parity.EVEN:
        matrix[_odd_mask(dim)] = 0.0
    elif parity is Parity.ODD:
        matrix[~_odd_mask(dim)] = 0.0
    matrix /= np.linalg.norm(matrix, 2)
    return LocalOperator(matrix, frozenset(ctx.sites), parity)
