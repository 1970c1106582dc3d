"""Interaction documents and ready-made models.

Monomials are written as space-separated generators ``adag(x1,...,xd;spin)``
and ``a(x1,...,xd;spin)``; the string ``1`` is the identity monomial.
Coefficients are complex literals such as ``-1.5`` or ``(0.5+2j)``.
"""
import re
from fractions import Fraction
from typing import Any, Optional, Sequence

from .exceptions import ConfigInvalid, MonomialSyntaxError
from .interactions import DecayFunction, Factor, Interaction, Monomial
from .longrange import LongRangeModel, MeanFieldTerm, build_long_range_model

_FACTOR = re.compile(r"(adag|a)\(\s*([-+]?\d+(?:\s*,\s*[-+]?\d+)*)\s*;\s*([A-Za-z0-9_]+)\s*\)")


def parse_monomial(text: str, dimension: int = 1) -> Monomial:
    """Parse a monomial string.

    Raises:
        MonomialSyntaxError: If the string does not follow the generator grammar.
    """
    text = text.strip()
    if text == "1":
        return ()
    factors = []
    position = 0
    for match in _FACTOR.finditer(text):
        if text[position:match.start()].strip():
            raise MonomialSyntaxError(f"Unexpected text {text[position:match.start()].strip()!r} in {text!r}")
        offset = tuple(int(value) for value in match.group(2).split(","))
        if len(offset) != dimension:
            raise MonomialSyntaxError(f"Offset {offset} in {text!r} does not have dimension {dimension}")
        factors.append(Factor(offset, match.group(3), match.group(1) == "adag"))
        position = match.end()
    if not factors or text[position:].strip():
        raise MonomialSyntaxError(f"Cannot parse monomial {text!r}")
    return tuple(factors)


def format_monomial(monomial: Monomial) -> str:
    if not monomial:
        return "1"
    return " ".join(f"{'adag' if factor.dagger else 'a'}({','.join(str(v) for v in factor.offset)};{factor.spin})"
                    for factor in monomial)


def parse_coefficient(value: Any) -> complex:
    if isinstance(value, str):
        return complex(value.replace(" ", ""))
    return complex(value)


def format_coefficient(value: complex) -> str:
    value = complex(value)
    return repr(value.real) if value.imag == 0 else repr(value)


def parse_interaction(document: dict, dimension: int = 1) -> Interaction:
    """Build an interaction from its document form.

    Args:
        document (dict): ``{"label": str, "anchors": [{"offsets": [...], "terms": [{"monomial": str,
            "coefficient": ...}]}]}``. Offsets may be omitted; the monomial's own sites are always included.
        dimension (int): Lattice dimension.

    Returns:
        Interaction: The canonicalized interaction.

    Raises:
        ConfigInvalid: With the path of the offending field.
    """
    if not isinstance(document, dict):
        raise ConfigInvalid("", "interaction must be a mapping")
    entries = []
    for i, anchor in enumerate(document.get("anchors") or []):
        try:
            offsets = tuple(_parse_offset(offset, dimension) for offset in anchor.get("offsets") or [])
        except (TypeError, ValueError) as e:
            raise ConfigInvalid(f"anchors[{i}].offsets", str(e)) from None
        for j, term in enumerate(anchor.get("terms") or []):
            path = f"anchors[{i}].terms[{j}]"
            try:
                monomial = parse_monomial(str(term["monomial"]), dimension)
                coefficient = parse_coefficient(term.get("coefficient", 1.0))
            except KeyError:
                raise ConfigInvalid(f"{path}.monomial", "missing") from None
            except (MonomialSyntaxError, TypeError, ValueError) as e:
                raise ConfigInvalid(path, str(e)) from None
            entries.append((offsets, coefficient, monomial))
    try:
        return Interaction.from_terms(entries, dimension, str(document.get("label", "")))
    except Exception as e:
        raise ConfigInvalid("anchors", str(e)) from None


def _parse_offset(value: Any, dimension: int) -> tuple[int, ...]:
    offset = (int(value),) if isinstance(value, int) else tuple(int(v) for v in value)
    if len(offset) != dimension:
        raise ValueError(f"offset {offset} does not have dimension {dimension}")
    return offset


def format_interaction(phi: Interaction) -> dict:
    """Document form of an interaction; ``parse_interaction`` inverts it."""
    return {
        "label": phi.label,
        "dimension": phi.dimension,
        "anchors": [
            {
                "offsets": [list(offset) for offset in anchor.offsets],
                "terms": [{"monomial": format_monomial(monomial), "coefficient": format_coefficient(coefficient)}
                          for coefficient, monomial in anchor.terms],
            }
            for anchor in phi.anchors
        ],
    }


def _origin(dimension: int) -> tuple[int, ...]:
    return (0,) * dimension


def number_term(spin: str, coefficient: complex = 1.0, dimension: int = 1) -> Interaction:
    origin = _origin(dimension)
    return Interaction.from_terms([((), coefficient, (Factor(origin, spin, True), Factor(origin, spin, False)))],
                                  dimension, f"n_{spin}")


def chemical_potential(mu: float, spins: Sequence[str] = ("up", "down"), dimension: int = 1) -> Interaction:
    """Phi_{x} = -mu sum_s n_{x,s}."""
    phi = Interaction.zero(dimension)
    for spin in spins:
        phi = phi + number_term(spin, -mu, dimension)
    return Interaction(dimension, phi.anchors, f"mu={mu}")


def hopping(t: float, spins: Sequence[str] = ("up", "down"), dimension: int = 1) -> Interaction:
    """Nearest-neighbour hopping -t (a*_x a_y + a*_y a_x) along every lattice axis."""
    origin = _origin(dimension)
    entries = []
    for axis in range(dimension):
        step = tuple(1 if k == axis else 0 for k in range(dimension))
        for spin in spins:
            entries.append(((), -t, (Factor(origin, spin, True), Factor(step, spin, False))))
            entries.append(((), -t, (Factor(step, spin, True), Factor(origin, spin, False))))
    return Interaction.from_terms(entries, dimension, f"hopping t={t}")


def hubbard(u: float, up: str = "up", down: str = "down", dimension: int = 1) -> Interaction:
    """On-site repulsion u n_up n_down."""
    origin = _origin(dimension)
    monomial = (Factor(origin, up, True), Factor(origin, up, False), Factor(origin, down, True), Factor(origin, down, False))
    return Interaction.from_terms([((), u, monomial)], dimension, f"hubbard u={u}")


def pair_annihilation(up: str = "up", down: str = "down", dimension: int = 1) -> Interaction:
    """The Cooper pair a_{x,up} a_{x,down}."""
    origin = _origin(dimension)
    return Interaction.from_terms([((), 1.0, (Factor(origin, up, False), Factor(origin, down, False)))],
                                  dimension, "pair")


def bcs_model(coupling: float, mu: float = 0.0, hopping_amplitude: float = 0.0, spins: Sequence[str] = ("up", "down"),
              dimension: int = 1, decay: Optional[DecayFunction] = None) -> LongRangeModel:
    """Strong-coupling BCS: base -mu N (+ hopping), one attractive pair term with weight -coupling."""
    base = chemical_potential(mu, spins, dimension)
    if hopping_amplitude:
        base = base + hopping(hopping_amplitude, spins, dimension)
    base = Interaction(dimension, base.anchors, "bcs base")
    pair = pair_annihilation(spins[0], spins[1], dimension)
    return build_long_range_model(base, [MeanFieldTerm(pair, -coupling)], decay)


def density_model(weight: float, field: float = 0.0, spin: str = "up", dimension: int = 1,
                  decay: Optional[DecayFunction] = None) -> LongRangeModel:
    """Mean-field density model: base field * n_spin, one self-adjoint term n_spin with the given weight."""
    base = number_term(spin, field, dimension) if field else Interaction.zero(dimension)
    return build_long_range_model(base, [MeanFieldTerm(number_term(spin, 1.0, dimension), weight)], decay)


def hubbard_model(u: float, t: float = 0.0, mu: float = 0.0, spins: Sequence[str] = ("up", "down"),
                  dimension: int = 1, decay: Optional[DecayFunction] = None) -> LongRangeModel:
    base = hubbard(u, spins[0], spins[1], dimension) + chemical_potential(mu, spins, dimension)
    if t:
        base = base + hopping(t, spins, dimension)
    return build_long_range_model(Interaction(dimension, base.anchors, "hubbard"), [], decay)


def _parse_weight(value: Any) -> float:
    return float(Fraction(str(value)))


def parse_model(document: dict, dimension: int = 1, spins: Sequence[str] = ("up", "down"),
                decay: Optional[DecayFunction] = None) -> LongRangeModel:
    """Build a long-range model from a ``model`` document.

    The document either names a ``preset`` (``bcs``, ``hubbard``, ``density``, ``free``) with its
    parameters, or gives ``base`` as an interaction document and ``terms`` as a list of
    ``{"weight": ..., "interaction": {...}}``.

    Raises:
        ConfigInvalid: With the path of the offending field.
    """
    if not isinstance(document, dict):
        raise ConfigInvalid("", "model must be a mapping")
    preset = document.get("preset")
    try:
        if preset == "bcs":
            return bcs_model(float(document.get("coupling", 1.0)), float(document.get("chemical_potential", 0.0)),
                             float(document.get("hopping", 0.0)), spins, dimension, decay)
        if preset == "hubbard":
            return hubbard_model(float(document.get("onsite", 0.0)), float(document.get("hopping", 0.0)),
                                 float(document.get("chemical_potential", 0.0)), spins, dimension, decay)
        if preset == "density":
            return density_model(float(document.get("weight", 1.0)), float(document.get("field", 0.0)),
                                 str(document.get("spin", spins[0])), dimension, decay)
        if preset == "free":
            base = chemical_potential(float(document.get("chemical_potential", 0.0)), spins, dimension)
            if document.get("hopping"):
                base = base + hopping(float(document["hopping"]), spins, dimension)
            return build_long_range_model(base, [], decay)
    except (TypeError, ValueError) as e:
        raise ConfigInvalid("preset", str(e)) from None
    if preset is not None:
        raise ConfigInvalid("preset", f"unknown preset {preset!r}")

    try:
        base = parse_interaction(document["base"], dimension) if "base" in document else Interaction.zero(dimension)
    except ConfigInvalid as e:
        raise ConfigInvalid(f"base.{e.field}" if e.field else "base", e.message) from None
    terms = []
    for k, entry in enumerate(document.get("terms") or []):
        try:
            weight = _parse_weight(entry["weight"])
        except KeyError:
            raise ConfigInvalid(f"terms[{k}].weight", "missing") from None
        except (TypeError, ValueError) as e:
            raise ConfigInvalid(f"terms[{k}].weight", str(e)) from None
        try:
            interaction = parse_interaction(entry.get("interaction") or {}, dimension)
        except ConfigInvalid as e:
            raise ConfigInvalid(f"terms[{k}].interaction.{e.field}", e.message) from None
        terms.append(MeanFieldTerm(interaction, weight))
    return build_long_range_model(base, terms, decay)


def format_model(model: LongRangeModel) -> dict:
    return {
        "base": format_interaction(model.base),
        "terms": [{"weight": repr(term.weight), "interaction": format_interaction(term.interaction)}
                  for term in model.terms],
    }
