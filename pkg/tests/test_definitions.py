import pytest

from mflab.definitions import (bcs_model, format_interaction, format_model, hopping, hubbard, parse_interaction,
                               parse_model, parse_monomial)
from mflab.exceptions import ConfigInvalid, MonomialSyntaxError
from mflab.interactions import Factor


def test_parse_monomial():
    monomial = parse_monomial("adag(0;up) a(1;up)")
    assert monomial == (Factor((0,), "up", True), Factor((1,), "up", False))
    assert parse_monomial("1") == ()
    assert parse_monomial("a(0, 1;down) a(1, 1;up)", dimension=2)[1] == Factor((1, 1), "up", False)


@pytest.mark.parametrize("text", ["", "adag(0)", "a(0;up) junk", "b(0;up)", "a(0,0;up)"])
def test_parse_monomial_rejects_bad_syntax(text):
    with pytest.raises(MonomialSyntaxError):
        parse_monomial(text)


def test_interaction_documents_invert():
    phi = hopping(0.5) + hubbard(3.0)
    assert parse_interaction(format_interaction(phi)) == phi


def test_parse_interaction_reports_paths():
    document = {"anchors": [{"terms": [{"monomial": "adag(0;up) a(0;up)"}, {"coefficient": 1.0}]}]}
    with pytest.raises(ConfigInvalid) as e:
        parse_interaction(document)
    assert e.value.field == "anchors[0].terms[1].monomial"

    odd = {"anchors": [{"terms": [{"monomial": "a(0;up)"}]}]}
    with pytest.raises(ConfigInvalid) as e:
        parse_interaction(odd)
    assert e.value.field == "anchors"


def test_bcs_preset_matches_builder():
    model = parse_model({"preset": "bcs", "coupling": 2.0, "chemical_potential": 0.5})
    reference = bcs_model(2.0, mu=0.5)
    assert model.base == reference.base
    assert model.interactions == reference.interactions
    assert model.weights == pytest.approx([-2.0, -2.0])
    assert model.partners == (1, 0)


def test_custom_model_document():
    document = {
        "base": {"anchors": [{"terms": [{"monomial": "adag(0;up) a(0;up)", "coefficient": "-0.5"}]}]},
        "terms": [{"weight": "1/2", "interaction": {"anchors": [{"terms": [{"monomial": "adag(0;up) a(0;up)"}]}]}}],
    }
    model = parse_model(document)
    assert model.size == 1
    assert model.weights[0] == pytest.approx(0.5)
    assert model.partners == (0,)


def test_model_errors_carry_paths():
    with pytest.raises(ConfigInvalid) as e:
        parse_model({"terms": [{"interaction": {}}]})
    assert e.value.field == "terms[0].weight"
    with pytest.raises(ConfigInvalid) as e:
        parse_model({"preset": "ising"})
    assert e.value.field == "preset"


def test_format_model_lists_terms():
    document = format_model(bcs_model(1.0))
    assert [float(term["weight"]) for term in document["terms"]] == pytest.approx([-1.0, -1.0])
    assert document["terms"][1]["interaction"]["label"] == "pair*"
