import numpy as np
import pytest
from scipy.special import comb, logsumexp

from mflab.car import build_fock_context, number
from mflab.definitions import chemical_potential, hopping, hubbard, number_term, pair_annihilation
from mflab.exceptions import NonHermitian, WindowTooSmall
from mflab.interactions import Factor, Interaction, interaction_norm, local_hamiltonian
from mflab.longrange import (MeanFieldTerm, build_long_range_model, energy_bound, gibbs_window_trace, hahn_split,
                             long_range_hamiltonian, lr_free_energy, lr_variational_check, pressure_lr,
                             space_average_summands, space_avg_functional)
from mflab.thermostate import gibbs, pressure, tracial_state


def test_missing_adjoint_is_appended(bcs):
    assert bcs.size == 2
    assert bcs.interactions[1] == pair_annihilation().adjoint()
    assert bcs.partners == (1, 0)
    assert list(bcs.weights) == [bcs.weights[0]] * 2


def test_terms_are_normalized():
    model = build_long_range_model(chemical_potential(0.0), [MeanFieldTerm(number_term("up", 3.0), 2.0)])
    assert model.weights[0] == pytest.approx(18.0)
    assert interaction_norm(model.terms[0].interaction) == pytest.approx(1.0)


def test_zero_weight_terms_are_dropped():
    model = build_long_range_model(chemical_potential(0.5), [MeanFieldTerm(number_term("up"), 0.0)])
    assert model.size == 0


def test_base_must_be_self_adjoint():
    with pytest.raises(NonHermitian):
        build_long_range_model(pair_annihilation(), [])


def test_hahn_split(bcs, repulsive_toy):
    split = hahn_split(bcs)
    assert split.attractive == (0, 1)
    assert split.purely_attractive
    assert split.attractive_mass == pytest.approx(4.0)
    assert hahn_split(repulsive_toy).purely_repulsive


def test_bcs_hamiltonian_on_one_site(site, bcs):
    b = local_hamiltonian(pair_annihilation(), site).matrix
    n = sum(number(site, 0, spin).matrix for spin in ("up", "down"))
    expected = -0.5 * n - 2.0 * (b.conj().T @ b + b @ b.conj().T)
    assert np.allclose(long_range_hamiltonian(bcs, site).matrix, expected)


def test_without_terms_the_base_hamiltonian_is_used(ring):
    phi = hopping(1.0) + hubbard(2.0)
    model = build_long_range_model(phi, [])
    assert np.allclose(long_range_hamiltonian(model, ring).matrix, local_hamiltonian(phi, ring).matrix)
    assert pressure_lr(model, 0.7, ring) == pytest.approx(pressure(phi, 0.7, ring))


@pytest.mark.parametrize("half_width", [0, 1, 2])
def test_repulsive_toy_pressure(repulsive_toy, half_width):
    ctx = build_fock_context(1, half_width, ("up",))
    volume = ctx.volume
    k = np.arange(volume + 1)
    log_z = logsumexp(k - k ** 2 / volume, b=comb(volume, k))
    assert pressure_lr(repulsive_toy, 1.0, ctx) == pytest.approx(log_z / volume, abs=1e-12)


def test_energy_bound_dominates_hamiltonian(ring):
    model = build_long_range_model(hubbard(1.0), [MeanFieldTerm(number_term("up"), 1.0),
                                                  MeanFieldTerm(pair_annihilation(), -0.5)])
    assert np.linalg.norm(long_range_hamiltonian(model, ring).matrix, 2) <= energy_bound(model, ring)


def test_space_average_functional_of_tracial_state(spinless_ring, repulsive_toy):
    state = tracial_state(spinless_ring)
    # rho(n_ell^2) for independent fair occupations: 1/4 + 1/(4|Lambda_ell|)
    assert space_avg_functional(repulsive_toy, state, 0, spinless_ring) == pytest.approx(0.5)
    assert space_avg_functional(repulsive_toy, state, 1, spinless_ring) == pytest.approx(0.25 + 0.25 / 3)


def test_lr_free_energy_of_gibbs_state(spinless_ring, repulsive_toy):
    # for the full window the space-average functional is the mean-field energy of U_L^m
    beta = 1.0
    state = gibbs(long_range_hamiltonian(repulsive_toy, spinless_ring), beta)
    value = lr_free_energy(repulsive_toy, state, beta, 1, spinless_ring)
    assert value == pytest.approx(-pressure_lr(repulsive_toy, beta, spinless_ring), abs=1e-10)


def test_lr_variational_check(ring, rng, bcs):
    report = lr_variational_check(bcs, 1.0, ring, 10, rng)
    assert report.identity_residual < 1e-10
    assert report.violations == 0
    assert report.curvature > 0


def test_gibbs_window_trace(repulsive_toy):
    trace = gibbs_window_trace(repulsive_toy, 1.0, [0, 1, 2], 0, spins=("up",))
    assert trace.distances.shape == (3, 3)
    assert np.allclose(np.diag(trace.distances), 0.0)
    assert all(np.isclose(np.trace(density).real, 1.0) for density in trace.densities)
    assert len(trace.consecutive()) == 2
    with pytest.raises(WindowTooSmall):
        gibbs_window_trace(repulsive_toy, 1.0, [0, 1], 1, spins=("up",))


def test_self_adjoint_term_in_any_monomial_order_is_its_own_partner():
    term = Interaction.from_terms([((), 1.0, (Factor((0,), "up", True), Factor((0,), "up", False),
                                              Factor((0,), "down", True), Factor((0,), "down", False)))])
    model = build_long_range_model(Interaction.zero(), [MeanFieldTerm(term, 1.0)])
    assert model.size == 1
    assert model.partners == (0,)


def test_space_average_summands_are_unweighted(spinless_ring):
    model = build_long_range_model(Interaction.zero(), [MeanFieldTerm(number_term("up"), 3.0)])
    state = tracial_state(spinless_ring)
    summands = space_average_summands(model, state, 1, spinless_ring)
    assert summands == pytest.approx([0.25 + 0.25 / 3])
    assert space_avg_functional(model, state, 1, spinless_ring) == pytest.approx(3.0 * summands[0])
