import numpy as np
import pytest

from mflab.car import build_fock_context
from mflab.definitions import chemical_potential, number_term, pair_annihilation
from mflab.exceptions import GridTooLarge, LengthMismatch
from mflab.interactions import Interaction, local_hamiltonian
from mflab.longrange import MeanFieldTerm, build_long_range_model, pressure_lr
from mflab.thermogame import (GridSpec, approx_pressure, approximating_hamiltonian, approximating_interaction,
                              bogoliubov_residual, brute_force_game_oracle, conservative_set, constant_starts,
                              decision_rule, decision_rule_lipschitz, energy_coefficients, game_gradient, game_value,
                              gap_fixed_point, gauge_charges, is_gauge_symmetric, minmax_pressure,
                              rotate_coefficients, selfconsistent_kms_check, simple_model_probe)
from mflab.thermostate import gibbs, pressure, random_state

BETA = 2.0


@pytest.fixture
def solutions(bcs, site):
    return gap_fixed_point(bcs, BETA, site, restarts=6, seed=7)


@pytest.fixture
def spinless_site():
    return build_fock_context(1, 0, ("up",))


def ordered_value(coupling, mu, beta, xi, delta):
    return 2 * coupling * delta ** 2 - mu - np.log(2 + 2 * np.cosh(beta * xi)) / beta


def test_bcs_ordered_branch(solutions, bcs_branch):
    xi, delta = bcs_branch(2.0, 0.5, BETA)
    assert xi == pytest.approx(1.915, abs=1e-3)
    assert delta == pytest.approx(0.462, abs=1e-3)

    best = solutions[0]
    assert best.branch == "ordered"
    assert best.rank == 0
    assert abs(best.gap.c[0]) == pytest.approx(delta, abs=1e-6)
    assert best.gap.c[0].imag == pytest.approx(0.0, abs=1e-9)
    assert best.gap.c[0].real > 0
    assert best.gap.conjugation_defect((1, 0)) < 1e-8
    assert best.game_value == pytest.approx(ordered_value(2.0, 0.5, BETA, xi, delta), abs=1e-8)
    assert best.pressure == pytest.approx(-best.game_value)
    assert best.residual <= 1e-10


def test_normal_branch_is_also_a_solution(solutions):
    normal = [s for s in solutions if s.branch == "normal"]
    assert len(normal) == 1
    assert np.allclose(normal[0].gap.c, 0.0)
    assert normal[0].game_value > solutions[0].game_value


def test_high_temperature_has_only_the_normal_branch(bcs, site):
    solutions = gap_fixed_point(bcs, 0.5, site, restarts=4, seed=1)
    assert [s.branch for s in solutions] == ["normal"]


def test_gap_solutions_are_reproducible(bcs, site):
    first = gap_fixed_point(bcs, BETA, site, restarts=4, seed=11)
    second = gap_fixed_point(bcs, BETA, site, restarts=4, seed=11)
    assert [s.game_value for s in first] == [s.game_value for s in second]


def test_gradient_vanishes_at_gap_solution(bcs, site, solutions):
    gradient = game_gradient(bcs, solutions[0].gap.c, BETA, site)
    assert np.max(np.abs(gradient)) < 1e-6


def test_gauge_charges(bcs):
    assert is_gauge_symmetric(bcs)
    assert gauge_charges(bcs) == (-2, 2)
    rotated = rotate_coefficients(bcs, [0.3, 0.3], np.pi / 4)
    assert np.allclose(rotated, [-0.3j, 0.3j])


def test_mixed_charge_term_breaks_gauge_symmetry():
    model = build_long_range_model(Interaction.zero(), [MeanFieldTerm(number_term("up") + pair_annihilation(), -1.0)])
    assert gauge_charges(model)[0] is None
    assert not is_gauge_symmetric(model)


def test_approximating_interaction_matches_assembled_hamiltonian(bcs, site):
    c = [0.3 + 0.1j, 0.3 - 0.1j]
    direct = local_hamiltonian(approximating_interaction(bcs, c), site).matrix
    assert np.allclose(direct, approximating_hamiltonian(bcs, c, site).matrix)


def test_coefficient_length_is_checked(bcs, site):
    with pytest.raises(LengthMismatch):
        approximating_interaction(bcs, [1.0])
    with pytest.raises(LengthMismatch):
        game_value(bcs, [1.0], [], BETA, site)


@pytest.mark.parametrize("half_width,residual", [(0, 0.25), (1, 0.0710), (2, 0.0417)])
def test_repulsive_minmax_against_long_range_pressure(repulsive_toy, half_width, residual):
    ctx = build_fock_context(1, half_width, ("up",))
    report = minmax_pressure(repulsive_toy, 1.0, ctx, restarts=2, seed=0)
    assert report.minmax == pytest.approx(0.25 + np.log(2), abs=1e-8)
    assert report.residual == pytest.approx(residual, abs=5e-4)


def test_repulsive_decision_rule(repulsive_toy, spinless_site):
    assert decision_rule(repulsive_toy, [], 1.0, spinless_site) == pytest.approx([0.5], abs=1e-8)
    strategies = conservative_set(repulsive_toy, 1.0, spinless_site)
    assert strategies.strategies[0].d_minus.size == 0


def test_conservative_strategy_is_the_ordered_branch(bcs, site, solutions, bcs_branch):
    _, delta = bcs_branch(2.0, 0.5, BETA)
    strategies = conservative_set(bcs, BETA, site, restarts=6, seed=7, solutions=solutions)
    assert len(strategies.strategies) == 1
    assert np.abs(strategies.strategies[0].d_minus) == pytest.approx([delta, delta], abs=1e-6)
    assert strategies.value == pytest.approx(solutions[0].game_value, abs=1e-10)


def test_constant_starts_reach_the_ordered_branch(bcs, site, solutions):
    starts = constant_starts(bcs)
    assert [np.abs(start).tolist() for start in starts] == [[0.5 * bcs.norm] * 2, [bcs.norm] * 2]
    # one restart is the origin alone, so the ordered candidate comes from the constant starts
    strategies = conservative_set(bcs, BETA, site, restarts=1)
    assert strategies.candidates == 2
    assert strategies.value == pytest.approx(solutions[0].game_value, abs=1e-10)


def test_oracle_agrees_with_conservative_value(bcs, site, solutions):
    oracle = brute_force_game_oracle(bcs, BETA, site, GridSpec(1.0, 0.01, 1))
    assert oracle.surface.shape == (101, 1)
    assert oracle.minmax == pytest.approx(solutions[0].game_value, abs=1e-3)
    assert abs(oracle.argmin[0]) == pytest.approx(abs(solutions[0].gap.c[0]), abs=0.01)


def test_oracle_refuses_more_than_two_orbits(site):
    terms = [MeanFieldTerm(number_term("up"), 1.0), MeanFieldTerm(number_term("down"), 1.0),
             MeanFieldTerm(pair_annihilation(), -1.0)]
    model = build_long_range_model(Interaction.zero(), terms)
    with pytest.raises(GridTooLarge):
        brute_force_game_oracle(model, 1.0, site)


def test_bogoliubov_and_kms_conjunction(bcs, site, solutions, rng):
    strategies = conservative_set(bcs, BETA, site, solutions=solutions)
    for solution in solutions:
        omega = gibbs(approximating_hamiltonian(bcs, solution.gap.c, site), BETA)
        assert selfconsistent_kms_check(omega, bcs, BETA, site, rng).max_residual < 1e-9
        residual = bogoliubov_residual(omega, bcs, BETA, site, strategies)
        if solution.branch == "ordered":
            assert residual < 1e-6
        else:
            assert residual > 0.1
    mixed = random_state(site, rng, weight=0.9)
    assert selfconsistent_kms_check(mixed, bcs, BETA, site, rng).max_residual > 1e-4


def test_decision_rule_lipschitz_for_mixed_model(site):
    terms = [MeanFieldTerm(pair_annihilation(), -1.0), MeanFieldTerm(number_term("up"), 1.0)]
    model = build_long_range_model(chemical_potential(0.2), terms)
    ratio = decision_rule_lipschitz(model, [0.2, 0.2], 1.0, site)
    assert 0.0 <= ratio < 10.0


def test_simple_model_probe(repulsive_toy, spinless_site, bcs, site):
    assert simple_model_probe(repulsive_toy, 1.0, spinless_site).simple
    assert not simple_model_probe(bcs, BETA, site).simple


def test_gap_solution_reproduces_its_own_coefficients(bcs, site, solutions):
    for solution in solutions:
        omega = gibbs(approximating_hamiltonian(bcs, solution.gap.c, site), BETA)
        assert np.allclose(energy_coefficients(bcs, omega, site), solution.gap.c, atol=1e-10)


def test_approximating_pressure(bcs, site, repulsive_toy, spinless_site):
    assert approx_pressure(bcs, [0.0, 0.0], BETA, site) == pytest.approx(pressure(bcs.base, BETA, site))
    # one site, one mode: U^m is the base plus gamma n^2 = n, and Phi_m(c) is the base plus 2 gamma c n
    assert approx_pressure(repulsive_toy, [0.5], 1.0, spinless_site) == pytest.approx(np.log(2.0))
    assert pressure_lr(repulsive_toy, 1.0, spinless_site) == pytest.approx(np.log(2.0))
