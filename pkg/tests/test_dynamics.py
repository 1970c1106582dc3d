import numpy as np
import pytest

from mflab.car import LocalOperator, Parity, build_fock_context, gauge_matrix, number, random_local_operator
from mflab.config import MAX_HALVINGS, TRACE_DRIFT_TOLERANCE
from mflab.definitions import bcs_model, chemical_potential, hopping, hubbard
from mflab.dynamics import (gauge_rotate_state, heisenberg, heisenberg_lr, limit_agreement, mean_field_energy,
                            nonautonomous_propagator, schrodinger_lr, selfconsistent_flow, stationarity_check)
from mflab.exceptions import StepTooLarge, WindowTooSmall
from mflab.experiment import DEFAULT_TOLERANCES
from mflab.interactions import Factor, local_hamiltonian, monomial_operator
from mflab.longrange import build_long_range_model, long_range_hamiltonian
from mflab.thermogame import gap_fixed_point, rotate_coefficients
from mflab.thermostate import gibbs, pure_state, random_state, tracial_state


@pytest.fixture
def hubbard_ring(ring):
    return local_hamiltonian(hopping(1.0) + hubbard(2.0) + chemical_potential(0.3), ring)


@pytest.fixture
def driven_path(spinless_ring):
    """Hopping plus an oscillating field on the origin, which does not commute with the hopping."""
    h0 = local_hamiltonian(hopping(1.0, ("up",)), spinless_ring).matrix
    n0 = monomial_operator(spinless_ring, (Factor((0,), "up", True), Factor((0,), "up", False))).matrix
    return lambda t: h0 + np.cos(3 * t) * n0


@pytest.fixture
def bcs_half_filling():
    return bcs_model(2.0, mu=0.0)


def ordered(solutions):
    return next(solution for solution in solutions if solution.branch == "ordered")


def test_heisenberg_group_law(ring, hubbard_ring, rng):
    a = random_local_operator(ring, rng)
    assert np.allclose(heisenberg(hubbard_ring, a, 0.0).matrix, a.matrix)
    composed = heisenberg(hubbard_ring, heisenberg(hubbard_ring, a, 0.3), 0.4)
    assert np.allclose(composed.matrix, heisenberg(hubbard_ring, a, 0.7).matrix, atol=1e-12)
    product = heisenberg(hubbard_ring, a @ a.adjoint(), 0.5)
    moved = heisenberg(hubbard_ring, a, 0.5)
    assert np.allclose(product.matrix, (moved @ moved.adjoint()).matrix, atol=1e-12)


def test_heisenberg_keeps_the_particle_number(ring, hubbard_ring):
    total = local_hamiltonian(chemical_potential(-1.0), ring)
    assert np.allclose(heisenberg(hubbard_ring, total, 2.0).matrix, total.matrix, atol=1e-10)


def test_constant_path_matches_heisenberg(ring, rng):
    a = random_local_operator(ring, rng)
    propagator = nonautonomous_propagator(lambda t: hopping(1.0), ring, 0.0, 0.7, dt=0.1)
    expected = heisenberg(local_hamiltonian(hopping(1.0), ring), a, 0.7)
    assert np.allclose(propagator.apply(a).matrix, expected.matrix, atol=1e-10)
    assert propagator.steps == 7
    assert propagator.drift < 1e-8


def test_propagator_cocycle(spinless_ring, driven_path, rng):
    a = random_local_operator(spinless_ring, rng)
    whole = nonautonomous_propagator(driven_path, spinless_ring, 0.0, 1.0, dt=0.01)
    early = nonautonomous_propagator(driven_path, spinless_ring, 0.0, 0.5, dt=0.01)
    late = nonautonomous_propagator(driven_path, spinless_ring, 0.5, 1.0, dt=0.01)
    assert np.allclose(whole.apply(a).matrix, early.apply(late.apply(a)).matrix, atol=1e-10)


def test_propagator_converges_with_step(spinless_ring, driven_path, rng):
    a = random_local_operator(spinless_ring, rng)
    coarse = nonautonomous_propagator(driven_path, spinless_ring, 0.0, 1.0, dt=0.02).apply(a)
    fine = nonautonomous_propagator(driven_path, spinless_ring, 0.0, 1.0, dt=0.01).apply(a)
    assert np.linalg.norm(coarse.matrix - fine.matrix, 2) < 1e-6


def test_empty_span_is_the_identity(spinless_ring, driven_path, rng):
    a = random_local_operator(spinless_ring, rng)
    propagator = nonautonomous_propagator(driven_path, spinless_ring, 0.3, 0.3)
    assert propagator.steps == 0
    assert np.allclose(propagator.apply(a).matrix, a.matrix)


def test_schrodinger_and_heisenberg_pictures_agree(spinless_ring, repulsive_toy, rng):
    state = random_state(spinless_ring, rng, weight=0.5)
    a = random_local_operator(spinless_ring, rng)
    evolved = schrodinger_lr(repulsive_toy, spinless_ring, state, 0.8)
    heisenberg_value = np.trace(state.density @ heisenberg_lr(repulsive_toy, spinless_ring, a, 0.8).matrix)
    assert np.trace(evolved @ a.matrix) == pytest.approx(heisenberg_value, abs=1e-12)


def test_flow_without_terms_is_the_exact_evolution(spinless_ring, rng):
    model = build_long_range_model(hopping(0.5, ("up",)) + chemical_potential(0.2, ("up",)), [])
    state = random_state(spinless_ring, rng, weight=0.5)
    flow = selfconsistent_flow(model, spinless_ring, state, 0.5, dt=0.01)
    assert flow.coefficients.shape == (2, 0)
    assert np.allclose(flow.states[-1], schrodinger_lr(model, spinless_ring, state, 0.5), atol=1e-7)


def test_flow_conserves_mean_field_energy(site, bcs):
    initial = pure_state(np.array([0.5, 0.0, 0.0, np.sqrt(3) / 2]))
    flow = selfconsistent_flow(bcs, site, initial, 10.0, dt=1e-3, times=np.linspace(0.0, 10.0, 11))
    assert flow.energies[0] == pytest.approx(mean_field_energy(bcs, site, initial.density))
    assert abs(flow.coefficients[0, 0]) > 0.1
    assert flow.energy_drift <= 1e-8
    assert np.max(flow.trace_drift) <= 1e-10
    assert np.allclose(flow.purities, 1.0, atol=1e-8)
    assert flow.repairs == 0
    assert len(flow.rows()) == 11


def test_flow_is_gauge_covariant(site, bcs, rng):
    theta = 0.7
    initial = random_state(site, rng, weight=0.5)
    flow = selfconsistent_flow(bcs, site, initial, 1.0, dt=0.01)
    rotated = selfconsistent_flow(bcs, site, gauge_rotate_state(site, initial, theta), 1.0, dt=0.01)
    assert np.allclose(rotated.states[-1], gauge_matrix(site, theta, flow.states[-1]), atol=1e-10)
    assert np.allclose(rotated.coefficients[-1], rotate_coefficients(bcs, flow.coefficients[-1], -theta),
                       atol=1e-10)


def test_flow_rejects_snapshots_past_the_end(site, bcs):
    with pytest.raises(ValueError):
        selfconsistent_flow(bcs, site, random_state(site, np.random.default_rng(0)), 1.0, times=[0.0, 2.0])


def test_gap_solution_is_stationary_under_the_flow(site, bcs):
    solution = ordered(gap_fixed_point(bcs, 2.0, site, restarts=6, seed=7))
    report = stationarity_check(bcs, 2.0, site, solution, duration=10.0, dt=0.01, times=np.linspace(0.0, 10.0, 5))
    assert report.selfconsistent_deviation <= 1e-6


def test_exact_dynamics_approaches_stationarity(site, bcs_half_filling):
    solution = ordered(gap_fixed_point(bcs_half_filling, 2.0, site, restarts=6, seed=7))
    deviations = []
    for half_width in (0, 1, 2):
        ctx = build_fock_context(1, half_width, ("up", "down"))
        report = stationarity_check(bcs_half_filling, 2.0, ctx, solution, duration=1.0, dt=0.05,
                                    times=[0.0, 0.5, 1.0])
        assert report.selfconsistent_deviation <= 1e-6
        deviations.append(report.exact_deviation)
    # one site: the pair energy does not depend on the occupation, so the state is exactly stationary
    assert deviations[0] < 1e-10
    assert deviations[1] > 1e-6
    assert deviations[2] < deviations[1]


def test_limit_agreement_at_time_zero(site, ring, bcs):
    rows = limit_agreement(bcs, [site, ring], lambda ctx: random_state(ctx, np.random.default_rng(5)),
                           lambda ctx: number(ctx, 0, "up"), 0.0)
    assert [row["half_width"] for row in rows] == [0, 1]
    assert all(row["deviation"] < 1e-12 for row in rows)


def test_limit_agreement_without_terms(ring):
    model = build_long_range_model(hopping(0.5) + hubbard(1.0) + chemical_potential(0.3), [])
    rows = limit_agreement(model, [ring], lambda ctx: random_state(ctx, np.random.default_rng(5), weight=0.5),
                           lambda ctx: number(ctx, 0, "up"), 0.5)
    assert rows[0]["deviation"] < 1e-7


def test_limit_agreement_needs_the_observable_to_fit(site, bcs):
    wide = LocalOperator(np.eye(4, dtype=complex), frozenset({(0,), (1,)}), Parity.EVEN)
    with pytest.raises(WindowTooSmall):
        limit_agreement(bcs, [site], lambda ctx: random_state(ctx, np.random.default_rng(5)), lambda ctx: wide, 0.5)


def test_gibbs_state_of_the_long_range_hamiltonian_is_invariant(spinless_ring, repulsive_toy):
    state = gibbs(long_range_hamiltonian(repulsive_toy, spinless_ring), 1.0)
    assert np.allclose(schrodinger_lr(repulsive_toy, spinless_ring, state, 3.0), state.density, atol=1e-12)


def test_flow_gives_up_when_the_trace_keeps_drifting(mocker, site, bcs):
    leaky = mocker.patch("mflab.dynamics._rk4_segment",
                         side_effect=lambda model, ctx, density, span, step: density * (1 + 5e-10))
    with pytest.raises(StepTooLarge):
        selfconsistent_flow(bcs, site, tracial_state(site), 1.0, dt=0.1)
    assert leaky.call_count == MAX_HALVINGS + 1
    assert DEFAULT_TOLERANCES["trace_drift"] == TRACE_DRIFT_TOLERANCE
