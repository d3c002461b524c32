import math

import numpy as np
import pytest

from rieszflow.exceptions.serialization import write_scalar_series_csv, write_trajectory_csv
from rieszflow.models.kernel import KernelSpec
from rieszflow.models.particles import FlowParameters, ParticleSystem, QuadraticPotential
from rieszflow.services import dynamics_service
from rieszflow.services.integrator import AdaptiveIntegrator, rk4_solve


def random_system(n, d, s, seed=0, **flow):
    rng = np.random.default_rng(seed)
    return ParticleSystem(
        spec=KernelSpec.build(d, s),
        positions=rng.uniform(-0.5, 0.5, (n, d)),
        flow=FlowParameters(**flow),
    )


def test_pair_energy_counts_ordered_pairs():
    spec = KernelSpec.build(2, 0.5)
    pair = ParticleSystem(spec=spec, positions=[[0.0, 0.0], [1.0, 0.0]])
    assert dynamics_service.pairwise_energy(pair).interaction == pytest.approx(2.0 / spec.c_ds)

    triangle = ParticleSystem(spec=spec, positions=[[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3.0) / 2.0]])
    assert dynamics_service.pairwise_energy(triangle).interaction == pytest.approx(6.0 / spec.c_ds)


def test_pair_energy_in_one_dimension():
    spec = KernelSpec.build(1, 0.5)
    line = ParticleSystem(spec=spec, positions=[[0.0], [1.0], [2.0]])
    energy = dynamics_service.pairwise_energy(line)
    assert energy.interaction == pytest.approx(5.414214 / spec.c_ds, rel=1e-6)
    assert energy.normalized == pytest.approx(energy.interaction / 9.0)


def test_potential_enters_the_energy():
    spec = KernelSpec.build(2, 0.5)
    flow = FlowParameters(potential=QuadraticPotential(k=2.0))
    system = ParticleSystem(spec=spec, positions=[[1.0, 0.0], [-1.0, 0.0]], flow=flow)
    energy = dynamics_service.pairwise_energy(system)
    # N·Σ V = 2·(1 + 1)
    assert energy.potential == pytest.approx(4.0)
    assert energy.total == pytest.approx(energy.interaction + 4.0)


def test_coincident_points_are_rejected():
    with pytest.raises(ValueError):
        ParticleSystem(spec=KernelSpec.build(2, 0.5), positions=[[0.0, 0.0], [0.0, 0.0]])


def test_conservative_term_needs_gradient_part():
    with pytest.raises(ValueError):
        FlowParameters(alpha=0.0, beta=1.0)


def test_conservative_term_needs_the_plane():
    with pytest.raises(ValueError):
        ParticleSystem(spec=KernelSpec.build(1, 0.5), positions=[[0.0], [1.0]], flow=FlowParameters(beta=1.0))


def test_two_particle_velocity():
    spec = KernelSpec.build(2, 0.5)
    system = ParticleSystem(spec=spec, positions=[[0.0, 0.0], [1.0, 0.0]])
    v = dynamics_service.velocities(system)
    assert v[0] == pytest.approx([-0.5 / (4.0 * math.pi), 0.0])
    assert v[0, 0] == pytest.approx(-0.0397887, abs=1e-7)
    assert v[1] == pytest.approx(-v[0])


def test_velocities_sum_to_zero():
    system = random_system(12, 2, 0.5, seed=3)
    assert np.abs(dynamics_service.velocities(system).sum(axis=0)).max() < 1e-12


def test_single_particle_stays_put():
    system = ParticleSystem(spec=KernelSpec.build(2, 0.5), positions=[[0.3, 0.1]])
    assert dynamics_service.velocities(system) == pytest.approx([[0.0, 0.0]])


@pytest.mark.parametrize("d,s", [(1, 0.0), (2, 0.5)])
def test_velocities_are_the_scaled_energy_gradient(d, s):
    flow = {"potential": QuadraticPotential(k=1.5)}
    system = random_system(5, d, s, seed=1, **flow)
    v = dynamics_service.velocities(system)
    h = 1e-6
    for i in range(system.n):
        for a in range(d):
            plus = np.array(system.positions)
            minus = np.array(system.positions)
            plus[i, a] += h
            minus[i, a] -= h
            derivative = (
                dynamics_service.hamiltonian(system.moved(plus, 0.0))
                - dynamics_service.hamiltonian(system.moved(minus, 0.0))
            ) / (2 * h)
            assert v[i, a] == pytest.approx(-derivative / system.n, rel=1e-5, abs=1e-8)


def test_cell_list_with_large_cutoff_matches_direct_sum():
    system = random_system(30, 2, 0.5, seed=4)
    direct = dynamics_service.pair_gradient_sums(system.spec, system.positions)
    screened = dynamics_service.pair_gradient_sums_cell_list(system.spec, system.positions, cutoff=10.0)
    assert screened == pytest.approx(direct, rel=1e-12, abs=1e-12)


def test_symmetric_pair_stays_symmetric():
    system = ParticleSystem(spec=KernelSpec.build(2, 0.5), positions=[[-0.1, 0.0], [0.1, 0.0]])
    record = dynamics_service.integrate(system, 1.0, tol=1e-10, sample_dt=0.1)
    assert np.abs(record.positions[:, 0] + record.positions[:, 1]).max() < 1e-9
    assert np.abs(record.positions[:, :, 1]).max() < 1e-12


def test_energy_decreases_at_every_step():
    record = dynamics_service.integrate(random_system(8, 2, 0.5, seed=2), 0.3, tol=1e-8)
    assert np.all(np.diff(record.energies) <= 1e-12 * abs(record.energies[0]))
    assert np.all(record.eta > 0)


def test_energy_decreases_with_conservative_term():
    record = dynamics_service.integrate(random_system(6, 2, 0.5, seed=5, beta=2.0), 0.3, tol=1e-8)
    assert np.all(np.diff(record.energies) <= 1e-12 * abs(record.energies[0]))


def test_adaptive_integrator_matches_rk4_reference():
    system = ParticleSystem(spec=KernelSpec.build(1, 0.5), positions=[[-0.3], [0.05], [0.4]])
    record = dynamics_service.integrate(system, 0.1, tol=1e-10, sample_dt=0.1)
    reference = dynamics_service.integrate_rk4(system, 0.1, dt=1e-4)
    assert np.abs(record.positions[-1] - reference).max() < 1e-6


def test_rk4_is_exact_for_linear_growth():
    y = rk4_solve(lambda t, y: np.ones_like(y), 0.0, np.zeros(3), 1.0, 0.1)
    assert y == pytest.approx(np.ones(3))


def test_adaptive_integrator_counts_steps():
    integrator = AdaptiveIntegrator(lambda t, y: -y, tol=1e-9)
    y = integrator.advance(0.0, np.array([1.0]), 1.0)
    assert y[0] == pytest.approx(math.exp(-1.0), rel=1e-7)
    assert integrator.accepted > 0


@pytest.mark.parametrize("d,s", [(1, 0.0), (1, 0.5), (2, 0.0), (2, 0.5)])
def test_dissipation_identity(d, s):
    record = dynamics_service.integrate(random_system(4, d, s, seed=7), 0.5, tol=1e-8, sample_dt=0.005)
    assert dynamics_service.dissipation_residual(record) < 1e-4


def test_dissipation_identity_with_conservative_term():
    record = dynamics_service.integrate(random_system(4, 2, 0.5, seed=8, beta=1.0), 0.3, tol=1e-9, sample_dt=0.005)
    assert dynamics_service.dissipation_residual(record) < 1e-4


def test_two_body_dispersion_rate():
    system = ParticleSystem(spec=KernelSpec.build(2, 0.0), positions=[[0.0, 0.0], [0.5, 0.0]])
    record = dynamics_service.integrate(system, 1.0, tol=1e-10, sample_dt=0.1)
    assert dynamics_service.dispersion_rate(record) == pytest.approx(1.0 / math.pi, rel=5e-3)
    assert dynamics_service.center_of_mass_drift(record) < 1e-10


@pytest.mark.parametrize("convention", ["ordered", "unordered"])
def test_dispersion_rate_follows_the_pair_convention(convention):
    system = random_system(8, 2, 0.0, seed=9, pair_convention=convention)
    record = dynamics_service.integrate(system, 0.2, tol=1e-10, sample_dt=0.02)
    expected = dynamics_service.expected_dispersion_rate(system.spec, 8, system.flow)
    assert dynamics_service.dispersion_rate(record) == pytest.approx(expected, rel=5e-3)


def test_unordered_convention_halves_the_rate():
    spec = KernelSpec.build(1, 0.0)
    ordered = dynamics_service.expected_dispersion_rate(spec, 4)
    unordered = dynamics_service.expected_dispersion_rate(spec, 4, FlowParameters(pair_convention="unordered"))
    assert ordered == pytest.approx(2.0 * unordered)
    assert ordered == pytest.approx(4.0 * 3.0 / (4.0 * 2.0 * math.pi))


def test_trajectory_csv(tmp_path):
    record = dynamics_service.integrate(random_system(3, 2, 0.5), 0.1, sample_dt=0.05)
    trajectory = write_trajectory_csv(record, tmp_path / "trajectory.csv").read_text().splitlines()
    assert trajectory[0] == "t,i,x1,x2,v1,v2"
    assert len(trajectory) == 1 + 3 * len(record.times)

    scalars = write_scalar_series_csv(record, tmp_path / "scalars.csv").read_text().splitlines()
    assert scalars[0] == "t,H_N,eta_N,com_1,com_2,dispersion"
    assert len(scalars) == 1 + len(record.times)
