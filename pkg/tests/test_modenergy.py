import math

import numpy as np
import pytest

from rieszflow.exceptions import InadmissibleEtaError, InadmissibleExponentError, SpecMismatchError
from rieszflow.models.balls import Ball, BallCollection
from rieszflow.models.grid import GridField
from rieszflow.models.kernel import KernelSpec
from rieszflow.models.particles import ParticleSystem
from rieszflow.models.reports import ExtendedQuadrature
from rieszflow.services import harness_service, kernel_service, modenergy_service, quadrature
from rieszflow.services.densities import bump, uniform_patch

KERNELS = [(1, 0.0), (1, 0.5), (2, 0.0), (2, 0.5), (2, 0.9)]


@pytest.mark.parametrize("d,s", KERNELS)
@pytest.mark.parametrize("eta,r", [(0.01, 0.2), (0.05, 0.5), (0.1, 1.0)])
def test_single_charge_matches_the_closed_form(d, s, eta, r):
    spec = KernelSpec.build(d, s)
    ball = Ball(center=[0.0] * d, r=r)
    value = modenergy_service.region_energy(np.zeros((1, d)), eta, ball, spec=spec)
    exact = modenergy_service.annulus_closed_form(spec, eta, r)
    assert value == pytest.approx(exact, rel=1e-4)


@pytest.mark.parametrize("d,s", [(1, 0.5), (2, 0.0)])
def test_volume_quadrature_agrees(d, s):
    spec = KernelSpec.build(d, s)
    ball = Ball(center=[0.0] * d, r=0.5)
    value = modenergy_service.region_energy(np.zeros((1, d)), 0.05, ball, method="volume", spec=spec)
    assert value == pytest.approx(modenergy_service.annulus_closed_form(spec, 0.05, 0.5), rel=1e-4)


def test_charges_outside_contribute_through_the_boundary_only():
    spec = KernelSpec.build(2, 0.5)
    points = np.array([[0.0, 0.0], [2.0, 0.0]])
    ball = Ball(center=[0.0, 0.0], r=0.5)
    green = modenergy_service.region_energy(points, 0.05, ball, spec=spec)
    volume = modenergy_service.region_energy(points, 0.05, ball, method="volume", spec=spec)
    assert green == pytest.approx(volume, rel=1e-4)


def test_collection_adds_up_its_balls():
    spec = KernelSpec.build(1, 0.5)
    points = np.array([[0.0], [1.0]])
    first = Ball(center=[0.0], r=0.3)
    second = Ball(center=[1.0], r=0.2)
    collection = BallCollection(R=0.5, balls=[first, second])
    total = modenergy_service.region_energy(points, 0.05, collection, spec=spec)
    parts = [modenergy_service.region_energy(points, 0.05, ball, spec=spec) for ball in (first, second)]
    assert total == pytest.approx(sum(parts), rel=1e-12)


def test_sphere_crossing_the_boundary_is_rejected():
    spec = KernelSpec.build(2, 0.5)
    ball = Ball(center=[0.0, 0.0], r=0.5)
    with pytest.raises(InadmissibleEtaError):
        modenergy_service.region_energy(np.array([[0.48, 0.0]]), 0.05, ball, spec=spec)


def test_raw_points_need_a_kernel():
    with pytest.raises(ValueError):
        modenergy_service.region_energy(np.zeros((1, 2)), 0.05, Ball(center=[0.0, 0.0], r=0.5))


def test_modulated_energy_of_a_centered_charge():
    spec = KernelSpec.build(2, 0.0)
    field = uniform_patch(spec, 1.2, 128, radius=1.0)
    particles = ParticleSystem(spec=spec, positions=[[0.0, 0.0]])
    report = modenergy_service.modulated_energy(particles, field)
    assert report.pp == 0.0
    assert report.E_N == pytest.approx(-3.0 / (8.0 * math.pi), abs=5e-3)
    direct = modenergy_service.modulated_energy(particles, field, pf_mode="direct")
    assert direct.E_N == pytest.approx(report.E_N, abs=1e-3)


def test_modulated_energy_needs_matching_kernels():
    field = bump(KernelSpec.build(2, 0.5), 1.0, 32)
    particles = ParticleSystem(spec=KernelSpec.build(2, 0.0), positions=[[0.0, 0.0]])
    with pytest.raises(SpecMismatchError):
        modenergy_service.modulated_energy(particles, field)


def test_eta_must_stay_below_half_the_spacing():
    spec = KernelSpec.build(1, 0.5)
    field = uniform_patch(spec, 2.0, 256, radius=1.0)
    particles = ParticleSystem(spec=spec, positions=[[-0.1], [0.1]])
    with pytest.raises(InadmissibleEtaError):
        modenergy_service.eta_approx(particles, field, 0.15)


@pytest.mark.parametrize("d,s", [(1, 0.0), (1, 0.5)])
def test_eta_defect_shrinks_with_eta(d, s):
    spec = KernelSpec.build(d, s)
    field = uniform_patch(spec, 2.0, 256, radius=1.0)
    particles = ParticleSystem(spec=spec, positions=[[-0.6], [-0.2], [0.15], [0.5]])
    report = modenergy_service.eta_report(particles, field, [0.005, 0.02, 0.01])
    assert [item.eta for item in report.eta] == [0.02, 0.01, 0.005]
    defects = [abs(item.defect) for item in report.eta]
    assert defects[0] > defects[1] > defects[2]
    assert defects[2] < 0.1 * kernel_service.g(spec, 0.005) / particles.n


def test_defect_vanishes_where_there_is_no_mass():
    spec = KernelSpec.build(2, 0.5)
    field = uniform_patch(spec, 2.0, 64, radius=0.5)
    particles = ParticleSystem(spec=spec, positions=[[1.5, 0.0]])
    assert modenergy_service.truncated_potential_defect(particles, field, 0.05) == pytest.approx([0.0])


def test_gradient_distance_vanishes_inside_a_covering_ball():
    spec = KernelSpec.build(2, 0.5)
    field = bump(spec, 1.0, 16)
    particles = ParticleSystem(spec=spec, positions=[[0.0, 0.0], [0.1, 0.0]])
    balls = BallCollection(R=3.0, balls=[Ball(center=[0.0, 0.0], r=3.0)])
    assert modenergy_service.lp_gradient_distance(particles, field, balls, 1.0, window=0.5) == 0.0


def test_gradient_distance_exponent_range():
    spec = KernelSpec.build(2, 0.5)
    field = bump(spec, 1.0, 16)
    particles = ParticleSystem(spec=spec, positions=[[0.0, 0.0]])
    with pytest.raises(InadmissibleExponentError):
        modenergy_service.lp_gradient_distance(particles, field, None, 1.6, window=0.5)


def test_gradient_distance_is_positive_for_the_coulomb_case():
    spec = KernelSpec.build(2, 0.0)
    field = bump(spec, 1.0, 16)
    particles = ParticleSystem(spec=spec, positions=[[0.05, 0.0]])
    assert modenergy_service.lp_gradient_distance(particles, field, None, 1.0, window=0.5) > 0.0


@pytest.mark.parametrize("gamma", [-0.5, 0.0, 0.5])
def test_weighted_gauss_rule_is_exact_on_polynomials(gamma):
    assert quadrature.check_exactness(gamma, 16) < 1e-12


@pytest.mark.parametrize("d,s", [(1, 0.5), (2, 0.5), (2, 0.9)])
def test_boundary_rule_integrates_the_sphere_weight(d, s):
    spec = KernelSpec.build(d, s)
    rule = quadrature.boundary_rule(spec, 12, 24)
    assert np.allclose(np.linalg.norm(rule.nodes, axis=-1), 1.0)
    assert float(np.sum(rule.weights)) == pytest.approx(kernel_service.sphere_weight_integral(spec, 1.0), rel=1e-10)


def test_half_line_rule():
    rule = quadrature.xi_rule(-0.5, 24, scale=1.0)
    assert float(np.sum(rule.weights * np.exp(-rule.nodes))) == pytest.approx(math.sqrt(math.pi), rel=1e-4)


@pytest.mark.parametrize("eta", [0.03, 0.08])
def test_overlapping_truncation_spheres(eta):
    spec = KernelSpec.build(2, 0.5)
    points = np.array([[0.0, 0.0], [0.1, 0.0]])
    ball = Ball(center=[0.05, 0.0], r=0.4)
    green = modenergy_service.region_energy(points, eta, ball, spec=spec)
    volume = modenergy_service.region_energy(points, eta, ball, method="volume", spec=spec)
    assert green == pytest.approx(volume, rel=2e-3)


def test_energies_follow_whole_cell_shifts():
    spec = KernelSpec.build(1, 0.5)
    field = bump(spec, 2.0, 256, radius=0.6)
    shift = 8 * field.dx
    moved = GridField(spec=spec, L=field.L, n=field.n, values=np.roll(field.values, 8))
    positions = np.array([[-0.3], [0.05], [0.3]])
    particles = ParticleSystem(spec=spec, positions=positions)
    shifted = ParticleSystem(spec=spec, positions=positions + shift)
    before = modenergy_service.modulated_energy(particles, field).E_N
    after = modenergy_service.modulated_energy(shifted, moved).E_N
    assert after == pytest.approx(before, rel=1e-8, abs=1e-10)
    eta_before = modenergy_service.eta_approx(particles, field, 0.02)
    eta_after = modenergy_service.eta_approx(shifted, moved, 0.02)
    assert eta_after == pytest.approx(eta_before, rel=1e-8, abs=1e-10)


@pytest.mark.parametrize("d,s", [(1, 0.0), (1, 0.5), (2, 0.0), (2, 0.5)])
def test_defect_inside_a_flat_patch(d, s):
    spec = KernelSpec.build(d, s)
    field = uniform_patch(spec, 2.0, 256 if d == 1 else 96, radius=1.0)
    rho = float(np.max(field.values))
    eta = 0.05
    particles = ParticleSystem(spec=spec, positions=[[0.1] * d, [-0.2] * d])
    sphere = 2.0 if d == 1 else 2.0 * math.pi
    # ρ ∫_{B_η} (g_s - g_s(η)) у замкненій формі
    if spec.is_log:
        exact = rho * sphere * eta**d / (spec.c_ds * d * d)
    else:
        exact = rho * sphere * eta ** (d - s) * s / (spec.c_ds * d * (d - s))
    defects = modenergy_service.truncated_potential_defect(particles, field, eta)
    assert defects == pytest.approx([exact, exact], rel=1e-6)
    loose = modenergy_service.truncated_potential_defect(particles, field, eta, ExtendedQuadrature(tol=1e-6))
    assert loose == pytest.approx(defects, rel=1e-4)


def test_eta_approx_uses_the_given_quadrature():
    spec = KernelSpec.build(2, 0.5)
    field = uniform_patch(spec, 2.0, 96, radius=1.0)
    particles = ParticleSystem(spec=spec, positions=[[0.1, 0.1], [-0.2, 0.3]])
    fine = modenergy_service.eta_approx(particles, field, 0.03)
    coarse = modenergy_service.eta_approx(particles, field, 0.03, ExtendedQuadrature(tol=1e-4))
    assert coarse == pytest.approx(fine, rel=1e-3)


@pytest.mark.parametrize("d,s", [(1, 0.0), (2, 0.0), (2, 0.5)])
def test_region_energy_vanishes_as_the_ball_closes_on_the_sphere(d, s):
    spec = KernelSpec.build(d, s)
    eta = 0.05
    values = [
        modenergy_service.region_energy(np.zeros((1, d)), eta, Ball(center=[0.0] * d, r=r), spec=spec)
        for r in (0.1, 0.06, 0.0505)
    ]
    assert values[0] > values[1] > values[2] > 0.0
    assert values[2] < 0.01 * abs(kernel_service.g(spec, eta))


@pytest.mark.parametrize("d,s", [(2, 0.0), (2, 0.5)])
def test_gradient_distance_shrinks_as_the_balls_grow(d, s):
    spec = KernelSpec.build(d, s)
    field = bump(spec, 1.0, 16)
    particles = ParticleSystem(spec=spec, positions=[[0.0, 0.0], [0.1, 0.0]])
    values = [
        modenergy_service.lp_gradient_distance(
            particles, field, BallCollection(R=r, balls=[Ball(center=[0.05, 0.0], r=r)]), 1.0, window=0.5
        )
        for r in (0.1, 0.3, 0.6)
    ]
    free = modenergy_service.lp_gradient_distance(particles, field, None, 1.0, window=0.5)
    assert free >= values[0] >= values[1] >= values[2]
    assert values[0] > values[2]


def test_iid_samples_get_closer_as_n_grows():
    spec = KernelSpec.build(2, 0.5)
    field = bump(spec, 1.0, 64, radius=0.6)
    means = []
    for n in (16, 64, 256):
        energies = []
        for seed in range(5):
            particles, _ = harness_service.sample_initial(field, n, seed)
            energies.append(abs(modenergy_service.modulated_energy(particles, field).E_N))
        means.append(float(np.mean(energies)))
    assert means[0] > means[1] > means[2]
