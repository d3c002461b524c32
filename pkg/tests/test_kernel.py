import math

import numpy as np
import pytest

from rieszflow.exceptions import KernelDomainError, SingularityError
from rieszflow.models.kernel import KernelSpec
from rieszflow.services import kernel_service
from rieszflow.services.constants import normalization_constant

EXTENSION_CASES = [(1, 0.25), (1, 0.5), (2, 0.5), (2, 0.9), (1, 0.0)]


def test_constant_collapses_to_four_pi_in_the_plane():
    for s in (0.1, 0.5, 0.9, 1.5):
        assert normalization_constant(2, s) == pytest.approx(4.0 * math.pi, rel=1e-12)


def test_log_constant_is_two_pi():
    assert normalization_constant(2, 0.0) == 2.0 * math.pi
    assert normalization_constant(1, 0.0) == 2.0 * math.pi


def test_constant_in_one_dimension():
    assert normalization_constant(1, 0.5) == pytest.approx(2.396280, abs=1e-5)


def test_out_of_range_kernels_are_rejected():
    with pytest.raises(KernelDomainError):
        KernelSpec.build(3, 0.5)
    with pytest.raises(KernelDomainError):
        KernelSpec.build(1, 1.0)
    with pytest.raises(ValueError):
        KernelSpec(d=2, s=2.5)


def test_spec_fills_gamma_only_in_the_extension_regime():
    assert KernelSpec.build(2, 0.5).gamma == pytest.approx(-0.5)
    assert KernelSpec.build(1, 0.0).gamma == pytest.approx(0.0)
    coulomb = KernelSpec.build(2, 0.0)
    assert coulomb.gamma is None
    assert coulomb.is_coulomb


def test_kernel_values_at_unit_distance():
    spec = KernelSpec.build(2, 0.5)
    assert kernel_service.g(spec, 1.0) == pytest.approx(1.0 / spec.c_ds)
    assert kernel_service.g(KernelSpec.build(2, 0.0), 1.0) == 0.0


def test_gradient_example():
    spec = KernelSpec.build(2, 0.5)
    grad = kernel_service.grad_g(spec, np.array([1.0, 0.0]))
    assert grad == pytest.approx([-0.5 / (4.0 * math.pi), 0.0])
    assert grad[0] == pytest.approx(-0.0397887, abs=1e-7)


@pytest.mark.parametrize("d,s", [(1, 0.0), (1, 0.5), (2, 0.0), (2, 0.5)])
def test_gradient_matches_finite_differences(d, s):
    spec = KernelSpec.build(d, s)
    x = np.array([0.7, -0.4][:d])
    h = 1e-5
    numeric = np.zeros(d)
    for a in range(d):
        step = np.zeros(d)
        step[a] = h
        numeric[a] = (
            kernel_service.g(spec, np.linalg.norm(x + step)) - kernel_service.g(spec, np.linalg.norm(x - step))
        ) / (2 * h)
    assert kernel_service.grad_g(spec, x) == pytest.approx(numeric, rel=1e-7)


def test_singularity_is_rejected():
    spec = KernelSpec.build(1, 0.5)
    with pytest.raises(SingularityError):
        kernel_service.g(spec, 0.0)
    with pytest.raises(SingularityError):
        kernel_service.extended_g(spec, [0.0], 0.0)


def test_extended_kernel():
    assert kernel_service.extended_g(KernelSpec.build(1, 0.0), [1.0], 0.0) == 0.0
    spec = KernelSpec.build(2, 0.5)
    assert kernel_service.extended_g(spec, [0.0, 0.0], 1.0) == pytest.approx(1.0 / (4.0 * math.pi))
    a = kernel_service.extended_g(spec, [0.6, 0.0], 0.8)
    b = kernel_service.extended_g(spec, [0.0, 0.0], 1.0)
    assert a == pytest.approx(b)


def test_no_extension_for_coulomb():
    with pytest.raises(KernelDomainError):
        kernel_service.extended_g(KernelSpec.build(2, 0.0), [1.0, 0.0], 0.0)


def test_extended_gradient_is_radial():
    spec = KernelSpec.build(2, 0.5)
    grad = kernel_service.extended_grad_g(spec, [0.6, 0.0], 0.8)
    assert grad == pytest.approx(-0.5 / (4.0 * math.pi) * np.array([0.6, 0.0, 0.8]))


def test_truncated_kernel_plateau_and_tail():
    spec = KernelSpec.build(2, 0.5)
    eta = 0.2
    assert kernel_service.g_truncated(spec, eta, [0.1, 0.0], 0.0) == pytest.approx(kernel_service.g(spec, eta))
    assert kernel_service.grad_g_truncated(spec, eta, [0.1, 0.0], 0.0) == pytest.approx([0.0, 0.0, 0.0])
    assert kernel_service.g_truncated(spec, eta, [0.4, 0.0], 0.0) == pytest.approx(kernel_service.g(spec, 0.4))
    inside = kernel_service.g_truncated(spec, eta, [eta * (1 - 1e-13), 0.0], 0.0)
    outside = kernel_service.g_truncated(spec, eta, [eta * (1 + 1e-13), 0.0], 0.0)
    assert abs(inside - outside) < 1e-12


def test_truncated_kernel_is_below_the_kernel():
    spec = KernelSpec.build(1, 0.5)
    r = np.linspace(0.01, 2.0, 50)
    x = r[:, None]
    truncated = kernel_service.g_truncated(spec, 0.3, x, np.zeros(50))
    assert np.all(truncated <= kernel_service.g(spec, r) + 1e-15)


def test_positive_part_kernel():
    spec = KernelSpec.build(2, 0.0)
    assert kernel_service.g_plus(spec, 2.0) == 0.0
    assert kernel_service.g_plus(spec, 0.5) == pytest.approx(math.log(2.0) / (2.0 * math.pi))
    assert kernel_service.g_plus(spec, 0.0) == math.inf


def test_sphere_weight():
    spec = KernelSpec.build(2, 0.5)
    assert kernel_service.sphere_weight_integral(spec, 1.0) == pytest.approx(8.0 * math.pi, rel=1e-8)
    ratio = kernel_service.sphere_weight_integral(spec, 2.0) / kernel_service.sphere_weight_integral(spec, 1.0)
    assert ratio == pytest.approx(2.0**1.5, rel=1e-10)
    one_dim = KernelSpec.build(1, 0.5)
    assert kernel_service.sphere_weight_integral(one_dim, 1.0) == pytest.approx(4.79256, abs=1e-4)


@pytest.mark.parametrize("d,s", EXTENSION_CASES)
@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
def test_flux_identity(d, s, t):
    flux = kernel_service.flux_through_sphere(KernelSpec.build(d, s), t)
    assert flux == pytest.approx(-1.0, rel=1e-6)


def test_flux_identity_for_coulomb():
    assert kernel_service.flux_through_sphere(KernelSpec.build(2, 0.0), 0.3) == pytest.approx(-1.0, rel=1e-12)


@pytest.mark.parametrize("d,s", [(1, 0.5), (2, 0.5)])
def test_cylinder_flux(d, s):
    assert kernel_service.cylinder_flux(KernelSpec.build(d, s)) == pytest.approx(-1.0, rel=1e-6)


def test_mis_set_constant_breaks_the_flux():
    flux = kernel_service.flux_through_sphere(KernelSpec.build(2, 0.5, c_scale=1.01), 1.0)
    assert abs(flux + 1.0) > 1e-3


@pytest.mark.parametrize("d,s", [(1, 0.0), (1, 0.5), (2, 0.0), (2, 0.5), (2, 0.9)])
def test_shell_interaction_between_point_and_self_energy(d, s):
    spec = KernelSpec.build(d, s)
    eta = 0.1
    assert kernel_service.shell_interaction(spec, eta, 0.0) == pytest.approx(kernel_service.g(spec, eta), rel=1e-8)
    assert kernel_service.shell_interaction(spec, eta, 0.3) == kernel_service.g(spec, 0.3)
    near = kernel_service.shell_interaction(spec, eta, 2.0 * eta * (1.0 - 1e-6))
    assert near == pytest.approx(kernel_service.g(spec, 2.0 * eta), rel=1e-4)


@pytest.mark.parametrize("d,s", [(1, 0.5), (2, 0.0), (2, 0.5)])
def test_overlapping_shells_interact_less_than_points(d, s):
    spec = KernelSpec.build(d, s)
    eta = 0.1
    values = [kernel_service.shell_interaction(spec, eta, r) for r in (0.0, 0.05, 0.1, 0.15)]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert values[2] < kernel_service.g(spec, 0.1)
    assert values[3] < kernel_service.g(spec, 0.15)
