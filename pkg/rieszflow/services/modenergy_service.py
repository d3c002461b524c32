import logging
import math
from typing import Literal, Optional, Sequence, Union

import numpy as np
from scipy import integrate, ndimage

from rieszflow.exceptions import (
    InadmissibleEtaError,
    InadmissibleExponentError,
    QuadratureError,
    SpecMismatchError,
)
from rieszflow.models.balls import Ball, BallCollection
from rieszflow.models.grid import GridField
from rieszflow.models.kernel import KernelSpec
from rieszflow.models.particles import ParticleSystem, min_pair_distance
from rieszflow.models.reports import EtaValue, ExtendedQuadrature, ModulatedEnergyReport
from rieszflow.services import kernel_service
from rieszflow.services.dynamics_service import pairwise_energy
from rieszflow.services.meanfield_service import (
    field_energy,
    potential_at,
    potential_direct,
    potential_fields,
)
from rieszflow.services.quadrature import (
    boundary_rule,
    geometric_panels,
    panel_rule,
    sphere_measure_exponent,
    xi_rule,
)

logger = logging.getLogger(__name__)

DEFAULT_QUADRATURE = ExtendedQuadrature()
N_AVERAGE_ANGLES = 32

Region = Union[Ball, BallCollection]


def _check_pair(particles: ParticleSystem, field: GridField) -> None:
    if particles.spec != field.spec:
        raise SpecMismatchError(f"Particles use {particles.spec.label}, the field uses {field.spec.label}")


def modulated_energy(
    particles: ParticleSystem,
    field: GridField,
    pf_mode: Literal["interpolate", "direct"] = "interpolate",
) -> ModulatedEnergyReport:
    """E_N = (1/N²)Σ_{i≠j} g(x_ij) - (2/N)Σ h(x_i) + ∬ g dμ dμ"""
    _check_pair(particles, field)
    n = particles.n
    pp = pairwise_energy(particles).interaction / n**2
    if pf_mode == "direct":
        h_values = potential_direct(field, particles.positions)
    else:
        h_values = potential_at(field, particles.positions)
    pf = 2.0 / n * float(np.sum(h_values))
    ff = field_energy(field)
    return ModulatedEnergyReport(
        N=n,
        d=particles.spec.d,
        s=particles.spec.s,
        t=particles.t,
        pp=pp,
        pf=pf,
        ff=ff,
    )


def _angular_mass(field: GridField, center: np.ndarray, radius: float) -> float:
    """ω_{d-1}·середнє μ по сфері радіуса radius навколо center (лінійна інтерполяція)"""
    if field.d == 1:
        points = np.array([[center[0] - radius], [center[0] + radius]])
        total = 2.0
    else:
        psi = 2.0 * np.pi * (np.arange(N_AVERAGE_ANGLES) + 0.5) / N_AVERAGE_ANGLES
        points = center[None, :] + radius * np.stack([np.cos(psi), np.sin(psi)], axis=-1)
        total = 2.0 * np.pi
    coords = ((points + field.L) / field.dx - 0.5).T
    values = ndimage.map_coordinates(field.values, coords, order=1, mode="constant", cval=0.0)
    return total * float(np.mean(values))


def truncated_potential_defect(
    particles: ParticleSystem,
    field: GridField,
    eta: float,
    quad: ExtendedQuadrature = DEFAULT_QUADRATURE,
) -> np.ndarray:
    """(g_s∗μ)(x_i) - (g_{s,η}∗μ)(x_i) = ∫_{B(x_i,η)} (g_s - g_s(η)) dμ для кожної частинки"""
    _check_pair(particles, field)
    if eta <= 0:
        raise InadmissibleEtaError(f"Truncation radius must be positive, got {eta}")
    spec = field.spec
    d = spec.d
    options = {"epsabs": quad.tol, "epsrel": quad.tol, "limit": 200}
    defects = np.empty(particles.n)
    for i, x in enumerate(particles.positions):
        def shell(u: float) -> float:
            return _angular_mass(field, x, eta * u)

        if spec.is_log:
            # ∫_0^1 (-log u) u^{d-1} ω μ̄(ηu) du
            value, _ = integrate.quad(shell, 0.0, 1.0, weight="alg-loga", wvar=(d - 1.0, 0.0), **options)
            value = -value
        else:
            value, _ = integrate.quad(
                lambda u: (1.0 - u**spec.s) * shell(u),
                0.0,
                1.0,
                weight="alg",
                wvar=(d - 1.0 - spec.s, 0.0),
                **options,
            )
        defects[i] = eta ** (d - spec.s) * value / spec.c_ds
    return defects


def _check_eta(particles: ParticleSystem, eta: float) -> None:
    eta_n = min_pair_distance(particles.positions)
    if not 0.0 < 2.0 * eta < min(1.0, eta_n):
        raise InadmissibleEtaError(
            f"eta={eta} must satisfy 0 < 2*eta < min(1, eta_N={eta_n:.6g})",
        )


def eta_approx(
    particles: ParticleSystem,
    field: GridField,
    eta: float,
    quad: ExtendedQuadrature = DEFAULT_QUADRATURE,
    report: Optional[ModulatedEnergyReport] = None,
) -> float:
    """E_{N,η} = ∫|ξ|^γ|∇(h_{N,η} - h)|² через заряди, розмазані по сферах радіуса η

    Для сфер, що не перетинаються, взаємодія пар точна (аналог теореми Ньютона),
    самоенергія кожної сфери g_s(η), а перехресний член з полем відрізняється
    від точкового на радіальний інтеграл truncated_potential_defect.
    """
    _check_pair(particles, field)
    _check_eta(particles, eta)
    if report is None:
        report = modulated_energy(particles, field)
    n = particles.n
    self_energy = kernel_service.g(particles.spec, eta) / n
    defect = 2.0 / n * float(np.sum(truncated_potential_defect(particles, field, eta, quad)))
    return report.E_N + self_energy + defect


def eta_report(
    particles: ParticleSystem,
    field: GridField,
    etas: Sequence[float],
    quad: ExtendedQuadrature = DEFAULT_QUADRATURE,
) -> ModulatedEnergyReport:
    """Звіт E_N з таблицею (η, E_{N,η}, E_{N,η} - E_N - g_s(η)/N)"""
    report = modulated_energy(particles, field)
    values = []
    for eta in etas:
        e_eta = eta_approx(particles, field, eta, quad, report)
        defect = e_eta - report.E_N - kernel_service.g(particles.spec, eta) / particles.n
        values.append(EtaValue(eta=eta, E_eta=e_eta, defect=defect))
    return report.with_eta(values)


def _lift(spec: KernelSpec, points: np.ndarray) -> np.ndarray:
    """Заряди в R^{d+1} (ξ = 0); у кулонівському випадку без змін"""
    if spec.is_coulomb:
        return points
    return np.concatenate([points, np.zeros((len(points), 1))], axis=-1)


def _truncated_field(spec: KernelSpec, eta: float, charges: np.ndarray, sites: np.ndarray, q: float):
    """u = qΣ g_{s,η}(p - X_j) і ∇u у точках sites (координати вже підняті)"""
    value = np.zeros(len(sites))
    grad = np.zeros_like(sites)
    for X in charges:
        diff = sites - X
        if spec.is_coulomb:
            value += kernel_service.g_truncated(spec, eta, diff)
            grad += kernel_service.grad_g_truncated(spec, eta, diff)
        else:
            value += kernel_service.g_truncated(spec, eta, diff[:, :-1], diff[:, -1])
            grad += kernel_service.grad_g_truncated(spec, eta, diff[:, :-1], diff[:, -1])
    return q * value, q * grad


def _classify(distances: np.ndarray, radius: float, eta: float) -> np.ndarray:
    """Маска зарядів, сфери яких лежать усередині кулі; решта мусить бути зовні"""
    inside = distances + eta <= radius * (1.0 + 1e-12)
    outside = distances >= radius + eta
    covering = distances + radius <= eta
    bad = ~(inside | outside | covering)
    if np.any(bad):
        raise InadmissibleEtaError(
            f"Truncation spheres of radius {eta} cross the boundary of a ball of radius {radius}",
        )
    return inside


def _green_ball(
    spec: KernelSpec,
    points: np.ndarray,
    eta: float,
    ball: Ball,
    q: float,
    quad: ExtendedQuadrature,
) -> tuple[float, float]:
    """Тотожність Гріна: межовий інтеграл плюс точна енергія зарядів усередині"""
    center = np.asarray(ball.center, dtype=float)
    distances = np.linalg.norm(points - center, axis=-1)
    inside = _classify(distances, ball.radius, eta)

    interior = 0.0
    if np.any(inside):
        idx = np.flatnonzero(inside)
        interior = len(idx) * kernel_service.g(spec, eta)
        for i in idx:
            gaps = np.linalg.norm(np.delete(points, i, axis=0) - points[i], axis=-1)
            apart = gaps >= 2.0 * eta
            if np.any(apart):
                interior += float(np.sum(kernel_service.g(spec, gaps[apart])))
            # сфери, що перетинаються, взаємодіють слабше за точкові заряди
            interior += sum(kernel_service.shell_interaction(spec, eta, float(r)) for r in gaps[~apart])
        interior *= q * q

    charges = _lift(spec, points)
    lifted_center = _lift(spec, center[None, :])[0]
    exponent = sphere_measure_exponent(spec)

    def boundary(level: int) -> float:
        rule = boundary_rule(spec, quad.n_polar * 2**level, quad.n_azimuth * 2**level)
        sites = lifted_center + ball.radius * rule.nodes
        value, grad = _truncated_field(spec, eta, charges, sites, q)
        normal_derivative = np.einsum("ij,ij->i", grad, rule.nodes)
        return ball.radius**exponent * float(np.sum(rule.weights * value * normal_derivative))

    previous = boundary(0)
    change = math.inf
    for level in range(1, quad.max_levels + 1):
        current = boundary(level)
        change = abs(current - previous)
        previous = current
        if change <= quad.tol * max(abs(current), abs(interior), 1e-300):
            return interior + current, change
    raise QuadratureError("Boundary quadrature did not reach the tolerance", interior + previous, change)


def _volume_ball(
    spec: KernelSpec,
    points: np.ndarray,
    eta: float,
    ball: Ball,
    q: float,
    quad: ExtendedQuadrature,
) -> tuple[float, float]:
    """Пряма квадратура ∫_{B'} |ξ|^γ |∇u|² у сферичних координатах навколо центру"""
    center = np.asarray(ball.center, dtype=float)
    distances = np.linalg.norm(points - center, axis=-1)
    breaks = [b for dist in distances for b in (dist - eta, dist, dist + eta) if b > 0]
    inner = 0.0
    charges = _lift(spec, points)
    lifted_center = _lift(spec, center[None, :])[0]
    exponent = sphere_measure_exponent(spec)

    def volume(level: int) -> float:
        rule = boundary_rule(spec, quad.n_polar * 2**level, quad.n_azimuth * 2**level)
        edges = geometric_panels(inner, ball.radius, breaks)
        radial = panel_rule(edges, quad.n_radial)
        total = 0.0
        for rho, w_rho in zip(radial.nodes, radial.weights):
            sites = lifted_center + rho * rule.nodes
            _, grad = _truncated_field(spec, eta, charges, sites, q)
            total += w_rho * rho**exponent * float(np.sum(rule.weights * np.einsum("ij,ij->i", grad, grad)))
        return total

    previous = volume(0)
    change = math.inf
    for level in range(1, min(quad.max_levels, 3) + 1):
        current = volume(level)
        change = abs(current - previous)
        previous = current
        if change <= max(quad.tol, 1e-8) * max(abs(current), 1e-300):
            return current, change
    raise QuadratureError("Volume quadrature did not reach the tolerance", previous, change)


def _balls_of(region: Region) -> list[Ball]:
    if isinstance(region, BallCollection):
        return list(region.balls)
    return [region]


def _unpack(particles: Union[ParticleSystem, np.ndarray], spec: Optional[KernelSpec]) -> tuple[KernelSpec, np.ndarray]:
    if isinstance(particles, ParticleSystem):
        return particles.spec, np.asarray(particles.positions)
    if spec is None:
        raise ValueError("A kernel spec is required for raw point arrays")
    points = np.asarray(particles, dtype=float)
    if points.ndim == 1:
        points = points[:, None] if spec.d == 1 else points[None, :]
    return spec, points


def region_energy_terms(
    particles: Union[ParticleSystem, np.ndarray],
    eta: float,
    region: Region,
    quad: ExtendedQuadrature = DEFAULT_QUADRATURE,
    method: Literal["green", "volume"] = "green",
    spec: Optional[KernelSpec] = None,
) -> list[tuple[float, float]]:
    """(значення, оцінка похибки) для кожної кулі області"""
    spec, points = _unpack(particles, spec)
    if eta <= 0:
        raise InadmissibleEtaError(f"Truncation radius must be positive, got {eta}")
    q = 1.0 / len(points)
    evaluate = _green_ball if method == "green" else _volume_ball

    terms = []
    for ball in _balls_of(region):
        value, estimate = evaluate(spec, points, eta, ball, q, quad)
        logger.debug(f"Енергія в кулі r={ball.radius:.4g}: {value:.8g} (оцінка похибки {estimate:.1e})")
        terms.append((value, estimate))
    return terms


def region_energy(
    particles: Union[ParticleSystem, np.ndarray],
    eta: float,
    region: Region,
    quad: ExtendedQuadrature = DEFAULT_QUADRATURE,
    method: Literal["green", "volume"] = "green",
    spec: Optional[KernelSpec] = None,
) -> float:
    """∫_{B'×R} |ξ|^γ |∇h_{N,η}|² по кулях B'(y, r) ⊂ R^{d+1} (кулонівський випадок: круги на площині)"""
    terms = region_energy_terms(particles, eta, region, quad, method, spec)
    return float(sum(value for value, _ in terms))


def _particle_gradient(spec: KernelSpec, points: np.ndarray, sites: np.ndarray) -> np.ndarray:
    """∇h_N у точках sites (уже піднятих), без усічення"""
    grad = np.zeros_like(sites)
    charges = _lift(spec, points)
    for X in charges:
        diff = sites - X
        if spec.is_coulomb:
            grad += kernel_service.grad_g(spec, diff)
        else:
            grad += kernel_service.extended_grad_g(spec, diff[:, :-1], diff[:, -1])
    return grad / len(points)


def _field_gradient_at_height(field: GridField, xi: float) -> np.ndarray:
    """∇_{(x,ξ)} h(x, ξ) на комірках через згортку з градієнтом розширеного ядра"""
    spec = field.spec
    n, d, dx = field.n, field.d, field.dx
    idx = np.fft.fftfreq(2 * n, 1.0 / (2 * n)) * dx
    offsets = np.stack(np.meshgrid(*([idx] * d), indexing="ij"), axis=-1)
    kernel = kernel_service.extended_grad_g(spec, offsets, xi)
    shape = (2 * n,) * d
    padded = np.zeros(shape)
    padded[(slice(0, n),) * d] = field.values
    density_hat = np.fft.rfftn(padded)
    window = (slice(0, n),) * d
    return np.stack(
        [
            np.fft.irfftn(np.fft.rfftn(kernel[..., a]) * density_hat, s=shape)[window] * field.cell_volume
            for a in range(d + 1)
        ],
        axis=-1,
    )


def lp_gradient_distance(
    particles: ParticleSystem,
    field: GridField,
    balls: Optional[BallCollection],
    p: float,
    window: float,
    quad: ExtendedQuadrature = DEFAULT_QUADRATURE,
) -> float:
    """(Σ F^p Δx^d)^{1/p} по комірках вікна поза кулями, F² = ∫|ξ|^γ|∇(h_N - h)|² dξ"""
    _check_pair(particles, field)
    spec = field.spec
    upper = 2.0 * spec.d / (spec.s + spec.d)
    if not 1.0 <= p < upper:
        raise InadmissibleExponentError(f"p={p} must satisfy 1 <= p < 2d/(s+d) = {upper:.6g}")

    mesh = field.mesh
    cells = np.moveaxis(mesh, 0, -1).reshape(-1, spec.d)
    keep = np.all(np.abs(cells) <= window, axis=-1)
    if balls is not None:
        for ball in balls.balls:
            keep &= np.linalg.norm(cells - np.asarray(ball.center), axis=-1) >= ball.radius
    if not np.any(keep):
        return 0.0
    sites = cells[keep]
    points = np.asarray(particles.positions)

    if spec.is_coulomb:
        field_grad = np.moveaxis(potential_fields(field).grad, 0, -1).reshape(-1, spec.d)[keep]
        gap = _particle_gradient(spec, points, sites) - field_grad
        squared = np.einsum("ij,ij->i", gap, gap)
    else:
        rule = xi_rule(spec.gamma, quad.n_xi, scale=max(field.dx, 0.1 * field.L))
        squared = np.zeros(len(sites))
        for xi, weight in zip(rule.nodes, rule.weights):
            lifted = np.concatenate([sites, np.full((len(sites), 1), xi)], axis=-1)
            field_grad = _field_gradient_at_height(field, xi).reshape(-1, spec.d + 1)[keep]
            gap = _particle_gradient(spec, points, lifted) - field_grad
            # множник 2: внесок ξ < 0 симетричний
            squared += 2.0 * weight * np.einsum("ij,ij->i", gap, gap)

    magnitude = np.sqrt(squared)
    return float(np.sum(magnitude**p) * field.cell_volume) ** (1.0 / p)


def annulus_closed_form(spec: KernelSpec, eta: float, r: float) -> float:
    """g_s(η) - g_s(r): енергія одного заряду в кулі радіуса r"""
    return kernel_service.g(spec, eta) - kernel_service.g(spec, r)
