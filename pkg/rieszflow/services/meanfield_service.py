import logging
import math
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, ndimage

from rieszflow.exceptions import (
    GridMismatchError,
    ParticleOutsideGridError,
    SupportTooCloseError,
    VelocityBlowUpError,
)
from rieszflow.models.grid import FieldDiagnostics, GridField, GridSample, PotentialFields
from rieszflow.models.kernel import KernelSpec
from rieszflow.models.particles import FlowParameters
from rieszflow.services.densities import uniform_patch
from rieszflow.services.dynamics_service import perp

logger = logging.getLogger(__name__)

SUPPORT_MARGIN = 0.1
SUPPORT_TOL = 1e-10
DEALIAS = 2.0 / 3.0
HOLDER_REACH = 8


def singular_cell_average(spec: KernelSpec, dx: float) -> float:
    """Точне середнє g_s по комірці зі зарядом у центрі"""
    a = dx / 2.0
    s = spec.s
    if spec.d == 1:
        value = 1.0 - math.log(a) if spec.is_log else a ** (-s) / (1.0 - s)
        return value / spec.c_ds

    # квадрат ділиться на 8 трикутників; R(θ) = a·secθ
    if spec.is_log:
        def primitive(theta):
            R = a / math.cos(theta)
            return R * R / 4.0 - R * R / 2.0 * math.log(R)

        total, _ = integrate.quad(primitive, 0.0, math.pi / 4.0, epsabs=0.0, epsrel=1e-13)
        return 2.0 / a**2 * total / spec.c_ds

    total, _ = integrate.quad(
        lambda theta: math.cos(theta) ** (s - 2.0), 0.0, math.pi / 4.0, epsabs=0.0, epsrel=1e-13
    )
    return 2.0 * a ** (-s) / (2.0 - s) * total / spec.c_ds


def _padded_offsets(n: int, d: int, dx: float) -> np.ndarray:
    """|m|·Δx для зсувів m на подвоєній періодичній сітці"""
    idx = np.fft.fftfreq(2 * n, 1.0 / (2 * n))
    axes = np.meshgrid(*([idx] * d), indexing="ij")
    return dx * np.sqrt(sum(a * a for a in axes))


@lru_cache(maxsize=16)
def _kernel_spectrum(spec: KernelSpec, L: float, n: int) -> np.ndarray:
    dx = 2.0 * L / n
    r = _padded_offsets(n, spec.d, dx)
    safe = np.where(r > 0, r, 1.0)
    kernel = -np.log(safe) / spec.c_ds if spec.is_log else safe ** (-spec.s) / spec.c_ds
    kernel[(0,) * spec.d] = singular_cell_average(spec, dx)
    return np.fft.rfftn(kernel)


@lru_cache(maxsize=16)
def _wave_numbers(d: int, n: int, dx: float) -> tuple[list, np.ndarray]:
    """Хвильові вектори по осях для rfftn і маска фільтра 2/3"""
    m = 2 * n
    full = np.fft.fftfreq(m, 1.0 / m)
    half = np.fft.rfftfreq(m, 1.0 / m)
    per_axis = [full] * (d - 1) + [half]
    grids = np.meshgrid(*per_axis, indexing="ij")
    mask = np.ones(grids[0].shape, dtype=bool)
    for g in grids:
        mask &= np.abs(g) < DEALIAS * m / 2.0
    k = [2.0 * np.pi / (m * dx) * g for g in grids]
    return k, mask


def potential_of(spec: KernelSpec, L: float, n: int, values: np.ndarray) -> PotentialFields:
    """h = g_s∗ν, ∇h і ∇²h для довільної (зокрема знакозмінної) сіткової міри ν"""
    d = spec.d
    dx = 2.0 * L / n
    shape = (2 * n,) * d
    padded = np.zeros(shape)
    padded[(slice(0, n),) * d] = values
    window = (slice(0, n),) * d
    volume = dx**d

    h_hat = _kernel_spectrum(spec, L, n) * np.fft.rfftn(padded)
    h = np.fft.irfftn(h_hat, s=shape)[window] * volume

    k, mask = _wave_numbers(d, n, dx)
    filtered = np.where(mask, h_hat, 0.0)
    grad = np.stack([np.fft.irfftn(1j * ka * filtered, s=shape)[window] * volume for ka in k])
    hess = np.empty((d, d) + (n,) * d)
    for a in range(d):
        for b in range(a, d):
            hess[a, b] = np.fft.irfftn(-k[a] * k[b] * filtered, s=shape)[window] * volume
            hess[b, a] = hess[a, b]
    return PotentialFields(h=h, grad=grad, hess=hess)


def check_support(field: GridField) -> None:
    peak = float(np.max(field.values))
    if peak == 0.0:
        return
    near_edge = np.zeros(field.values.shape, dtype=bool)
    for axis in field.mesh:
        near_edge |= np.abs(axis) > (1.0 - SUPPORT_MARGIN) * field.L
    if np.any(field.values[near_edge] > SUPPORT_TOL * peak):
        raise SupportTooCloseError(
            f"Density support reaches within {SUPPORT_MARGIN:.0%} of the box boundary (L={field.L})",
        )


def potential_fields(field: GridField) -> PotentialFields:
    cached = field.cached_potential
    if cached is not None:
        return cached
    check_support(field)
    fields = potential_of(field.spec, field.L, field.n, field.values)
    field.remember_potential(fields)
    return fields


def riesz_potential(field: GridField) -> tuple[np.ndarray, np.ndarray]:
    """(h, ∇h) на комірках; ∇h має форму (d, n, ..., n)"""
    fields = potential_fields(field)
    return fields.h, fields.grad


def _grid_coordinates(field: GridField, points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(np.abs(points) > field.L):
        raise ParticleOutsideGridError(f"Points leave the box [-{field.L}, {field.L}]^{field.d}")
    return ((points + field.L) / field.dx - 0.5).T


def interpolate(field: GridField, grid_values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Кубічна сплайн-інтерполяція сіткової величини в точках"""
    coords = _grid_coordinates(field, points)
    return ndimage.map_coordinates(grid_values, coords, order=3, mode="nearest")


def potential_at(field: GridField, points: np.ndarray) -> np.ndarray:
    return interpolate(field, potential_fields(field).h, points)


def gradient_at(field: GridField, points: np.ndarray) -> np.ndarray:
    grad = potential_fields(field).grad
    return np.stack([interpolate(field, grad[a], points) for a in range(field.d)], axis=-1)


def potential_direct(field: GridField, points: np.ndarray) -> np.ndarray:
    """Перевірочний режим: пряма сума g_s по комірках замість інтерполяції"""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    cells = field.mesh.reshape(field.d, -1).T
    weights = field.values.reshape(-1) * field.cell_volume
    out = np.empty(len(points))
    self_average = singular_cell_average(field.spec, field.dx)
    for i, x in enumerate(points):
        r = np.linalg.norm(cells - x, axis=-1)
        near = r < 0.5 * field.dx
        safe = np.where(near, 1.0, r)
        g = -np.log(safe) / field.spec.c_ds if field.spec.is_log else safe ** (-field.spec.s) / field.spec.c_ds
        out[i] = float(np.sum(np.where(near, self_average, g) * weights))
    return out


def field_energy(field: GridField) -> float:
    """∬ g_s dμ dμ ≈ Σ h·μ·Δx^d"""
    h = potential_fields(field).h
    return float(np.sum(h * field.values) * field.cell_volume)


def field_distance(first: GridField, second: GridField) -> float:
    """Енергія знакозмінної різниці μ1 - μ2 (може бути трохи від'ємною)"""
    if not first.same_grid(second):
        raise GridMismatchError("Fields live on different grids or kernels")
    diff = first.values - second.values
    h = potential_of(first.spec, first.L, first.n, diff).h
    return float(np.sum(h * diff) * first.cell_volume)


def l1_distance(first: GridField, second: GridField) -> float:
    if first.L != second.L or first.n != second.n or first.d != second.d:
        raise GridMismatchError("Fields live on different grids")
    return float(np.sum(np.abs(first.values - second.values)) * first.cell_volume)


def restrict(field: GridField, n: int) -> GridField:
    """Усереднення на грубшу сітку (n ділить field.n)"""
    factor = field.n // n
    if factor * n != field.n:
        raise GridMismatchError(f"Cannot restrict n={field.n} onto n={n}")
    shape = []
    for _ in range(field.d):
        shape += [n, factor]
    coarse = field.values.reshape(shape).mean(axis=tuple(range(1, 2 * field.d, 2)))
    return GridField(spec=field.spec, L=field.L, n=n, values=coarse, t=field.t)


def cell_velocity(field: GridField, flow: FlowParameters) -> np.ndarray:
    """u = -f(α∇h + β∇^⊥h) - ∇V у центрах комірок, форма (d, n, ..., n)

    f = flow.pair_factor узгоджує сітку з частинками: для невпорядкованих пар
    u = -α∇h, для впорядкованих (за замовчуванням) u = -2α∇h.
    """
    grad = potential_fields(field).grad
    f = flow.pair_factor
    u = -f * flow.alpha * grad
    if flow.beta != 0.0:
        u = u - f * flow.beta * np.moveaxis(perp(np.moveaxis(grad, 0, -1)), -1, 0)
    if flow.potential is not None:
        x = np.moveaxis(field.mesh, 0, -1)
        u = u - np.moveaxis(flow.potential.gradient(x), -1, 0)
    if not np.all(np.isfinite(u)):
        raise VelocityBlowUpError(f"Non-finite grid velocity at t={field.t}")
    return u


def _face_velocities(u: np.ndarray) -> list[np.ndarray]:
    """Середні швидкості на внутрішніх гранях уздовж кожної осі"""
    faces = []
    for a in range(u.shape[0]):
        lo = [slice(None)] * (u.ndim - 1)
        hi = [slice(None)] * (u.ndim - 1)
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        faces.append(0.5 * (u[a][tuple(lo)] + u[a][tuple(hi)]))
    return faces


def stable_dt(field: GridField, flow: FlowParameters, cfl: float = 0.5) -> float:
    faces = _face_velocities(cell_velocity(field, flow))
    speed = sum(float(np.max(np.abs(face))) for face in faces)
    return math.inf if speed == 0.0 else cfl * field.dx / speed


def _upwind_update(values: np.ndarray, faces: list[np.ndarray], dt: float, dx: float) -> np.ndarray:
    new = values.copy()
    for a, face in enumerate(faces):
        lo = [slice(None)] * values.ndim
        hi = [slice(None)] * values.ndim
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        upwind = np.where(face > 0, values[tuple(lo)], values[tuple(hi)])
        flux = face * upwind
        # нульовий потік через межу коробки
        pad = [(0, 0)] * values.ndim
        pad[a] = (1, 1)
        new -= dt / dx * np.diff(np.pad(flux, pad), axis=a)
    return new


def pde_step(
    field: GridField,
    dt: float,
    flow: FlowParameters = FlowParameters(),
    cfl: float = 0.5,
) -> GridField:
    """Просуває ∂_tμ = div(μ(f α∇h + f β∇^⊥h + ∇V)) на dt з підкроками за CFL"""
    if not 0.0 < cfl <= 1.0:
        raise ValueError(f"CFL number must lie in (0, 1], got {cfl}")
    if dt < 0:
        raise ValueError(f"Time step must be nonnegative, got {dt}")
    current = field
    remaining = dt
    while remaining > 1e-14 * max(1.0, abs(current.t)):
        faces = _face_velocities(cell_velocity(current, flow))
        speed = sum(float(np.max(np.abs(face))) for face in faces)
        step = remaining if speed == 0.0 else min(remaining, cfl * current.dx / speed)
        values = _upwind_update(current.values, faces, step, current.dx)

        mass_before = float(np.sum(current.values))
        clipped = float(-np.sum(values[values < 0.0])) * current.cell_volume
        values = np.maximum(values, 0.0)
        if clipped > 0.0 and np.sum(values) > 0:
            values *= mass_before / float(np.sum(values))
        remaining -= step
        t_next = field.t + dt if remaining <= 1e-14 * max(1.0, abs(current.t)) else current.t + step
        current = current.with_values(values, t=t_next, clipped=clipped)
    return current


def pde_solve(
    field: GridField,
    t_end: float,
    cfl: float = 0.5,
    flow: FlowParameters = FlowParameters(),
    sample_times: Optional[Sequence[float]] = None,
) -> tuple[GridField, list[GridSample]]:
    """Розв'язок до t_end з підкроками, що точно потрапляють у моменти вибірки"""
    if t_end < field.t:
        raise ValueError(f"t_end={t_end} is before the field time {field.t}")
    targets = sorted({float(t) for t in (sample_times or []) if field.t < t < t_end} | {float(t_end)})
    samples = [grid_sample(field)]
    current = field
    for target in targets:
        if target <= current.t:
            continue
        current = pde_step(current, target - current.t, flow, cfl)
        samples.append(grid_sample(current))
    logger.debug(f"Сітка n={field.n}: t={current.t}, обрізана маса {current.clipped_mass:.3e}")
    return current, samples


def support_radius(field: GridField) -> float:
    peak = float(np.max(field.values))
    if peak == 0.0:
        return 0.0
    radius = np.sqrt(np.sum(field.mesh**2, axis=0))
    return float(np.max(radius[field.values > SUPPORT_TOL * peak]))


def grid_sample(field: GridField) -> GridSample:
    fields = potential_fields(field)
    return GridSample(
        t=field.t,
        mass=field.mass,
        energy=field_energy(field),
        sup_grad_h=float(np.max(np.sqrt(np.sum(fields.grad**2, axis=0)))),
        sup_hess_h=float(np.max(np.sqrt(np.sum(fields.hess**2, axis=(0, 1))))),
        support_radius=support_radius(field),
        clipped_mass=field.clipped_mass,
    )


def patch_exact(
    rho0: float,
    R0: float,
    t: float,
    L: float = 1.0,
    n: int = 256,
    flow: FlowParameters = FlowParameters(),
) -> GridField:
    """Автомодельний розв'язок ρ = ρ0/(1 + kρ0t), R = R0·√(1 + kρ0t) для d=2, s=0

    Темп k = f·α береться з тих самих FlowParameters, що й у pde_solve:
    для невпорядкованих пар k = α (u = -α∇h), для впорядкованих k = 2α.
    """
    if rho0 <= 0 or R0 <= 0:
        raise ValueError("Patch density and radius must be positive")
    if not flow.is_pure_gradient:
        raise ValueError("The self-similar patch needs a pure gradient flow (beta = 0, no potential)")
    stretch = 1.0 + flow.pair_factor * flow.alpha * rho0 * t
    spec = KernelSpec.build(2, 0.0)
    return uniform_patch(spec, L, n, R0 * math.sqrt(stretch), density=rho0 / stretch, t=t)


def holder_quotient(field: GridField, sigma: float, reach: int = HOLDER_REACH) -> float:
    """max |μ(x) - μ(y)| / |x - y|^σ по парах комірок на відстані до reach·Δx"""
    values = field.values
    best = 0.0
    offsets = range(-reach, reach + 1)
    if field.d == 1:
        shifts = [(i,) for i in range(1, reach + 1)]
    else:
        shifts = [
            (i, j)
            for i in offsets
            for j in offsets
            if (i > 0 or (i == 0 and j > 0)) and i * i + j * j <= reach * reach
        ]
    for shift in shifts:
        a = [slice(None)] * field.d
        b = [slice(None)] * field.d
        for axis, k in enumerate(shift):
            if k >= 0:
                a[axis], b[axis] = slice(0, field.n - k), slice(k, field.n)
            else:
                a[axis], b[axis] = slice(-k, field.n), slice(0, field.n + k)
        gap = np.abs(values[tuple(b)] - values[tuple(a)])
        distance = field.dx * math.sqrt(sum(k * k for k in shift))
        best = max(best, float(np.max(gap)) / distance**sigma)
    return best


def grad_mu_lp(field: GridField, p: float = 2.0) -> float:
    """Дискретна норма ‖∇μ‖_{L^p} центральними різницями"""
    if p < 1:
        raise ValueError(f"Lebesgue exponent must be >= 1, got {p}")
    parts = np.gradient(field.values, field.dx)
    if field.d == 1:
        parts = [parts]
    magnitude = np.sqrt(sum(g * g for g in parts))
    return float(np.sum(magnitude**p) * field.cell_volume) ** (1.0 / p)


def diagnostics(field: GridField, sigma: float, p: float = 2.0) -> FieldDiagnostics:
    if not 0.0 < sigma <= 1.0:
        raise ValueError(f"Hölder exponent must lie in (0, 1], got {sigma}")
    sample = grid_sample(field)
    holder = holder_quotient(field, sigma)
    l1 = float(np.sum(np.abs(field.values)) * field.cell_volume)
    sup_density = float(np.max(field.values))
    c_sigma = sup_density + holder
    denominator = l1 + c_sigma
    return FieldDiagnostics(
        t=field.t,
        sigma=sigma,
        energy=sample.energy,
        mass=sample.mass,
        l1_norm=l1,
        sup_density=sup_density,
        sup_grad_h=sample.sup_grad_h,
        sup_hess_h=sample.sup_hess_h,
        holder_quotient=holder,
        c_sigma_norm=c_sigma,
        hess_ratio=sample.sup_hess_h / denominator if denominator > 0 else 0.0,
        grad_mu_lp=grad_mu_lp(field, p),
        lp_exponent=p,
        support_radius=sample.support_radius,
    )
