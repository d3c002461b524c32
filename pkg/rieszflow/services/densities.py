import logging
from typing import Callable, Optional, Sequence

import numpy as np

from rieszflow.models.grid import GridField, cell_mesh
from rieszflow.models.kernel import KernelSpec

logger = logging.getLogger(__name__)


def _cell_edges(L: float, n: int) -> np.ndarray:
    return np.linspace(-L, L, n + 1)


def _disc_quadrant_area(x: np.ndarray, y: np.ndarray, R: float) -> np.ndarray:
    """Знакова площа круга радіуса R у прямокутнику між (0, 0) і (x, y)"""
    sign = np.sign(x) * np.sign(y)
    x = np.minimum(np.abs(x), R)
    y = np.minimum(np.abs(y), R)

    def arc(u):
        # ∫_0^u √(R² - t²) dt
        return 0.5 * (u * np.sqrt(np.maximum(R * R - u * u, 0.0)) + R * R * np.arcsin(np.clip(u / R, -1.0, 1.0)))

    u_star = np.sqrt(np.maximum(R * R - y * y, 0.0))
    inside = x * x + y * y <= R * R
    partial = y * np.minimum(x, u_star) + np.where(x > u_star, arc(x) - arc(u_star), 0.0)
    return sign * np.where(inside, x * y, partial)


def disc_cell_fractions(L: float, n: int, radius: float, center: Sequence[float] = (0.0, 0.0)) -> np.ndarray:
    """Точна частка площі кожної комірки, покрита кругом"""
    ex = _cell_edges(L, n) - center[0]
    ey = _cell_edges(L, n) - center[1]
    X, Y = np.meshgrid(ex, ey, indexing="ij")
    G = _disc_quadrant_area(X, Y, radius)
    area = G[1:, 1:] - G[:-1, 1:] - G[1:, :-1] + G[:-1, :-1]
    return area / (2.0 * L / n) ** 2


def interval_cell_fractions(L: float, n: int, radius: float, center: float = 0.0) -> np.ndarray:
    edges = _cell_edges(L, n)
    overlap = np.minimum(edges[1:], center + radius) - np.maximum(edges[:-1], center - radius)
    return np.maximum(overlap, 0.0) / (2.0 * L / n)


def uniform_patch(
    spec: KernelSpec,
    L: float,
    n: int,
    radius: float = 0.5,
    center: Optional[Sequence[float]] = None,
    density: Optional[float] = None,
    t: float = 0.0,
) -> GridField:
    """Рівномірний диск (інтервал) з точною растеризацією граничних комірок"""
    if radius <= 0:
        raise ValueError(f"Patch radius must be positive, got {radius}")
    if spec.d == 1:
        c = 0.0 if center is None else float(center[0])
        fractions = interval_cell_fractions(L, n, radius, c)
        volume = 2.0 * radius
    else:
        c2 = (0.0, 0.0) if center is None else tuple(center)
        fractions = disc_cell_fractions(L, n, radius, c2)
        volume = np.pi * radius**2
    rho = 1.0 / volume if density is None else density
    return GridField(spec=spec, L=L, n=n, values=rho * fractions, t=t)


def _bump_profile(r2: np.ndarray) -> np.ndarray:
    """exp(1 - 1/(1 - r²)) всередині одиничної кулі, нуль поза нею"""
    inside = r2 < 1.0
    safe = np.where(inside, r2, 0.0)
    return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe)), 0.0)


def _normalized(spec: KernelSpec, L: float, n: int, values: np.ndarray, mass: float = 1.0) -> GridField:
    total = float(np.sum(values)) * (2.0 * L / n) ** spec.d
    if total <= 0:
        raise ValueError("Density has no mass on this grid")
    return GridField(spec=spec, L=L, n=n, values=values * (mass / total))


def bump(
    spec: KernelSpec,
    L: float,
    n: int,
    radius: float = 0.5,
    center: Optional[Sequence[float]] = None,
) -> GridField:
    """Гладка (C^∞) шапочка з носієм у кулі радіуса radius"""
    mesh = cell_mesh(L, n, spec.d)
    shift = np.zeros(spec.d) if center is None else np.asarray(center, dtype=float)
    r2 = sum((mesh[k] - shift[k]) ** 2 for k in range(spec.d)) / radius**2
    return _normalized(spec, L, n, _bump_profile(r2))


def two_bump(
    spec: KernelSpec,
    L: float,
    n: int,
    radius: float = 0.25,
    separation: float = 0.6,
    weight: float = 0.5,
) -> GridField:
    """Суміш двох шапочок на осі x_1 з вагами weight і 1 - weight"""
    if not 0.0 < weight < 1.0:
        raise ValueError(f"Mixture weight must lie in (0, 1), got {weight}")
    offset = np.zeros(spec.d)
    offset[0] = separation / 2.0
    left = bump(spec, L, n, radius, -offset).values
    right = bump(spec, L, n, radius, offset).values
    return _normalized(spec, L, n, weight * left + (1.0 - weight) * right)


DENSITIES: dict[str, Callable[..., GridField]] = {
    "uniform_patch": uniform_patch,
    "bump": bump,
    "two_bump": two_bump,
}


def make_density(name: str, spec: KernelSpec, L: float, n: int, **params) -> GridField:
    if name not in DENSITIES:
        raise ValueError(f"Unknown initial density {name!r}; choose from {sorted(DENSITIES)}")
    logger.debug(f"Густина {name} на сітці n={n}, L={L}: {params}")
    return DENSITIES[name](spec, L, n, **params)


def perturbed(field: GridField, amplitude: float, radius: float = 0.2, center: Optional[Sequence[float]] = None) -> GridField:
    """μ + amplitude·(гладка шапочка), знову нормована до одиничної маси"""
    if amplitude == 0.0:
        return field
    if center is None:
        center = [0.25 * field.L] + [0.0] * (field.d - 1)
    shape = bump(field.spec, field.L, field.n, radius, center).values
    values = np.maximum(field.values + amplitude * shape, 0.0)
    result = _normalized(field.spec, field.L, field.n, values)
    return result.with_values(result.values, t=field.t)
