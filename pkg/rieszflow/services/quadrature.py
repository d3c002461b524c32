"""Квадратурні правила для інтегралів у R^d×R з вагою |ξ|^γ"""

from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import roots_jacobi

from rieszflow.models.kernel import KernelSpec


class Rule(NamedTuple):
    nodes: np.ndarray
    weights: np.ndarray


@lru_cache(maxsize=64)
def gauss_jacobi_unit(n: int, alpha: float, beta: float) -> Rule:
    """Вузли на [0, 1] з вагою (1 - u)^alpha · u^beta"""
    x, w = roots_jacobi(n, alpha, beta)
    return Rule(nodes=(1.0 + x) / 2.0, weights=w / 2.0 ** (alpha + beta + 1.0))


def xi_rule(gamma: float, n: int, scale: float) -> Rule:
    """∫_0^∞ |ξ|^γ G(ξ) dξ ≈ Σ W_k G(ξ_k) через ξ = scale·u/(1 - u)"""
    u, w = gauss_jacobi_unit(n, 0.0, gamma)
    xi = scale * u / (1.0 - u)
    jacobian = scale ** (gamma + 1.0) * (1.0 - u) ** (-gamma - 2.0)
    return Rule(nodes=xi, weights=w * jacobian)


def boundary_rule(spec: KernelSpec, n_polar: int, n_azimuth: int) -> Rule:
    """Напрямки θ на одиничній сфері і ваги для ∫ |θ_ξ|^γ f(θ) dσ

    Для кулонівського випадку це коло на площині без ξ-координати.
    """
    if spec.is_coulomb:
        psi = 2.0 * np.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
        directions = np.stack([np.cos(psi), np.sin(psi)], axis=-1)
        return Rule(nodes=directions, weights=np.full(n_azimuth, 2.0 * np.pi / n_azimuth))

    # u = |θ_ξ| ∈ [0, 1], вага u^γ (1 - u²)^{(d-2)/2}; парність по ξ дає множник 2
    half = (spec.d - 2) / 2.0
    u, w = gauss_jacobi_unit(n_polar, half, spec.gamma)
    w = 2.0 * w * (1.0 + u) ** half
    radial = np.sqrt(np.maximum(1.0 - u * u, 0.0))

    if spec.d == 1:
        planar = np.array([[1.0], [-1.0]])
        planar_weights = np.ones(2)
    else:
        psi = 2.0 * np.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
        planar = np.stack([np.cos(psi), np.sin(psi)], axis=-1)
        planar_weights = np.full(n_azimuth, 2.0 * np.pi / n_azimuth)

    x_part = radial[:, None, None] * planar[None, :, :]
    xi_part = np.broadcast_to(u[:, None, None], (len(u), len(planar), 1))
    directions = np.concatenate([x_part, xi_part], axis=-1).reshape(-1, spec.d + 1)
    weights = (w[:, None] * planar_weights[None, :]).reshape(-1)
    return Rule(nodes=directions, weights=weights)


def sphere_measure_exponent(spec: KernelSpec) -> float:
    """Показник r у ∫_{∂B'_r} |ξ|^γ dσ = r^{d+γ}·(...)"""
    if spec.is_coulomb:
        return 1.0
    return spec.d + spec.gamma


def geometric_panels(inner: float, outer: float, breaks=(), ratio: float = 2.0) -> np.ndarray:
    """Межі радіальних панелей, що згущуються до inner"""
    if outer <= inner:
        return np.array([inner, outer])
    edges = [outer]
    floor = max(inner, 1e-6 * outer)
    while edges[-1] / ratio > floor:
        edges.append(edges[-1] / ratio)
    edges.append(inner)
    edges += [b for b in breaks if inner < b < outer]
    return np.unique(np.array(edges))


def panel_rule(edges: np.ndarray, n: int) -> Rule:
    """Гаусс–Лежандр на кожній панелі"""
    x, w = np.polynomial.legendre.leggauss(n)
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (hi - lo) * x[None, :] + 0.5 * (hi + lo)
    weights = 0.5 * (hi - lo) * w[None, :]
    return Rule(nodes=nodes.reshape(-1), weights=weights.reshape(-1))


def check_exactness(gamma: float, n: int, degree: int = 20) -> float:
    """Найбільша відносна похибка правила на u^γ·u^k, k ≤ degree"""
    u, w = gauss_jacobi_unit(n, 0.0, gamma)
    worst = 0.0
    for k in range(degree + 1):
        exact = 1.0 / (gamma + k + 1.0)
        worst = max(worst, abs(float(np.sum(w * u**k)) - exact) / exact)
    return worst

