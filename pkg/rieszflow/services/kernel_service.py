import logging
import math

import numpy as np
from scipy import integrate

from rieszflow.exceptions import KernelDomainError, QuadratureError, SingularityError
from rieszflow.models.kernel import KernelSpec
from rieszflow.services.constants import normalization_constant, unit_sphere_measure

logger = logging.getLogger(__name__)

# Ближче до заряду ядро не обчислюємо: для цього є усічені ядра
SINGULAR_RADIUS = 1e-14

__all__ = [
    "normalization_constant",
    "g",
    "grad_g",
    "g_plus",
    "extended_g",
    "extended_grad_g",
    "g_truncated",
    "grad_g_truncated",
    "shell_interaction",
    "sphere_weight_integral",
    "sphere_weight_closed_form",
    "flux_through_sphere",
    "cylinder_flux",
]


def _radial(spec: KernelSpec, r: np.ndarray) -> np.ndarray:
    if spec.is_log:
        return -np.log(r) / spec.c_ds
    return r ** (-spec.s) / spec.c_ds


def _radial_derivative(spec: KernelSpec, r: np.ndarray) -> np.ndarray:
    """∂_r g_s(r)"""
    if spec.is_log:
        return -1.0 / (spec.c_ds * r)
    return -spec.s * r ** (-spec.s - 1.0) / spec.c_ds


def _check_radius(r: np.ndarray) -> None:
    if np.any(r < SINGULAR_RADIUS):
        raise SingularityError(
            f"Kernel evaluated at distance {float(np.min(r))!r} < {SINGULAR_RADIUS}",
        )


def _require_extension(spec: KernelSpec) -> None:
    if not spec.is_extension:
        raise KernelDomainError(
            f"No extension is used for the Coulomb kernel ({spec.label})",
        )


def g(spec: KernelSpec, r):
    """g_s(r) = c^{-1} r^{-s} або -c^{-1} log r"""
    r = np.asarray(r, dtype=float)
    _check_radius(r)
    value = _radial(spec, r)
    return float(value) if value.ndim == 0 else value


def grad_g(spec: KernelSpec, x) -> np.ndarray:
    """∇g_s(x) для точок x форми (..., d)"""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    _check_radius(r)
    if spec.is_log:
        factor = -1.0 / (spec.c_ds * r**2)
    else:
        factor = -spec.s * r ** (-spec.s - 2.0) / spec.c_ds
    return factor[..., None] * x


def g_plus(spec: KernelSpec, t):
    """g_s^+(t): c^{-1} t^{-s}, для s = 0 це c^{-1} max(-log t, 0); у нулі +inf"""
    t = np.asarray(t, dtype=float)
    safe = np.where(t > 0, t, 1.0)
    if spec.is_log:
        finite = np.maximum(-np.log(safe), 0.0) / spec.c_ds
    else:
        finite = safe ** (-spec.s) / spec.c_ds
    value = np.where(t > 0, finite, np.inf)
    return float(value) if value.ndim == 0 else value


def _lift(x, xi) -> np.ndarray:
    """Точки (x, ξ) ∈ R^d×R одним масивом форми (..., d+1)"""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    xi = np.broadcast_to(xi, x.shape[:-1])
    return np.concatenate([x, xi[..., None]], axis=-1)


def extended_g(spec: KernelSpec, x, xi):
    """g_s(x, ξ) = c^{-1}|(x, ξ)|^{-s} (логарифм для s = 0, d = 1)"""
    _require_extension(spec)
    rho = np.linalg.norm(_lift(x, xi), axis=-1)
    _check_radius(rho)
    value = _radial(spec, rho)
    return float(value) if value.ndim == 0 else value


def extended_grad_g(spec: KernelSpec, x, xi) -> np.ndarray:
    """Градієнт розширеного ядра по (x, ξ), форма (..., d+1)"""
    _require_extension(spec)
    p = _lift(x, xi)
    rho = np.linalg.norm(p, axis=-1)
    _check_radius(rho)
    return (_radial_derivative(spec, rho) / rho)[..., None] * p


def _truncation_points(spec: KernelSpec, x, xi) -> np.ndarray:
    if spec.is_extension:
        return _lift(x, xi)
    # Кулонівський випадок живе на площині R^2
    return np.asarray(x, dtype=float)


def g_truncated(spec: KernelSpec, eta: float, x, xi=0.0):
    """g_{s,η} = g_s(η) ∧ g_s, обчислене в точці (x, ξ)"""
    if eta <= 0:
        raise ValueError(f"Truncation radius must be positive, got {eta}")
    rho = np.linalg.norm(_truncation_points(spec, x, xi), axis=-1)
    plateau = _radial(spec, np.asarray(eta, dtype=float))
    safe = np.maximum(rho, eta)
    value = np.minimum(plateau, _radial(spec, safe))
    return float(value) if value.ndim == 0 else value


def grad_g_truncated(spec: KernelSpec, eta: float, x, xi=0.0) -> np.ndarray:
    """Градієнт g_{s,η}: нуль на плато, градієнт ядра зовні"""
    if eta <= 0:
        raise ValueError(f"Truncation radius must be positive, got {eta}")
    p = _truncation_points(spec, x, xi)
    rho = np.linalg.norm(p, axis=-1)
    outside = rho >= eta
    safe = np.where(outside, rho, 1.0)
    factor = np.where(outside, _radial_derivative(spec, safe) / safe, 0.0)
    return factor[..., None] * p


def _kink_angle(r: float, reach: float) -> list[float]:
    """Кут ψ, де r² + 2r·reach·cos ψ + η² = η², тобто злам g_{s,η} на колі"""
    if reach <= 0:
        return []
    cosine = -r / (2.0 * reach)
    return [math.acos(cosine)] if -1.0 < cosine < 1.0 else []


def shell_interaction(spec: KernelSpec, eta: float, r: float, tol: float = 1e-10) -> float:
    """⟨g_{s,η}(· - X_j), δ_η(X_i)⟩ для |X_i - X_j| = r

    Взаємодія двох зарядів, розмазаних по сферах радіуса η. Для сфер, що не
    перетинаються (r ≥ 2η), це g_s(r); при r = 0 це самоенергія g_s(η).
    Для перетину сфер береться середнє g_{s,η} по сфері з вагою |θ_ξ|^γ.
    """
    if eta <= 0:
        raise ValueError(f"Truncation radius must be positive, got {eta}")
    if r < 0:
        raise ValueError(f"Distance must be nonnegative, got {r}")
    if r >= 2.0 * eta:
        return g(spec, r)
    plateau = float(_radial(spec, np.asarray(eta, dtype=float)))

    def truncated(rho2: float) -> float:
        rho = math.sqrt(max(rho2, 0.0))
        return plateau if rho <= eta else float(_radial(spec, np.asarray(rho)))

    def quad(f, a: float, b: float, **kwargs) -> float:
        if b <= a:
            return 0.0
        value, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=tol, limit=200, **kwargs)
        return value

    if spec.is_extension and spec.d == 2:
        gamma = spec.gamma

        def ring(u: float) -> float:
            reach = eta * math.sqrt(max(1.0 - u * u, 0.0))
            return quad(
                lambda psi: truncated(r * r + 2.0 * r * reach * math.cos(psi) + eta * eta),
                0.0,
                math.pi,
                points=_kink_angle(r, reach) or None,
            )

        # вище u_c кола на сфері вже не перетинають плато сусіда
        u_c = math.sqrt(max(1.0 - (r / (2.0 * eta)) ** 2, 0.0))
        total = quad(ring, 0.0, u_c, weight="alg", wvar=(gamma, 0.0))
        total += quad(lambda u: u**gamma * ring(u), u_c, 1.0)
        return total * (gamma + 1.0) / math.pi

    # коло: площина для кулонівського випадку або (x, ξ) для d = 1
    gamma = spec.gamma if spec.is_extension else 0.0
    total = quad(
        lambda phi: abs(math.sin(phi)) ** gamma * truncated(r * r + 2.0 * r * eta * math.cos(phi) + eta * eta),
        0.0,
        math.pi,
        points=_kink_angle(r, eta) or None,
    )
    norm = math.sqrt(math.pi) * math.gamma((gamma + 1.0) / 2.0) / math.gamma(gamma / 2.0 + 1.0)
    return total / norm


def sphere_weight_closed_form(spec: KernelSpec, t: float) -> float:
    """t^{s+1} c_{d,s} / s з канонічним (не налаштовуваним) c_{d,s}"""
    return t ** (spec.s + 1.0) * normalization_constant(spec.d, spec.s) / spec.s


def _polar_integral(spec: KernelSpec, integrand, tol: float) -> float:
    """∫_{-1}^{1} (1-u²)^{(d-2)/2} |u|^γ F(u) du для парної F, з вагою алгебраїчного типу"""
    beta = (spec.d - 2) / 2.0
    value, error = integrate.quad(
        lambda u: (1.0 + u) ** beta * integrand(u),
        0.0,
        1.0,
        weight="alg",
        wvar=(spec.gamma, beta),
        epsabs=0.0,
        epsrel=tol,
        limit=200,
    )
    if not math.isfinite(value) or error > 10.0 * tol * abs(value):
        raise QuadratureError("Polar quadrature did not converge", value, error)
    return 2.0 * value


def sphere_weight_integral(spec: KernelSpec, t: float, tol: float = 1e-12) -> float:
    """∫_{∂B'_t} |ξ|^γ dσ квадратурою; має дорівнювати t^{s+1} c_{d,s} / s"""
    _require_extension(spec)
    if spec.s <= 0:
        raise KernelDomainError("Sphere weight identity requires s > 0")
    if t <= 0:
        raise ValueError(f"Sphere radius must be positive, got {t}")
    angular = _polar_integral(spec, lambda u: 1.0, tol)
    return t ** (spec.s + 1.0) * unit_sphere_measure(spec.d) * angular


def flux_through_sphere(spec: KernelSpec, t: float, tol: float = 1e-12) -> float:
    """∫_{∂B'_t} |ξ|^γ n·∇g_s dσ; для правильного c_{d,s} це -1"""
    if t <= 0:
        raise ValueError(f"Sphere radius must be positive, got {t}")
    if spec.is_coulomb:
        # коло радіуса t на площині, нормаль у точці (t, 0) дорівнює (1, 0)
        grad = grad_g(spec, np.array([t, 0.0]))
        return float(2.0 * math.pi * t * grad[0])

    def normal_derivative(u: float) -> float:
        # точка на сфері: |x| = t√(1-u²), ξ = t·u; від напрямку в R^d не залежить
        x = np.zeros(spec.d)
        x[0] = t * math.sqrt(max(1.0 - u * u, 0.0))
        p = np.append(x, t * u)
        grad = extended_grad_g(spec, x, t * u)
        return float(np.dot(grad, p) / t) * t**spec.gamma

    angular = _polar_integral(spec, normal_derivative, tol)
    return t**spec.d * unit_sphere_measure(spec.d) * angular


def cylinder_flux(spec: KernelSpec, tol: float = 1e-12) -> float:
    """Той самий потік через нескінченний циліндр B_1×R: 2ω_{d-1}∫_0^∞ ξ^γ ∂_r g_s(1, ξ) dξ"""
    _require_extension(spec)

    def radial_part(xi: float) -> float:
        x = np.zeros(spec.d)
        x[0] = 1.0
        return float(extended_grad_g(spec, x, xi)[0])

    head, head_err = integrate.quad(
        radial_part, 0.0, 1.0, weight="alg", wvar=(spec.gamma, 0.0), epsrel=tol, epsabs=0.0
    )
    tail, tail_err = integrate.quad(
        lambda xi: xi**spec.gamma * radial_part(xi), 1.0, np.inf, epsrel=tol, epsabs=0.0, limit=200
    )
    total = head + tail
    if head_err + tail_err > 1e3 * tol * abs(total):
        raise QuadratureError("Cylinder flux quadrature did not converge", total, head_err + tail_err)
    return 2.0 * unit_sphere_measure(spec.d) * total
