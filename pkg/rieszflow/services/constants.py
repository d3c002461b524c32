import math

from scipy.special import betaln

from rieszflow.exceptions import KernelDomainError

SUPPORTED_DIMENSIONS = (1, 2)

# Нормування логарифмічного ядра: фундаментальний розв'язок на площині
LOG_NORMALIZATION = 2.0 * math.pi


def unit_sphere_measure(d: int) -> float:
    """ω_{d-1}: міра одиничної сфери в R^d (ω_0 = 2, ω_1 = 2π)"""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def check_kernel_domain(d: int, s: float) -> None:
    if d not in SUPPORTED_DIMENSIONS:
        raise KernelDomainError(f"Dimension d={d} is not supported (only 1 or 2)")
    if not (0.0 <= s < d):
        raise KernelDomainError(f"Riesz exponent s={s} must satisfy 0 <= s < d={d}")


def normalization_constant(d: int, s: float) -> float:
    """c_{d,s} = s·ω_{d-1}·B((s+2-d)/2, d/2) для s > 0 і 2π для s = 0"""
    check_kernel_domain(d, s)
    if s == 0.0:
        return LOG_NORMALIZATION
    # log-gamma, щоб не переповнитись біля країв діапазону
    return s * unit_sphere_measure(d) * math.exp(betaln((s + 2.0 - d) / 2.0, d / 2.0))
