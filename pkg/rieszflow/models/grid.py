from typing import NamedTuple, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

from rieszflow.models.kernel import KernelSpec


def cell_centers(L: float, n: int) -> np.ndarray:
    return -L + (np.arange(n) + 0.5) * (2.0 * L / n)


def cell_mesh(L: float, n: int, d: int) -> np.ndarray:
    """Координати центрів усіх комірок, форма (d, n, ..., n)"""
    return np.stack(np.meshgrid(*([cell_centers(L, n)] * d), indexing="ij"))


class PotentialFields(NamedTuple):
    """h = g_s∗μ, ∇h (форма (d, ...)) і ∇²h (форма (d, d, ...)) на комірках"""

    h: np.ndarray
    grad: np.ndarray
    hess: np.ndarray


class GridField(BaseModel):
    """Усереднена по комірках густина на коробці [-L, L]^d з n комірками на вісь"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    spec: KernelSpec
    L: float = Field(..., gt=0.0)
    n: int = Field(..., ge=4)
    values: np.ndarray
    t: float = 0.0
    clipped_mass: float = Field(0.0, ge=0.0)

    _potential: Optional[PotentialFields] = PrivateAttr(default=None)

    @field_validator("values", mode="before")
    @classmethod
    def freeze_values(cls, value) -> np.ndarray:
        array = np.array(value, dtype=float)
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def check_values(self) -> "GridField":
        expected = (self.n,) * self.spec.d
        if self.values.shape != expected:
            raise ValueError(f"Grid values have shape {self.values.shape}, expected {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Grid values must be finite")
        if np.any(self.values < 0.0):
            raise ValueError("Grid density must be nonnegative")
        return self

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d

    @property
    def centers(self) -> np.ndarray:
        return cell_centers(self.L, self.n)

    @property
    def mesh(self) -> np.ndarray:
        return cell_mesh(self.L, self.n, self.d)

    @property
    def mass(self) -> float:
        return float(np.sum(self.values) * self.cell_volume)

    @property
    def is_probability(self) -> bool:
        return abs(self.mass - 1.0) <= 1e-10

    @property
    def cached_potential(self) -> Optional[PotentialFields]:
        return self._potential

    def remember_potential(self, fields: PotentialFields) -> None:
        self._potential = fields

    def same_grid(self, other: "GridField") -> bool:
        return self.spec == other.spec and self.L == other.L and self.n == other.n

    def with_values(self, values: np.ndarray, t: Optional[float] = None, clipped: float = 0.0) -> "GridField":
        return GridField(
            spec=self.spec,
            L=self.L,
            n=self.n,
            values=values,
            t=self.t if t is None else t,
            clipped_mass=self.clipped_mass + clipped,
        )

    def scaled(self, factor: float) -> "GridField":
        return self.with_values(self.values * factor)


class FieldDiagnostics(BaseModel):
    """Сіткові норми поля: ‖∇h‖_∞, ‖∇²h‖_∞, C^σ-оцінка μ і їх відношення"""

    model_config = ConfigDict(frozen=True)

    t: float
    sigma: float
    energy: float
    mass: float
    l1_norm: float
    sup_density: float
    sup_grad_h: float = Field(..., ge=0.0)
    sup_hess_h: float = Field(..., ge=0.0)
    holder_quotient: float = Field(..., ge=0.0)
    c_sigma_norm: float = Field(..., ge=0.0)
    hess_ratio: float = Field(..., ge=0.0)
    grad_mu_lp: float = Field(..., ge=0.0)
    lp_exponent: float
    support_radius: float = Field(..., ge=0.0)


class GridSample(BaseModel):
    """Рядок часового ряду розв'язку на сітці"""

    model_config = ConfigDict(frozen=True)

    t: float
    mass: float
    energy: float
    sup_grad_h: float
    sup_hess_h: float
    support_radius: float
    clipped_mass: float = 0.0
