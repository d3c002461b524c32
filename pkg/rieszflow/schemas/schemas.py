from pathlib import Path
from typing import Any, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic.alias_generators import to_camel

from rieszflow.models.kernel import KernelSpec
from rieszflow.models.particles import FlowParameters
from rieszflow.models.reports import ExtendedQuadrature


# Базова схема для відповідей API з camelCase-полями
class BaseSchema(BaseModel):
    model_config = ConfigDict(alias_generator=to_camel, populate_by_name=True, from_attributes=True)


def _drop_empty(data: Any) -> Any:
    """Порожні секції YAML (None) замінюються значеннями за замовчуванням"""
    if isinstance(data, dict):
        return {key: value for key, value in data.items() if value is not None}
    return data


class KernelConfig(BaseModel):
    d: int = Field(2, ge=1, le=2)
    s: float = Field(0.0, ge=0.0)
    c_scale: float = Field(1.0, gt=0.0)

    @property
    def spec(self) -> KernelSpec:
        return KernelSpec.build(self.d, self.s, self.c_scale)


class GridConfig(BaseModel):
    L: float = Field(1.0, gt=0.0)
    n: int = Field(128, ge=4)
    cfl: float = Field(0.5, gt=0.0, le=1.0)


class DensityConfig(BaseModel):
    name: str = "bump"
    params: dict[str, Any] = {}


class ExperimentConfig(BaseModel):
    """Конфігурація експерименту; ключі YAML збігаються з назвами полів"""

    model_config = ConfigDict(frozen=True)

    name: str = "experiment"
    kernel: KernelConfig = KernelConfig()
    density: DensityConfig = DensityConfig()
    n_list: list[int] = [64, 256, 1024]
    T: float = 0.5
    n_samples: int = Field(5, ge=1)
    tol: float = Field(1e-8, gt=0.0)
    grid: GridConfig = GridConfig()
    eta_fractions: list[float] = [0.4, 0.2, 0.1]
    radius_override: Optional[float] = Field(None, gt=0.0)
    seed: int = 0
    output_dir: Optional[str] = None
    flow: FlowParameters = FlowParameters()
    quadrature: ExtendedQuadrature = ExtendedQuadrature()
    lp_exponent: Optional[float] = None
    perturbation: float = 0.05
    conditions: bool = True

    @model_validator(mode="before")
    @classmethod
    def defaults_for_empty(cls, data: Any) -> Any:
        return _drop_empty(data)

    @field_validator("n_list")
    @classmethod
    def strictly_increasing(cls, values: list[int]) -> list[int]:
        if not values:
            raise ValueError("The N list must not be empty")
        if any(n < 1 for n in values):
            raise ValueError("Particle counts must be positive")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("The N list must be strictly increasing")
        return values

    @field_validator("T")
    @classmethod
    def positive_horizon(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("Time horizon T must be positive")
        return value

    @field_validator("eta_fractions")
    @classmethod
    def fractions_in_range(cls, values: list[float]) -> list[float]:
        if any(not 0.0 < f < 1.0 for f in values):
            raise ValueError("eta fractions must lie in (0, 1)")
        return sorted(values, reverse=True)

    @model_validator(mode="after")
    def check_scope(self) -> "ExperimentConfig":
        if self.kernel.s >= 1.0:
            raise ValueError("Mean-field runs need 0 <= s < 1")
        if self.flow.beta != 0.0 and self.kernel.d != 2:
            raise ValueError("The conservative term beta is defined for d=2 only")
        return self

    @property
    def spec(self) -> KernelSpec:
        return self.kernel.spec

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        return cls.model_validate(data)


class WellPreparedness(BaseModel):
    """Порівняння N^{-2}H_N(x°) з ∬g dμ°dμ° для вибірки"""

    n: int
    seed: int
    discrete_energy: float
    field_energy: float
    relative_gap: float
    mean: list[float]
    density_mean: list[float]
    acceptance: float = 1.0


class NRun(BaseModel):
    """Часові ряди одного прогону з фіксованим N"""

    n: int
    times: list[float]
    E_N: list[float]
    H_over_N2: list[float]
    field_energy: list[float]
    energy_gap: list[float]
    eta_N: list[float]
    radius: float
    balls: list[int] = []
    cond1: list[Optional[float]] = []
    cond2: list[Optional[float]] = []
    lp_distance: list[Optional[float]] = []
    well_prepared: Optional[WellPreparedness] = None

    @model_validator(mode="after")
    def check_series(self) -> "NRun":
        lengths = {len(self.times), len(self.E_N), len(self.H_over_N2), len(self.field_energy)}
        if len(lengths) != 1:
            raise ValueError("Time series must be aligned")
        if any(value != value or abs(value) == float("inf") for value in self.E_N):
            raise ValueError("E_N series must be finite")
        return self


class ConvergenceResult(BaseModel):
    name: str
    d: int
    s: float
    runs: list[NRun]
    rate: Optional[float] = None
    holder_quotient: Optional[float] = None
    grad_mu_lp: Optional[float] = None
    manifest: dict[str, Any] = {}

    @model_validator(mode="after")
    def check_alignment(self) -> "ConvergenceResult":
        if self.runs:
            reference = self.runs[0].times
            if any(run.times != reference for run in self.runs):
                raise ValueError("Sample times must agree across N")
        return self

    def run_for(self, n: int) -> NRun:
        for run in self.runs:
            if run.n == n:
                return run
        raise KeyError(n)


class StabilityReport(BaseModel):
    perturbation: float
    times: list[float]
    distance: list[float]
    envelope: list[float]
    floor: float
    constant: float
    within_envelope: bool
    at_floor: bool


class SuiteConfig(BaseModel):
    """Параметри набору тотожностей; порожні секції беруть значення за замовчуванням"""

    kernels: list[KernelConfig] = [
        KernelConfig(d=1, s=0.25),
        KernelConfig(d=1, s=0.5),
        KernelConfig(d=2, s=0.5),
        KernelConfig(d=2, s=0.9),
    ]
    c_scale: float = Field(1.0, gt=0.0)
    flux_tol: float = 1e-6
    annulus_tol: float = 1e-4
    dissipation_tol: float = 1e-4
    dispersion_tol: float = 5e-3
    patch_n: int = Field(256, ge=32)
    patch_tol: float = 0.05
    patch_order: float = 0.8
    defect_n: int = Field(8, ge=2)
    defect_sets: int = Field(3, ge=1)
    ball_sets: int = Field(1000, ge=1)
    lower_bound_sets: int = Field(10, ge=1)
    seed: int = 0
    quadrature: ExtendedQuadrature = ExtendedQuadrature()

    @model_validator(mode="before")
    @classmethod
    def defaults_for_empty(cls, data: Any) -> Any:
        return _drop_empty(data)

    @classmethod
    def from_yaml(cls, path: Optional[Path]) -> "SuiteConfig":
        if path is None:
            return cls()
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        return cls.model_validate(data)


class SuiteRow(BaseModel):
    name: str
    measured: float
    threshold: float
    passed: bool
    detail: str = ""


class SuiteTable(BaseModel):
    rows: list[SuiteRow]

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    @property
    def failures(self) -> list[SuiteRow]:
        return [row for row in self.rows if not row.passed]


class KernelConstantResponse(BaseSchema):
    d: int
    s: float
    c_ds: float
    gamma: Optional[float] = None
    is_coulomb: bool


class BallsRequest(BaseModel):
    points: list[list[float]]
    R: float = Field(..., gt=0.0)
    r0: Optional[float] = Field(None, gt=0.0)


class SuiteResponse(BaseSchema):
    passed: bool
    rows: list[SuiteRow]
