from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class EtaValue(BaseModel):
    model_config = ConfigDict(frozen=True)

    eta: float = Field(..., gt=0.0)
    E_eta: float
    defect: float


def _by_decreasing_eta(values: list[EtaValue]) -> list[EtaValue]:
    return sorted(values, key=lambda item: -item.eta)


class ModulatedEnergyReport(BaseModel):
    """E_N = pp - pf + ff і значення η-наближення"""

    model_config = ConfigDict(frozen=True)

    N: int = Field(..., ge=1)
    d: int
    s: float
    t: float = 0.0
    E_N: float
    pp: float
    pf: float
    ff: float
    eta: list[EtaValue] = []

    @model_validator(mode="before")
    @classmethod
    def assemble(cls, data):
        if isinstance(data, dict) and data.get("E_N") is None:
            data = dict(data)
            data["E_N"] = data["pp"] - data["pf"] + data["ff"]
        return data

    @field_validator("eta")
    @classmethod
    def sort_eta(cls, values: list[EtaValue]) -> list[EtaValue]:
        return _by_decreasing_eta(values)

    def with_eta(self, values: list[EtaValue]) -> "ModulatedEnergyReport":
        return self.model_copy(update={"eta": _by_decreasing_eta(list(self.eta) + list(values))})


class ExtendedQuadrature(BaseModel):
    """Налаштування квадратур у R^d×R з вагою |ξ|^γ"""

    model_config = ConfigDict(frozen=True)

    n_polar: int = Field(12, ge=2)
    n_azimuth: int = Field(24, ge=4)
    n_xi: int = Field(24, ge=11)
    n_radial: int = Field(16, ge=2)
    tol: float = Field(1e-10, gt=0.0)
    max_levels: int = Field(5, ge=0, le=8)


class Cond1Value(BaseModel):
    model_config = ConfigDict(frozen=True)

    eta: float
    value: float


class BallSlack(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int
    charges: int
    lhs: float
    rhs: float
    slack: float


class LowerBoundReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    eta: float
    lhs: float
    rhs: float
    slack: float
    balls: list[BallSlack] = []
    quadrature_error: Optional[float] = None
