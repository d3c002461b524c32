from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from rieszflow.services.constants import check_kernel_domain, normalization_constant


class KernelSpec(BaseModel):
    """Єдине джерело правди про ядро g_s: (d, s), c_{d,s} і вага розширення γ"""

    model_config = ConfigDict(frozen=True)

    d: int = Field(..., ge=1, le=2)
    s: float = Field(..., ge=0.0)
    c_ds: float = Field(..., gt=0.0)
    gamma: Optional[float] = None

    @model_validator(mode="before")
    @classmethod
    def fill_constants(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        d, s = data.get("d"), data.get("s")
        if d is None or s is None:
            return data
        check_kernel_domain(int(d), float(s))
        filled = dict(data)
        if filled.get("c_ds") is None:
            filled["c_ds"] = normalization_constant(int(d), float(s))
        filled["gamma"] = float(s) + 1.0 - int(d) if float(s) > int(d) - 2 else None
        return filled

    @classmethod
    def build(cls, d: int, s: float, c_scale: float = 1.0) -> "KernelSpec":
        """Ядро зі стандартним нормуванням, опційно зіпсованим множником c_scale"""
        check_kernel_domain(d, s)
        return cls(d=d, s=s, c_ds=normalization_constant(d, s) * c_scale)

    @property
    def is_extension(self) -> bool:
        return self.gamma is not None

    @property
    def is_coulomb(self) -> bool:
        return self.d == 2 and self.s == 0.0

    @property
    def is_log(self) -> bool:
        return self.s == 0.0

    @property
    def label(self) -> str:
        return f"d={self.d}, s={self.s:g}"
