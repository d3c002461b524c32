from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.spatial.distance import pdist

from rieszflow.exceptions import CoincidentPointsError
from rieszflow.models.kernel import KernelSpec


def as_points(values, d: Optional[int] = None) -> np.ndarray:
    """Приводить вхід до масиву (N, d) з незмінною копією"""
    points = np.array(values, dtype=float)
    if points.ndim == 1:
        points = points[:, None] if d in (None, 1) else points[None, :]
    if points.ndim != 2:
        raise ValueError(f"Points must be a 2D array (N, d), got shape {points.shape}")
    if d is not None and points.shape[1] != d:
        raise ValueError(f"Points have dimension {points.shape[1]}, expected {d}")
    if not np.all(np.isfinite(points)):
        raise ValueError("Points must be finite")
    points.setflags(write=False)
    return points


def min_pair_distance(points: np.ndarray) -> float:
    """η_N: мінімальна відстань між частинками (inf для однієї частинки)"""
    if len(points) < 2:
        return float("inf")
    return float(np.min(pdist(points)))


class QuadraticPotential(BaseModel):
    """V(x) = k|x - x_0|²/2 з обмеженням гесіана ‖∇²V‖ = k"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["quadratic"] = "quadratic"
    k: float = Field(1.0, ge=0.0)
    center: Optional[list[float]] = None

    @property
    def hessian_bound(self) -> float:
        return self.k

    def _shift(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.center is None:
            return x
        return x - np.asarray(self.center, dtype=float)

    def value(self, x) -> np.ndarray:
        y = self._shift(x)
        return 0.5 * self.k * np.sum(y * y, axis=-1)

    def gradient(self, x) -> np.ndarray:
        return self.k * self._shift(x)


# Поки що єдиний варіант зовнішнього потенціалу
ExternalPotential = QuadraticPotential


class FlowParameters(BaseModel):
    """α, β, зовнішній потенціал і конвенція підрахунку пар, спільні для частинок і сітки"""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(1.0, ge=0.0)
    beta: float = 0.0
    potential: Optional[ExternalPotential] = None
    pair_convention: Literal["ordered", "unordered"] = "ordered"

    @model_validator(mode="after")
    def check_mixed_flow(self) -> "FlowParameters":
        if self.beta != 0.0 and self.alpha <= 0.0:
            raise ValueError("alpha must be positive whenever beta is nonzero")
        return self

    @property
    def pair_factor(self) -> float:
        """f = 2 для впорядкованих пар (градієнт H_N), 1 для невпорядкованих"""
        return 2.0 if self.pair_convention == "ordered" else 1.0

    @property
    def is_pure_gradient(self) -> bool:
        return self.beta == 0.0 and self.potential is None


class ParticleSystem(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    spec: KernelSpec
    positions: np.ndarray
    t: float = 0.0
    flow: FlowParameters = FlowParameters()

    @field_validator("positions", mode="before")
    @classmethod
    def freeze_positions(cls, value) -> np.ndarray:
        return as_points(value)

    @model_validator(mode="after")
    def check_configuration(self) -> "ParticleSystem":
        n, d = self.positions.shape
        if n < 1:
            raise ValueError("A particle system needs at least one particle")
        if d != self.spec.d:
            raise ValueError(f"Positions are {d}-dimensional, kernel has d={self.spec.d}")
        if self.flow.beta != 0.0 and d != 2:
            raise ValueError("The conservative term beta is defined for d=2 only")
        if n > 1 and min_pair_distance(self.positions) == 0.0:
            raise CoincidentPointsError("Particle positions must be pairwise distinct")
        if self.flow.potential is not None and self.flow.potential.center is not None:
            if len(self.flow.potential.center) != d:
                raise ValueError("Potential center dimension does not match the particles")
        return self

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def moved(self, positions: np.ndarray, t: float) -> "ParticleSystem":
        """Новий знімок з тими ж ядром і параметрами потоку"""
        return ParticleSystem(spec=self.spec, positions=positions, t=t, flow=self.flow)


class TrajectoryRecord(BaseModel):
    """Знімки траєкторії на заданих моментах часу"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    spec: KernelSpec
    flow: FlowParameters
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    energies: np.ndarray
    eta: np.ndarray
    com: np.ndarray
    dispersion: np.ndarray
    accepted_steps: int = 0
    rejected_steps: int = 0

    @model_validator(mode="after")
    def check_samples(self) -> "TrajectoryRecord":
        if self.times.ndim != 1 or len(self.times) < 1:
            raise ValueError("A trajectory needs at least one sample")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("Sample times must be strictly increasing")
        if np.any(self.eta <= 0):
            raise ValueError("Minimal pair distance must stay positive")
        return self

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    def final_system(self) -> ParticleSystem:
        return ParticleSystem(
            spec=self.spec,
            positions=self.positions[-1],
            t=float(self.times[-1]),
            flow=self.flow,
        )


class PairwiseEnergy(BaseModel):
    model_config = ConfigDict(frozen=True)

    interaction: float  # H_N по впорядкованих парах
    potential: float  # N·Σ V(x_i)
    total: float
    normalized: float  # total / N²
