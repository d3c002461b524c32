from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

DISJOINT_SLACK = 1e-12
RADIUS_RTOL = 1e-9


class Ball(BaseModel):
    """Куля B(center, r) і номери частинок, які вона покриває"""

    model_config = ConfigDict(frozen=True)

    center: list[float]
    r: float = Field(..., gt=0.0)
    members: list[int] = []

    @property
    def radius(self) -> float:
        return self.r

    @property
    def charges(self) -> int:
        return len(self.members)

    def distance_to_boundary(self, point) -> float:
        """r - |x - y|; від'ємне значення означає, що точка поза кулею"""
        return self.r - float(np.linalg.norm(np.asarray(point, dtype=float) - np.asarray(self.center)))

    def contains(self, point, slack: float = DISJOINT_SLACK) -> bool:
        return self.distance_to_boundary(point) >= -slack * max(1.0, self.r)


class MergeEvent(BaseModel):
    """Злиття куль при спільному множнику росту scale"""

    model_config = ConfigDict(frozen=True)

    scale: float
    parents: list[Ball]
    center: list[float]
    r: float

    @model_validator(mode="after")
    def check_merge_rule(self) -> "MergeEvent":
        total = sum(p.r for p in self.parents)
        if abs(total - self.r) > RADIUS_RTOL * total:
            raise ValueError(f"Merged radius {self.r} differs from the parents' sum {total}")
        weighted = sum(p.r * np.asarray(p.center) for p in self.parents) / total
        if np.linalg.norm(weighted - np.asarray(self.center)) > RADIUS_RTOL * max(1.0, total):
            raise ValueError("Merged center is not the radius-weighted mean of its parents")
        return self


class BallCollection(BaseModel):
    """Диз'юнктні кулі сумарного радіуса R, що покривають усі частинки"""

    model_config = ConfigDict(frozen=True)

    R: float = Field(..., gt=0.0)
    balls: list[Ball]
    merges: list[MergeEvent] = []

    @model_validator(mode="after")
    def check_invariants(self) -> "BallCollection":
        if not self.balls:
            raise ValueError("A ball collection needs at least one ball")
        total = sum(b.r for b in self.balls)
        if abs(total - self.R) > RADIUS_RTOL * self.R:
            raise ValueError(f"Total radius {total} differs from R={self.R}")
        centers = np.array([b.center for b in self.balls], dtype=float)
        radii = np.array([b.r for b in self.balls])
        for i in range(len(self.balls)):
            gaps = np.linalg.norm(centers[i + 1 :] - centers[i], axis=-1) - radii[i + 1 :] - radii[i]
            if np.any(gaps < -DISJOINT_SLACK * max(1.0, self.R)):
                raise ValueError(f"Ball {i} overlaps another ball")
        return self

    @property
    def total_radius(self) -> float:
        return self.R

    @property
    def d(self) -> int:
        return len(self.balls[0].center)

    def __len__(self) -> int:
        return len(self.balls)

    def covering_ball(self, point) -> Optional[int]:
        """Номер кулі, що містить точку, або None"""
        for index, ball in enumerate(self.balls):
            if ball.contains(point):
                return index
        return None

    def contains(self, point) -> bool:
        return self.covering_ball(point) is not None
