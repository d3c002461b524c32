import logging
import math
from typing import Callable, NamedTuple, Optional

import numpy as np

from rieszflow.exceptions import CoincidentPointsError, SingularityError, StepSizeUnderflowError

logger = logging.getLogger(__name__)

RightHandSide = Callable[[float, np.ndarray], np.ndarray]
StepGuard = Callable[[np.ndarray, np.ndarray], bool]


class ButcherTableau(NamedTuple):
    c: np.ndarray
    a: tuple
    b_high: np.ndarray
    b_low: np.ndarray
    order: int


# Dormand–Prince 5(4), остання стадія FSAL
DORMAND_PRINCE = ButcherTableau(
    c=np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0]),
    a=(
        (),
        (1 / 5,),
        (3 / 40, 9 / 40),
        (44 / 45, -56 / 15, 32 / 9),
        (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
        (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
        (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
    ),
    b_high=np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0]),
    b_low=np.array(
        [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40],
    ),
    order=5,
)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
UNDERFLOW_RATIO = 1e-14


def rk4_step(rhs: RightHandSide, t: float, y: np.ndarray, h: float) -> np.ndarray:
    """Один крок класичного RK4"""
    k1 = rhs(t, y)
    k2 = rhs(t + h / 2, y + h / 2 * k1)
    k3 = rhs(t + h / 2, y + h / 2 * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_solve(rhs: RightHandSide, t0: float, y0: np.ndarray, t_end: float, dt: float) -> np.ndarray:
    """Фіксований крок до t_end; останній крок вкорочується"""
    if dt <= 0:
        raise ValueError(f"Step must be positive, got {dt}")
    steps = max(1, int(math.ceil((t_end - t0) / dt - 1e-9)))
    h = (t_end - t0) / steps
    y = np.array(y0, dtype=float)
    for k in range(steps):
        y = rk4_step(rhs, t0 + k * h, y, h)
    return y


def embedded_step(
    rhs: RightHandSide,
    t: float,
    y: np.ndarray,
    h: float,
    k_first: Optional[np.ndarray] = None,
    tableau: ButcherTableau = DORMAND_PRINCE,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Крок вкладеної пари: (y вищого порядку, оцінка похибки, похідна в кінці кроку)"""
    stages = [rhs(t, y) if k_first is None else k_first]
    for i in range(1, len(tableau.c)):
        increment = sum(coef * k for coef, k in zip(tableau.a[i], stages) if coef != 0.0)
        stages.append(rhs(t + tableau.c[i] * h, y + h * increment))
    y_high = y + h * sum(b * k for b, k in zip(tableau.b_high, stages) if b != 0.0)
    error = h * sum((bh - bl) * k for bh, bl, k in zip(tableau.b_high, tableau.b_low, stages))
    return y_high, error, stages[-1]


def error_norm(error: np.ndarray, y: np.ndarray, y_new: np.ndarray, tol: float) -> float:
    scale = tol * (1.0 + np.maximum(np.abs(y), np.abs(y_new)))
    return float(np.max(np.abs(error) / scale))


class AdaptiveIntegrator:
    """Адаптивний явний RK з відхиленням кроків за похибкою і за охоронцем"""

    def __init__(
        self,
        rhs: RightHandSide,
        tol: float,
        h_init: Optional[float] = None,
        h_max: float = math.inf,
        guard: Optional[StepGuard] = None,
        tableau: ButcherTableau = DORMAND_PRINCE,
    ):
        if tol <= 0:
            raise ValueError(f"Tolerance must be positive, got {tol}")
        self.rhs = rhs
        self.tol = tol
        self.h = h_init
        self.h_max = h_max
        self.guard = guard
        self.tableau = tableau
        self.accepted = 0
        self.rejected = 0
        self._fsal: Optional[tuple[float, np.ndarray]] = None

    def _initial_step(self, t: float, y: np.ndarray) -> float:
        f0 = self.rhs(t, y)
        self._fsal = (t, f0)
        scale = self.tol * (1.0 + np.abs(y))
        d0 = float(np.max(np.abs(y) / scale))
        d1 = float(np.max(np.abs(f0) / scale))
        if d0 < 1e-5 or d1 < 1e-5:
            return min(self.h_max, 1e-6)
        return min(self.h_max, 0.01 * d0 / d1)

    def _factor(self, err: float) -> float:
        if not np.isfinite(err):
            return MIN_FACTOR
        if err == 0.0:
            return MAX_FACTOR
        return min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err ** (-1 / self.tableau.order)))

    def advance(
        self,
        t: float,
        y: np.ndarray,
        t_target: float,
        on_step: Optional[Callable[[float, np.ndarray], None]] = None,
    ) -> np.ndarray:
        """Інтегрує від t до рівно t_target і повертає стан"""
        y = np.array(y, dtype=float)
        if self.h is None:
            self.h = self._initial_step(t, y)
        while t < t_target:
            floor = UNDERFLOW_RATIO * max(1.0, abs(t))
            if t_target - t <= floor:
                # залишок менший за роздільність часу
                t = t_target
                break
            nominal = min(self.h, self.h_max)
            if nominal < floor:
                raise StepSizeUnderflowError(
                    f"Step size {nominal!r} underflowed at t={t!r}", t=t, dt=nominal, positions=y.copy()
                )
            h = min(nominal, t_target - t)
            k_first = self._fsal[1] if self._fsal is not None and self._fsal[0] == t else None
            try:
                y_new, error, k_last = embedded_step(self.rhs, t, y, h, k_first, self.tableau)
            except (CoincidentPointsError, SingularityError):
                # проміжна стадія злила частинки
                self._reject(h, "stage collision")
                continue

            err = error_norm(error, y, y_new, self.tol)
            if not np.isfinite(err) or err > 1.0:
                self.rejected += 1
                self.h = h * min(1.0, self._factor(err))
                logger.debug(f"🔁 Крок h={h:.3e} відхилено за похибкою {err:.3e}")
                continue
            if self.guard is not None and not self.guard(y, y_new):
                self._reject(h, "collision guard")
                continue

            t = t_target if h == t_target - t else t + h
            y = y_new
            self._fsal = (t, k_last)
            self.accepted += 1
            # крок, обрізаний до цілі, номінальний h не змінює
            if h >= nominal:
                self.h = h * self._factor(err)
            if on_step is not None:
                on_step(t, y)
        return y

    def _reject(self, h: float, reason: str) -> None:
        self.rejected += 1
        self.h = h / 2
        logger.debug(f"🔁 Крок h={h:.3e} відхилено ({reason}), новий h={self.h:.3e}")
