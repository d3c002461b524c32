from typing import Any, Optional


class RieszflowError(Exception):
    """Базова помилка лабораторії"""


class KernelDomainError(RieszflowError, ValueError):
    """(d, s) поза підтримуваним діапазоном або режим без розширення"""


class SingularityError(RieszflowError, ValueError):
    """Обчислення ядра в особливій точці"""


class CoincidentPointsError(RieszflowError, ValueError):
    """Дві частинки збігаються"""


class StepSizeUnderflowError(RieszflowError):
    """Крок інтегратора зменшився нижче машинної точності"""

    def __init__(self, message: str, t: float, dt: float, positions: Any):
        super().__init__(message)
        self.t = t
        self.dt = dt
        self.positions = positions

    def __reduce__(self):
        return type(self), (str(self), self.t, self.dt, self.positions)


class SupportTooCloseError(RieszflowError, ValueError):
    """Носій густини занадто близько до межі коробки"""


class VelocityBlowUpError(RieszflowError):
    """Поле швидкостей стало нескінченним"""


class GridMismatchError(RieszflowError, ValueError):
    """Поля на різних сітках"""


class SpecMismatchError(RieszflowError, ValueError):
    """Частинки і поле з різними ядрами"""


class ParticleOutsideGridError(RieszflowError, ValueError):
    """Частинка поза областю сітки"""


class InadmissibleEtaError(RieszflowError, ValueError):
    """η занадто велике для даної конфігурації"""


class InadmissibleExponentError(RieszflowError, ValueError):
    """Показник s поза діапазоном, де твердження доведене"""


class UncoveredPointError(RieszflowError, ValueError):
    """Точка не покрита жодною кулею"""


class BallConstructionError(RieszflowError, ValueError):
    """Некоректні параметри побудови куль"""


class RejectionSamplingError(RieszflowError):
    """Ефективність вибірки з відхиленням впала нижче порогу"""


class QuadratureError(RieszflowError):
    """Квадратура не досягла заданої точності"""

    def __init__(self, message: str, value: float, estimate: float):
        super().__init__(f"{message} (value={value!r}, error estimate={estimate!r})")
        self.message = message
        self.value = value
        self.estimate = estimate

    def __reduce__(self):
        return type(self), (self.message, self.value, self.estimate)


class ExperimentError(RieszflowError):
    """Помилка модуля в експерименті з прив'язкою до N і t"""

    def __init__(self, cause: Exception, n: Optional[int] = None, t: Optional[float] = None):
        super().__init__(f"N={n}, t={t}: {type(cause).__name__}: {cause}")
        self.cause = cause
        self.n = n
        self.t = t

    def __reduce__(self):
        return type(self), (self.cause, self.n, self.t)
