from rieszflow.exceptions.errors import (
    BallConstructionError,
    CoincidentPointsError,
    ExperimentError,
    GridMismatchError,
    InadmissibleEtaError,
    InadmissibleExponentError,
    KernelDomainError,
    ParticleOutsideGridError,
    QuadratureError,
    RejectionSamplingError,
    RieszflowError,
    SingularityError,
    SpecMismatchError,
    StepSizeUnderflowError,
    SupportTooCloseError,
    UncoveredPointError,
    VelocityBlowUpError,
)

__all__ = [
    "BallConstructionError",
    "CoincidentPointsError",
    "ExperimentError",
    "GridMismatchError",
    "InadmissibleEtaError",
    "InadmissibleExponentError",
    "KernelDomainError",
    "ParticleOutsideGridError",
    "QuadratureError",
    "RejectionSamplingError",
    "RieszflowError",
    "SingularityError",
    "SpecMismatchError",
    "StepSizeUnderflowError",
    "SupportTooCloseError",
    "UncoveredPointError",
    "VelocityBlowUpError",
]
