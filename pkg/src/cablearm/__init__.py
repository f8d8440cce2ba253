"""Cable-suspended platform with a serial arm: modeling, tension
optimization, and closed-loop trajectory-tracking simulation.

All linear algebra in this package operates on matrices of at most a few
hundred rows, where BLAS thread pools cost far more than they save.  The
pools are therefore pinned to one thread at import (opt out by setting
``CABLEARM_KEEP_BLAS_THREADS=1``).
"""

import os

if not os.environ.get("CABLEARM_KEEP_BLAS_THREADS"):
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1, user_api="blas")
    except ImportError:  # pragma: no cover - threadpoolctl is usually present
        os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
        os.environ.setdefault("OMP_NUM_THREADS", "1")

from .errors import (  # noqa: E402
    AlignmentError,
    CableRobotError,
    ComparisonError,
    ConditioningError,
    DivergenceError,
    GeometryError,
    InfeasibleError,
    IterationLimitError,
    ModelParseError,
    NonPhysicalError,
    RankDeficiencyError,
    ReductionError,
    ScenarioError,
    SingularityError,
    ValidationError,
)
from .model import (  # noqa: E402
    ArmLink,
    PlatformParams,
    QuadrotorParams,
    RobotModel,
    builtin_hcdr9dof,
    builtin_model,
    builtin_quadrotor_arm,
    load_model,
    load_model_file,
    serialize_model,
)

__all__ = [
    "AlignmentError",
    "ArmLink",
    "CableRobotError",
    "ComparisonError",
    "ConditioningError",
    "DivergenceError",
    "GeometryError",
    "InfeasibleError",
    "IterationLimitError",
    "ModelParseError",
    "NonPhysicalError",
    "PlatformParams",
    "QuadrotorParams",
    "RankDeficiencyError",
    "ReductionError",
    "RobotModel",
    "ScenarioError",
    "SingularityError",
    "ValidationError",
    "builtin_hcdr9dof",
    "builtin_model",
    "builtin_quadrotor_arm",
    "load_model",
    "load_model_file",
    "serialize_model",
]
