"""Exception hierarchy shared across the package.

Every error carries a short machine-readable ``category`` used by the CLI
to map failures to exit codes and structured error reports.
"""


class CableRobotError(Exception):
    """Base class for all package errors."""

    category = "error"


class ModelParseError(CableRobotError):
    """Model or scenario document does not conform to the schema."""

    category = "parse"


class ValidationError(CableRobotError):
    """A model or parameter invariant is violated."""

    category = "validation"


class GeometryError(CableRobotError):
    """Degenerate cable geometry (near-zero cable length)."""

    category = "geometry"


class SingularityError(CableRobotError):
    """Euler-angle parameterization evaluated at or near gimbal lock."""

    category = "singularity"


class ConditioningError(CableRobotError):
    """A linear solve was refused because the matrix is near-singular."""

    category = "conditioning"


class RankDeficiencyError(CableRobotError):
    """Structure matrix lost row rank (singular cable configuration)."""

    category = "rank-deficiency"


class InfeasibleError(CableRobotError):
    """No solution satisfies the stated bounds."""

    category = "infeasible"


class IterationLimitError(CableRobotError):
    """An iterative solver hit its iteration cap before converging."""

    category = "iteration-limit"


class ReductionError(CableRobotError):
    """Model does not admit the requested planar reduction."""

    category = "reduction"


class DivergenceError(CableRobotError):
    """Numerical integration produced non-finite state."""

    category = "divergence"


class AlignmentError(CableRobotError):
    """Sampled series have mismatched lengths or timestamps."""

    category = "alignment"


class ComparisonError(CableRobotError):
    """Scenario comparison inputs are inconsistent or incomplete."""

    category = "comparison"


class NonPhysicalError(CableRobotError):
    """Requested quantity has no physical solution (e.g. tension <= -EA)."""

    category = "nonphysical"


class ScenarioError(CableRobotError):
    """Scenario document is structurally valid but unusable."""

    category = "scenario"
