"""Exception types raised across the package.

Grouped by the subsystem that raises them.  Everything derives from
:class:`CapmeterError` so callers can catch broadly, and the CLI maps
subgroups onto exit codes.
"""


class CapmeterError(Exception):
    """Base class for all package errors."""


# ---------------------------------------------------------------------------
# closed-form oracles / spectra
# ---------------------------------------------------------------------------

class InvalidSpectrum(CapmeterError):
    """Eigenvalue list violates a precondition (sign, finiteness, shape)."""


class DivergentPartition(CapmeterError):
    """Partition function does not converge for the requested prior."""


class InvalidArgument(CapmeterError):
    """Scalar argument out of its documented domain."""


class InsufficientHits(CapmeterError):
    """Too few Monte-Carlo samples landed below the level set."""


# ---------------------------------------------------------------------------
# experiment protocol / record files
# ---------------------------------------------------------------------------

class ConfigError(CapmeterError):
    """Protocol or sampler configuration fails validation."""


class EmptyGroup(CapmeterError):
    """A requested sample size has no records to aggregate."""


class NonFinite(CapmeterError):
    """A numeric field that must be finite is NaN or infinite."""


class ParseError(CapmeterError):
    """Malformed input file.  Carries a location."""

    def __init__(self, reason: str, line: int, column: int | None = None):
        self.line = line
        self.column = column
        self.reason = reason
        loc = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{loc}: {reason}")


class DuplicateKey(CapmeterError):
    """Two records share the same (dataset, N, boot, fold, seed) key."""


class InvariantViolation(CapmeterError):
    """A structural invariant of a parsed file does not hold."""


# ---------------------------------------------------------------------------
# learners
# ---------------------------------------------------------------------------

class TrainingFailure(CapmeterError):
    """A model could not be trained on the given rows."""


class EmptyTrainingSet(TrainingFailure):
    """fit() called with zero rows."""


class NonFiniteLoss(TrainingFailure):
    """Training loss became NaN/inf.  Carries the iteration index."""

    def __init__(self, iteration: int, message: str = ""):
        self.iteration = iteration
        super().__init__(message or f"non-finite training loss at iteration {iteration}")


class MixedTypes(CapmeterError):
    """Label column mixes integer-coded classes with non-integer reals."""


# ---------------------------------------------------------------------------
# curve estimators
# ---------------------------------------------------------------------------

class InsufficientPoints(CapmeterError):
    """Too few curve points for the requested fit."""


class SolverFailure(CapmeterError):
    """Constrained least-squares iteration did not terminate."""


class FitDiverged(CapmeterError):
    """Nonlinear fit failed to converge from every start."""


class DegenerateCurve(CapmeterError):
    """Curve carries too little structure to identify the model."""


class OutOfRange(CapmeterError):
    """Evaluation point far outside the fitted range."""


class QuadratureFailure(CapmeterError):
    """Adaptive quadrature could not meet tolerance."""


class UndefinedThreshold(CapmeterError):
    """Freezing threshold undefined because the slope parameter is ~0."""


class LengthMismatch(CapmeterError):
    """Paired sequences differ in length."""


class AllTied(CapmeterError):
    """Rank correlation undefined: one of the sequences is constant."""


class DegenerateDesign(CapmeterError):
    """Regression design has zero variance."""


# ---------------------------------------------------------------------------
# posterior samplers
# ---------------------------------------------------------------------------

class NonFiniteState(CapmeterError):
    """Sampler state left the finite domain."""


class EmptyHeldout(CapmeterError):
    """No rows left to evaluate on."""


class EmptyWindow(CapmeterError):
    """A sampling window produced no usable samples."""


class ScheduleExhaustsData(CapmeterError):
    """Requested schedule needs more rows than the dataset holds."""
