""" Exceptions raised by the gemmesh package """
from gemmesh.constants import EXIT_NUMERIC, EXIT_USAGE, EXIT_VERIFICATION


class GemMeshError(Exception):
    """Base class, carries the CLI exit code for the failure."""

    exit_code = EXIT_USAGE


class UsageError(GemMeshError):
    exit_code = EXIT_USAGE


class VerificationError(GemMeshError):
    exit_code = EXIT_VERIFICATION


class NumericError(GemMeshError):
    exit_code = EXIT_NUMERIC


# Mesh
class InvalidMeshError(UsageError):
    pass


class NonManifoldError(InvalidMeshError):
    pass


class InconsistentOrientationError(InvalidMeshError):
    pass


class DegenerateFaceError(InvalidMeshError):
    pass


class ZeroNormalError(NumericError):
    pass


class DisconnectedNeighborhoodError(UsageError):
    pass


class NoInletError(UsageError):
    pass


class UnreachableVertexError(UsageError):
    pass


# Gauge
class DegenerateTangentError(NumericError):
    pass


class ZeroProjectionError(NumericError):
    pass


# Equivariant ops
class SignatureMismatchError(UsageError):
    pass


class InsufficientSamplingError(NumericError):
    pass


class UnderbandedError(UsageError):
    pass


# Pooling
class EmptyLevelError(UsageError):
    pass


class LevelMismatchError(UsageError):
    pass


# Baselines
class EmptyNeighborhoodError(UsageError):
    pass


# Training
class ConfigInvalidError(UsageError):
    pass


class NonFiniteError(NumericError):
    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


class ZeroLabelError(NumericError):
    pass


# Synthesis
class SelfIntersectionError(NumericError):
    pass


class RejectionBudgetExceededError(NumericError):
    pass


class RadiusUnderflowError(NumericError):
    pass


class FlowRangeError(UsageError):
    pass


# CLI
class ShapeMismatchError(UsageError):
    pass


class ToleranceExceededError(VerificationError):
    pass
