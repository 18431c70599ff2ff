"""Exception types raised across the package."""


class ReenactError(Exception):
    """Base class for all package errors."""


class FrameSequenceError(ReenactError):
    """Missing, empty, gapped, or dimensionally inconsistent frame sequence."""


class LandmarkFormatError(ReenactError):
    """Malformed landmark track record."""


class FlowFormatError(ReenactError):
    """Malformed optical-flow file."""


class ConfigError(ReenactError):
    """Invalid or unknown run-configuration entry."""


class SingularFitError(ReenactError):
    """Affine fit attempted on a degenerate (collinear) point set."""


class TriangulationError(ReenactError):
    """Reference points cannot be triangulated (duplicates or degeneracy)."""


class DegenerateTileError(ReenactError):
    """A descriptor tile is too small to sample."""


class MaskError(ReenactError):
    """Mask construction or combination produced an unusable region."""


class SolverError(ReenactError):
    """Linear solver failed to reach the requested residual."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class StageError(ReenactError):
    """Pipeline failure tagged with the stage that raised it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
