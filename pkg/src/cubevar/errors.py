"""Exception types shared across the package."""


class CubevarError(Exception):
    """Base class for all package-specific errors."""


class WeightError(CubevarError):
    """Probability weights are negative or do not sum to one."""


class CommutationViolation(CubevarError):
    """Two transformations of a finite system disagree when composed."""

    def __init__(self, i: int, j: int, x: int):
        self.i, self.j, self.x = i, j, x
        super().__init__(f"maps {i} and {j} do not commute at point {x}")


class MeasureViolation(CubevarError):
    """A transformation does not preserve the measure."""

    def __init__(self, l: int, y: int):
        self.l, self.y = l, y
        super().__init__(f"map {l} does not preserve the measure at point {y}")


class DimensionMismatch(CubevarError):
    """Operands live on incompatible grids or spaces."""


class FormatError(CubevarError):
    """A stored file is malformed (bad magic, truncation, size mismatch)."""


class InvalidN(CubevarError):
    """Averaging length must be a positive integer."""


class InvalidR(CubevarError):
    """Averaging scale must be positive."""


class ResolutionTooCoarse(CubevarError):
    """Requested sampling cannot certify the profile invariants."""


class NotDifferentiable(CubevarError):
    """Profile has no pointwise derivative (raw indicator)."""


class ScaleOutOfRange(CubevarError):
    """Kernel scale falls below grid resolution or above the box size."""


class EmptySequence(CubevarError):
    """An operation requires at least one frame."""


class InvalidPairs(CubevarError):
    """Jump pairs must be increasing and disjoint."""


class ConfigError(CubevarError):
    """Experiment configuration failed validation."""


class SchemaError(CubevarError):
    """A CSV input does not match the expected column schema."""
