"""Exception hierarchy for the toolkit.

Geometric degeneracies (zero-length vectors, collapsed palms, gimbal
configurations) derive from :class:`DegeneracyError` and are raised in
strict mode only; lenient evaluation substitutes a large constant
penalty instead.  File/content problems derive from :class:`DataError`
or :class:`SchemaError` and map to CLI exit code 2, numerical failures
to exit code 3.
"""


class ToolkitError(Exception):
    """Base class for all handbmc errors."""


class DegeneracyError(ToolkitError):
    """A geometric quantity is not well defined for the given input."""


class DegenerateVector(DegeneracyError):
    """Vector norm below the degeneracy threshold."""


class DegenerateBasis(DegeneracyError):
    """Plane basis vectors are (near-)parallel."""


class DegeneratePalm(DegeneracyError):
    """Root-bone configuration does not span a usable palm."""


class DegenerateBone(DegeneracyError):
    """A finger bone has (near-)zero length."""


class GimbalDegenerate(DegeneracyError):
    """Bone is parallel to its frame's y axis; flexion is undefined."""


class DegenerateReference(DegeneracyError):
    """Reference joint pair unusable (coincident joints or rays)."""


class DegenerateSample(DegeneracyError):
    """A corpus sample is degenerate; carries the sample index."""

    def __init__(self, index: int, reason: str):
        super().__init__(f"sample {index}: {reason}")
        self.index = index
        self.reason = reason


class DataError(ToolkitError):
    """Input data cannot support the requested operation."""


class InsufficientPoints(DataError):
    """Too few points to build an angle hull."""


class InsufficientData(DataError):
    """Too few usable corpus samples to fit limits."""


class DegenerateDistribution(DataError):
    """Point distribution is collinear/collapsed within tolerance."""


class SchemaError(ToolkitError):
    """A file does not match its schema; carries the offending field path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class NumericalError(ToolkitError):
    """A numerical procedure failed on the given input."""


class BehindCamera(NumericalError):
    """A joint has non-positive depth and cannot be projected."""


class NoPositiveRoot(NumericalError):
    """The depth quadratic has no positive root."""


class ComplexRoots(NumericalError):
    """The depth quadratic has a negative discriminant."""
