"""Exception taxonomy shared across the package.

Everything raised on purpose derives from SliceCubeError so callers (CLI,
HTTP service) can distinguish data/user errors from genuine bugs.
"""


class SliceCubeError(Exception):
    """Base class for all deliberate errors raised by this package."""


class ConflictingAttribute(SliceCubeError):
    """The same attribute appears twice with different values in one slice."""


class CapacityMismatch(SliceCubeError):
    """Two sketches with different capacities were asked to merge."""


class EmptySummary(SliceCubeError):
    """A quantile query was issued against a summary with no values."""


class SchemaError(SliceCubeError):
    """A configured column is missing from the source, or types do not line up."""


class ParseError(SliceCubeError):
    """A row could not be parsed; raised only when the bad-row budget is blown."""


class NotRescannable(SliceCubeError):
    """The record source cannot be read more than once but a second pass is required."""


class FormatError(SliceCubeError):
    """A stored cube file has a bad magic number, version or structure."""


class ChecksumError(SliceCubeError):
    """A stored segment failed its integrity check."""


class GranularityError(SliceCubeError):
    """An impossible granularity conversion was requested (e.g. week -> month)."""


class UnknownMetric(SliceCubeError):
    """The requested metric name is not part of the cube."""


class UnknownBucket(SliceCubeError):
    """The requested time bucket has no segment in the cube."""


class DivisionUndefined(SliceCubeError):
    """A composite metric's denominator interval contains zero while the numerator does not."""
