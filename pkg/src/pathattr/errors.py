"""Exception types shared across the package.

The CLI maps each family onto a distinct exit code, so library code raises
these rather than bare ``ValueError``/``OSError``.
"""


class PathAttrError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(PathAttrError, ValueError):
    """An argument is outside its valid range or shapes do not match."""


class DegenerateStepError(PathAttrError, ArithmeticError):
    """A projection or IDGI step was requested with a zero gradient."""


class DegenerateInputError(PathAttrError, ValueError):
    """An input makes a metric undefined (e.g. zero reference probability)."""


class FormatError(PathAttrError, ValueError):
    """A serialized document has the wrong schema, version or content."""


class TrainingFailure(PathAttrError, RuntimeError):
    """Toy model training diverged."""


class ArtifactIOError(PathAttrError, OSError):
    """A file is missing, unreadable, truncated or in an unsupported format."""
