"""Exception hierarchy shared across the package.

Two families matter to callers: ConfigError maps to CLI exit code 2,
DataError to exit code 3. Everything raised by file readers and pipeline
stages derives from one of them.
"""

from __future__ import annotations


class ConvaggError(Exception):
    pass


class ConfigError(ConvaggError):
    """Inconsistent or invalid configuration, rejected before any compute."""


class DataError(ConvaggError):
    """Malformed, inconsistent, or out-of-contract input data."""


class BadMagicError(DataError):
    pass


class TruncatedPayloadError(DataError):
    pass


class NonFiniteValueError(DataError):
    pass


class InvalidDimensionsError(DataError):
    pass


class DimensionMismatchError(DataError):
    pass


class MissingBlobError(DataError):
    pass


class ShapeMismatchError(DataError):
    pass


class VersionMismatchError(DataError):
    pass


class EmptyMaskError(DataError):
    """A selection mask came out empty (e.g. no keypoints for an image)."""


class GroundTruthError(DataError):
    pass
