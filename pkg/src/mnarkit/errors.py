"""Exception types shared across the toolkit."""


class MnarkitError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(MnarkitError):
    """Operands have incompatible dimensions."""


class DomainError(MnarkitError):
    """An input value lies outside the mathematical domain of an operation."""


class ConsistencyError(MnarkitError):
    """Two structures that must agree (e.g. complementary masks) do not."""


class DegenerateFeatureError(MnarkitError):
    """A feature has too few observed values or zero spread."""


class MetricError(MnarkitError):
    """A metric is undefined for the given inputs (e.g. no missing entries)."""


class NumericError(MnarkitError):
    """A non-finite value appeared where a finite one is required."""


class ParseError(MnarkitError):
    """A file could not be parsed; message carries row/column location."""
