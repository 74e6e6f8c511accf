"""Exception hierarchy shared across the toolkit."""


class PolytuneError(Exception):
    """Base class for all errors raised by this package."""


class InvalidValue(PolytuneError):
    """A numeric input is non-finite, negative where forbidden, or out of domain."""


class MissingRange(PolytuneError):
    """Declared-range normalization requested for a metric without a declared range."""


class EmptyStudy(PolytuneError):
    """An operation that needs at least one completed trial found none."""


class InsufficientData(PolytuneError):
    """Not enough observations for the requested computation (e.g. entropy on < 2 rows)."""


class PartialExpertWeights(PolytuneError):
    """Expert weights cover only part of a metric group."""


class DegenerateStrategy(PolytuneError):
    """The strategy cannot be applied to the study's groups (e.g. dominant with one group)."""


class InvalidResolution(PolytuneError):
    """A grid resolution entry is missing or not a positive integer."""


class UnsupportedDomain(PolytuneError):
    """A parameter domain is not supported by the requested operation."""


class Exhausted(PolytuneError):
    """The optimizer has no further suggestions; the study ends normally."""


class EvaluatorUnavailable(PolytuneError):
    """The external evaluator could not be spawned at all; aborts the study."""


class ConfigError(PolytuneError):
    """The study configuration violates its invariants."""


class SchemaError(PolytuneError):
    """Input data is missing a declared column or field."""


class StoreError(PolytuneError):
    """A study directory is unreadable or corrupt beyond recovery."""


class UnsupportedVersion(PolytuneError):
    """A persisted artifact carries an unknown schema version."""


class RecoveredWithWarning(UserWarning):
    """Warning category emitted when a store is loaded after repairing damage."""
