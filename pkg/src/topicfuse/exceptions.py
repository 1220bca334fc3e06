"""Exception types raised across the package."""


class TopicFuseError(Exception):
    """Base class for all package errors."""


class DimensionError(TopicFuseError, ValueError):
    """Operand shapes are incompatible."""


class NumericDomainError(TopicFuseError, ValueError):
    """An input contained NaN/Inf or fell outside a function's domain."""


class ContractError(TopicFuseError, ValueError):
    """A documented precondition was violated by the caller."""


class CorpusError(TopicFuseError, ValueError):
    """The corpus cannot support the requested operation (e.g. empty vocabulary)."""


class CheckpointError(TopicFuseError, IOError):
    """A checkpoint file is malformed or fails its checksum."""


class ConfigError(TopicFuseError, ValueError):
    """A configuration file has unknown keys or unparsable values."""
