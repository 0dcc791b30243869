"""Exception hierarchy shared across the package."""


class DesambaError(Exception):
    """Base class for all package errors."""


class ConfigError(DesambaError):
    """A configuration file could not be parsed or is inconsistent."""


class ValidationError(ConfigError, ValueError):
    """A configuration value violates a documented invariant.

    ``field`` names the offending key.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ContractError(DesambaError, ValueError):
    """Inputs to an operation have incompatible shapes or values."""


class NumericInputError(ContractError):
    """An input tensor contains NaN or infinite values."""


class IngestionError(DesambaError, IOError):
    """A case directory does not follow the dataset layout."""


class EvaluationError(DesambaError):
    """A metric cannot be computed from the given predictions."""
