"""Exception types shared across the package."""


class FpmtError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(FpmtError, ValueError):
    """Shapes of operands do not conform."""


class DomainError(FpmtError, ValueError):
    """Input outside an operation's mathematical domain (e.g. log of x <= 0)."""


class NumericError(FpmtError, ArithmeticError):
    """A public operation produced NaN or Inf."""


class DeterminismError(FpmtError, RuntimeError):
    """A function expected to be deterministic returned different values."""


class ConfigError(FpmtError, ValueError):
    """Invalid configuration value."""


class DataError(FpmtError, ValueError):
    """Dataset violates a precondition (empty class, too few rows, ...)."""


class ParseError(FpmtError, ValueError):
    """Malformed file content; message carries the offending line number."""


class ContractError(FpmtError, RuntimeError):
    """A caller-side contract was violated (e.g. missing pseudo-label)."""


class TrainingError(FpmtError, RuntimeError):
    """Training diverged or hit an invalid state; message names the step."""


class ProtocolError(FpmtError, ValueError):
    """Evaluation protocol violated (e.g. test set without positives)."""
