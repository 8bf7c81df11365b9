"""Exception hierarchy shared across the package."""


class MambaXError(Exception):
    """Base class for all package errors."""


class DimensionError(MambaXError, ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class ConfigError(MambaXError, ValueError):
    """Invalid configuration value or unknown option."""


class ContractError(MambaXError, ValueError):
    """A caller-side precondition was violated."""


class DomainError(MambaXError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericError(MambaXError, FloatingPointError):
    """Non-finite values were produced or supplied."""


class DataError(MambaXError, OSError):
    """Dataset or file could not be read or has the wrong layout."""


class InternalError(MambaXError, RuntimeError):
    """Broken invariant inside the engine (e.g. a cyclic graph)."""
