"""Exception hierarchy shared by all modules."""


class HarGuardError(Exception):
    """Base class for library errors."""


class ParameterError(HarGuardError, ValueError):
    """An argument is outside its documented domain."""


class SchemaError(HarGuardError):
    """Input file does not carry the expected columns or fields."""


class DataError(HarGuardError):
    """Input data violates an invariant (non-finite, non-monotonic, ...)."""


class ConfigurationError(HarGuardError):
    """Lexicons, prototypes or backend settings are unusable."""


class DispatchError(HarGuardError):
    """An attack or defense id cannot be routed to an operator."""


class PlanError(HarGuardError):
    """A defense plan references an unregistered step."""


class BackendError(HarGuardError):
    """The LLM backend failed (timeout, HTTP error, missing replay)."""
