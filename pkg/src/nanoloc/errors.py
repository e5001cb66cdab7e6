"""Exception types shared by all nanoloc modules."""


class NanolocError(Exception):
    """Base class for nanoloc errors."""


class DomainError(NanolocError, ValueError):
    """An argument is outside the physical domain of an operation."""


class ValidationError(NanolocError, ValueError):
    """A configuration document or data structure failed validation."""


class ContractViolation(NanolocError, RuntimeError):
    """An operation was called while its preconditions do not hold."""
