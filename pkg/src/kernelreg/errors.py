"""Exception taxonomy shared across the toolkit."""


class KernelregError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatch(KernelregError, ValueError):
    """Operands have incompatible dimensions."""


class InputError(KernelregError, ValueError):
    """Invalid input data (non-finite pixels, unreadable file, bad format)."""


class SizeCapExceeded(KernelregError, ValueError):
    """Instance too large for a dense/materialized code path."""


class ConfigurationError(KernelregError, ValueError):
    """Invalid or inconsistent configuration."""


class NumericalBreakdown(KernelregError, RuntimeError):
    """A solver produced NaN/Inf or an unrecoverable numerical state."""


class PropertyViolation(KernelregError, AssertionError):
    """A verified mathematical property failed beyond tolerance."""
