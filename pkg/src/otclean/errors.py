"""Exception types raised across the package."""


class OTCleanError(Exception):
    """Base class for all errors raised by otclean."""


class DomainError(OTCleanError, ValueError):
    """Unknown attribute name or category label."""


class ArityError(OTCleanError, ValueError):
    """Tuple length does not match the schema."""


class EmptyInputError(OTCleanError, ValueError):
    pass


class ShapeError(OTCleanError, ValueError):
    """Operands live on incompatible domains."""


class ValidationError(OTCleanError, ValueError):
    """Malformed user input (files, cost matrices, configs)."""


class InfeasibleError(OTCleanError, RuntimeError):
    """A Sinkhorn kernel row or column underflowed to zero."""


class DegenerateInputError(OTCleanError, ValueError):
    pass


class CoverageError(OTCleanError, KeyError):
    """A dataset tuple has no row in the probabilistic cleaner."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class UndefinedRODError(OTCleanError, ZeroDivisionError):
    pass


class MisuseError(OTCleanError, ValueError):
    pass


class SizeCapError(OTCleanError, ValueError):
    pass
