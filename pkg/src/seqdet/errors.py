"""Exception hierarchy shared by all seqdet modules."""


class SeqdetError(Exception):
    """Base class for all package errors."""


class TruncationError(SeqdetError, ValueError):
    """Coherent amplitude too large for the Fock cutoff."""


class SubsystemError(SeqdetError, KeyError):
    """Unknown subsystem label."""


class DimensionMismatchError(SeqdetError, ValueError):
    """Operator or state does not fit the Hilbert space it is used with."""


class DegenerateDetuningError(SeqdetError, ZeroDivisionError):
    """delta1 + delta2 == 0 where a dispersive shift is required."""


class InvariantViolation(SeqdetError, ArithmeticError):
    """A numerical invariant (trace, Hermiticity, positivity) drifted too far."""


class StepSizeUnderflow(SeqdetError, ArithmeticError):
    """Adaptive integrator could not make progress."""


class PositivityBreakdown(InvariantViolation):
    """A stochastic trajectory lost positivity; reduce the time step."""


class BoundsError(SeqdetError, ValueError):
    """Optimizer bounds are malformed."""


class ConfigError(SeqdetError, ValueError):
    """Run configuration could not be parsed or validated."""
