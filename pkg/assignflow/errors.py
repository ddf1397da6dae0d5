"""
Exceptions raised by the integrators when the numerics, not the arguments, go wrong.
Bad arguments always raise :class:`ValueError`.
"""

from typing import Optional


class AssignmentFlowError(Exception):
    """Base class for every numerical failure raised by this library.
    """
    pass


class ConvergenceError(AssignmentFlowError):
    """Raised when an iterative solve does not settle within its iteration cap.
    """

    def __init__(self, message: str, residual: float, iterations: int) -> None:
        """
        :param residual: The last residual, or distance between consecutive iterates.
        :type residual: :obj:`float`

        :param iterations: Number of iterations performed.
        :type iterations: :obj:`int`
        """
        super().__init__("%s (residual %.3e after %d iterations)" % (message, residual, iterations))
        self.residual = residual
        self.iterations = iterations


class StiffnessError(AssignmentFlowError):
    """Raised when adaptive step control shrinks the step size below its floor.
    """

    def __init__(self, h: float, t: float) -> None:
        super().__init__("step size %.3e underflowed at t=%.6g" % (h, t))
        self.h = h
        self.t = t


class KrylovOverflowError(AssignmentFlowError):
    """Raised when the exponential integrator produces non-finite values.
    """

    def __init__(self, T: float, message: Optional[str] = None) -> None:
        super().__init__(
            message or "non-finite result at T=%g, reduce the final time T" % T)
        self.T = T


class UnknownSchemeError(AssignmentFlowError, KeyError):
    """Raised when a tableau or integrator name is not registered.
    """

    def __init__(self, name: str, known) -> None:
        super().__init__("unknown scheme %r, expected one of: %s" % (
            name, ", ".join(sorted(known))))
        self.name = name

    def __str__(self) -> str:
        return self.args[0]
