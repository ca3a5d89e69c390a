"""Exception types shared across the package.

All errors raised by library code derive from SynclusterError so callers
can catch one base type at API boundaries. The CLI maps ValidationError
and ParseError to exit code 1 and I/O problems to exit code 2.
"""


class SynclusterError(Exception):
    """Base class for all library errors."""


class ValidationError(SynclusterError):
    """An input violates a documented precondition.

    The message names the violated invariant (e.g. "p must lie in [0, 1]")
    so harness logs stay actionable.
    """


class ParseError(SynclusterError):
    """A config file or serialized artifact could not be parsed.

    For config files the message carries the 1-based line number of the
    offending entry.
    """


class NonFiniteError(ValidationError):
    """A matrix argument contains NaN or Inf entries."""


class ZeroVectorError(ValidationError):
    """A reflector target vector has norm below the representable cutoff."""


class DomainError(ValidationError):
    """A scalar argument lies outside the mathematical domain of a formula."""


class WrongKError(ValidationError):
    """A two-cluster-only computation was invoked with K != 2."""


class NoConvergenceError(SynclusterError):
    """The iterative eigensolver hit its iteration cap before converging.

    Carries the best iterate found so callers can inspect or reuse it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
