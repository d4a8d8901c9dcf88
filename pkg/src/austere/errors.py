"""Exception types shared across the package."""


class AustereError(Exception):
    """Base class for all package errors."""


class ParseError(AustereError):
    """Malformed program text. Carries a best-effort source position."""

    def __init__(self, message, line=None, col=None):
        if line is not None:
            message = "%s (line %d, col %d)" % (message, line, col if col is not None else 0)
        super().__init__(message)
        self.line = line
        self.col = col


class UnboundParameter(AustereError):
    """An external {name} placeholder had no binding (or a bad index)."""


class EvalError(AustereError):
    """Generic evaluation failure (unbound symbol, bad arity, bad operator)."""


class SupportError(AustereError):
    """Observed value outside the distribution's support, or an observe
    targeting an expression with no stochastic output."""


class DomainError(AustereError):
    """Distribution parameters outside the legal domain."""


class DimensionMismatch(AustereError):
    """Vector arguments with incompatible shapes."""


class StructureChangeError(AustereError):
    """A transition would alter trace structure where that is not supported
    (subsampled sections with existential dependencies, memo re-keying)."""


class InternalError(AustereError):
    """Invariant violation inside the trace machinery (a bug, not user error)."""


class UnknownScope(AustereError):
    """Inference targeted a scope name that was never registered."""


class UnknownLabel(AustereError):
    """Inference targeted a label absent from its scope."""


class UnsupportedKernel(AustereError):
    """A parsed inference kernel that this engine does not implement."""


class ConfigError(AustereError):
    """Bad CLI/experiment configuration; maps to exit code 2."""
