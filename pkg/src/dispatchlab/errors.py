"""Exception types raised across the package."""


class DispatchLabError(Exception):
    """Base class for all package errors."""


class InvalidInputError(DispatchLabError, ValueError):
    """Dimension mismatch or out-of-domain argument."""


class UnsupportedTopologyError(InvalidInputError):
    """Topology is not a connected tree."""


class ConfigError(DispatchLabError):
    """Experiment configuration could not be parsed or validated."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class SolverError(DispatchLabError):
    """Base class for optimization failures.

    ``context`` is filled in by callers higher up the stack (policy tag,
    binding interval, run coordinates) so the message says where it broke.
    """

    def __init__(self, message, context=None):
        self.context = dict(context or {})
        super().__init__(message)

    def with_context(self, **kw):
        self.context.update(kw)
        return self

    def __str__(self):
        base = super().__str__()
        if not self.context:
            return base
        ctx = ", ".join(f"{k}={v}" for k, v in self.context.items())
        return f"{base} ({ctx})"


class InfeasibleProgramError(SolverError):
    def __init__(self, message, violated=(), context=None):
        self.violated = list(violated)
        super().__init__(message, context)


class UnboundedProgramError(SolverError):
    def __init__(self, message, direction=None, context=None):
        self.direction = direction
        super().__init__(message, context)


class ConvergenceError(SolverError):
    def __init__(self, message, residuals=None, context=None):
        self.residuals = residuals
        super().__init__(message, context)
