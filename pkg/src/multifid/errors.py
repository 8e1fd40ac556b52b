"""Exception hierarchy shared by all modules."""


class MultifidError(Exception):
    """Base class for every error raised by the package."""


class LayoutError(MultifidError):
    """Duplicate or inconsistent state declarations."""


class ConfigError(MultifidError):
    """Invalid scenario content, unknown identifiers or bad arguments."""


class ValidationError(ConfigError):
    """Scenario failed schema or semantic validation.

    Parameters
    ----------
    diagnostics : list of Diagnostic
        Every problem found, each with a field path and a message.
    """

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = [str(d) for d in self.diagnostics]
        super().__init__("; ".join(lines) if lines else "validation failed")


class MeasurementError(MultifidError):
    """A measurement is singular, e.g. frequency of a collapsed voltage."""


class SolverError(MultifidError):
    """Base class for integration and nonlinear-solve failures.

    Parameters
    ----------
    message : str
        Human readable description.
    time : float, optional
        Simulation time at which the failure happened.
    state : str, optional
        Name of the worst offending state, when known.
    """

    def __init__(self, message, time=None, state=None):
        self.time = time
        self.state = state
        ctx = []
        if time is not None:
            ctx.append(f"t={time:.9g}")
        if state is not None:
            ctx.append(f"state={state}")
        super().__init__(message + (f" ({', '.join(ctx)})" if ctx else ""))


class DivergenceError(SolverError):
    """State became non-finite or grew without bound."""


class StepSizeError(SolverError):
    """Adaptive step size was forced below dt_min."""


class NewtonError(SolverError):
    """Newton iteration failed to converge."""


class SingularMatrixError(SolverError):
    """LU factorization hit a numerically zero pivot."""

    def __init__(self, message, pivot=None, **kw):
        self.pivot = pivot
        super().__init__(message + (f" at pivot {pivot}" if pivot is not None else ""), **kw)


class InitializationError(MultifidError):
    """Power flow or dynamic initialization failed."""


class EigenvalueError(MultifidError):
    """Eigenvalue computation failed or the stiffness ratio is undefined."""
