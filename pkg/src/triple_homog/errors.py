from __future__ import annotations


class HomogenisationError(Exception):
    pass


class DegenerateCouplingError(HomogenisationError, ValueError):
    """The vertex coupling xi vanishes, so the parallel Lambda eigenvector is undefined."""


class SpectralPoleError(HomogenisationError, ArithmeticError):
    pass


class SeriesDivergenceError(HomogenisationError, ArithmeticError):
    pass


class RootNotBracketedError(HomogenisationError, RuntimeError):
    pass


class SingularMError(HomogenisationError, ArithmeticError):
    pass


class PoleAtQ1Error(HomogenisationError, ZeroDivisionError):
    pass


class NonConvergenceError(HomogenisationError, RuntimeError):
    pass


class ExperimentFailureError(HomogenisationError, RuntimeError):
    pass


class ConfigParseError(HomogenisationError, ValueError):
    def __init__(self, message: str, lineno: int | None = None) -> None:
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
