"""
Error hierarchy for sscm_spectra
"""
from typing import Any, Dict, Optional


class SscmError(Exception):
    """Base error for the package"""

    def __init__(self, message: str, stage: Optional[str] = None):
        """
        Initialize error

        Args:
            message: Human readable description
            stage: Pipeline stage the error surfaced in (e.g. 'first-pass')
        """
        self.stage = stage
        if stage:
            message = f"[{stage}] {message}"
        super().__init__(message)

    def at_stage(self, stage: str) -> "SscmError":
        """Annotate this error with a pipeline stage and return it"""
        message = str(self.args[0]) if self.args else ''
        if self.stage:
            message = message.split('] ', 1)[-1]
        self.stage = stage
        self.args = (f"[{stage}] {message}",)
        return self


class InputValidationError(SscmError, ValueError):
    """Inputs violate a type invariant or domain restriction"""


class InvalidDimensionError(InputValidationError):
    """Dimension must be a positive integer"""


class ContractViolation(InputValidationError):
    """An operation was called outside its precondition"""


class ArityError(ContractViolation):
    """Not enough moments (or orders) were supplied"""


class UnsupportedOrderError(InputValidationError):
    """Partition order outside the supported range"""


class DegenerateObservationError(SscmError):
    """An observation is exactly the zero vector"""

    def __init__(self, row: int, stage: Optional[str] = None):
        self.row = row
        super().__init__(f"observation {row} is the zero vector", stage=stage)


class NumericalError(SscmError, ArithmeticError):
    """A numerical routine failed"""

    def __init__(self, message: str, stage: Optional[str] = None,
                 diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message, stage=stage)


class SingularSeriesError(NumericalError):
    """Division by a power series whose constant term vanishes"""


class SolverFailureError(NumericalError):
    """Stieltjes transform solver did not converge"""

    def __init__(self, message: str, residual: float, stage: Optional[str] = None):
        self.residual = residual
        super().__init__(message, stage=stage, diagnostics={'residual': residual})


class SupportResolutionError(NumericalError):
    """Support endpoints of the limiting law could not be bracketed"""


class DegeneratePsdError(NumericalError):
    """Population spectral distribution is degenerate (coalescing atoms)"""


class DegenerateNullError(NumericalError):
    """Plug-in null variance of the order test is numerically zero"""


class InvalidMomentSequenceError(SscmError):
    """Moments are not those of a discrete law with the requested order"""


class InfeasiblePsdError(SscmError):
    """Recovered atoms or weights fall outside the parameter space"""
