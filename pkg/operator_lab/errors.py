"""
Error types raised by the operator lab.

Each error carries a machine-readable code and a details dict so the CLI can
print it as JSON and pick an exit code without inspecting messages.
"""

from typing import Any, Dict, Optional


class OperatorLabError(Exception):
    """Base class for every failure the lab reports deliberately."""

    code: str = 'operator_lab_error'

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = dict(details or {})

    def to_dict(self) -> Dict[str, Any]:
        return {
            'error': self.code,
            'message': self.message,
            'details': self.details,
        }


class InputError(OperatorLabError, ValueError):
    """Malformed matrices, vectors, states or options."""
    code = 'input_error'


class NormalityError(OperatorLabError):
    """Matrix is not normal within tolerance; details carry the defect."""
    code = 'normality_error'


class ResolventError(OperatorLabError):
    """zeta is too close to the spectrum, or the solve is unreliable."""
    code = 'resolvent_error'


class SpectrumError(OperatorLabError):
    code = 'spectrum_error'


class PreconditionError(OperatorLabError):
    code = 'precondition_error'


class DegenerateError(OperatorLabError):
    """Derivation of a scalar matrix is identically zero."""
    code = 'degenerate_error'


class CommuteError(OperatorLabError):
    code = 'commute_error'


class FunctionError(OperatorLabError):
    """b is not a function of a on some eigenspace."""
    code = 'function_error'


class DerivativeError(OperatorLabError):
    code = 'derivative_error'


class ResolutionError(OperatorLabError):
    """Grid too coarse for the requested accuracy check."""
    code = 'resolution_error'


class DivergenceError(OperatorLabError):
    code = 'divergence_error'


class LipschitzError(OperatorLabError):
    code = 'lipschitz_error'


class ConvergenceWarning(UserWarning):
    """An iterative solver stopped before reaching its target."""
