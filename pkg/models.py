"""
Report-Level Data Models for the Operator Lab

Types shared by the CLI and the reporter: exit codes, the report envelope
written for every experiment, and the error payload printed on stderr.
Domain types (decompositions, brackets, extensions) live in operator_lab.models.
"""

from enum import Enum
from typing import Any, Dict, List, Optional, TypedDict


# ============================================================================
# ENUMS - Type-Safe Constants
# ============================================================================

class ExitCode(Enum):
    """
    Process exit codes of the experiment driver.

    - OK: experiment ran and every check passed
    - FAILURE: unexpected exception
    - INPUT_ERROR: malformed files, bad flags, invalid function samples
    - PRECONDITION_ERROR: a mathematical precondition does not hold
    - CONVERGENCE: a solver fell short and --strict was given
    """
    OK = 0
    FAILURE = 1
    INPUT_ERROR = 2
    PRECONDITION_ERROR = 3
    CONVERGENCE = 4


# ============================================================================
# REPORT STRUCTURES
# ============================================================================

class ExperimentReport(TypedDict):
    """
    Envelope written for every subcommand.

    Inputs are embedded in full so a report replays without the original files.
    checks lists the witnesses and certificates verify-report re-validates.
    """
    subcommand: str
    created_at: str
    seed: int
    inputs: Dict[str, Any]
    results: Dict[str, Any]
    residuals: Dict[str, Any]
    warnings: List[str]
    checks: List[Dict[str, Any]]


class ErrorPayload(TypedDict):
    """Machine-readable error printed on stderr."""
    error: str
    message: str
    details: Dict[str, Any]


class VerificationCheck(TypedDict):
    """One re-validated witness or certificate from a saved report."""
    name: str
    passed: bool
    detail: Optional[str]
