"""
Experiment reports: building, saving, printing and re-verifying.

A report embeds its inputs, and every witness or certificate it claims is
listed under "checks" so verify_report can reload the file and confirm the
claims with nothing but numpy.
"""

import dataclasses
import json
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from config import DEFAULT_OUTPUT_DIR
from models import ExperimentReport, VerificationCheck
from utils import (complex_to_pair, get_nested_value, logger, matrix_from_json, matrix_to_json,
                   utc_timestamp, write_csv_atomic, write_json_atomic)

from .errors import InputError
from .linalg_core import spectral_norm
from .models import FactorizationCertificate
from .schur import verify_certificate
from .variance import variance


# ============================================================================
# SERIALIZATION
# ============================================================================

def convert_to_json_serializable(value: Any) -> Any:
    """Recursively turn arrays, complex numbers, enums and dataclasses into JSON types."""
    if isinstance(value, np.ndarray):
        if value.ndim == 0:
            return convert_to_json_serializable(value.item())
        if value.ndim <= 2:
            return matrix_to_json(value)
        return [convert_to_json_serializable(v) for v in value]
    if isinstance(value, Enum):
        return value.value
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: convert_to_json_serializable(getattr(value, f.name))
                for f in dataclasses.fields(value) if f.repr}
    if isinstance(value, dict):
        return {str(k): convert_to_json_serializable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [convert_to_json_serializable(v) for v in value]
    if isinstance(value, (complex, np.complexfloating)):
        return complex_to_pair(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else str(value)
    return value


def build_report(subcommand: str, seed: int, inputs: Dict[str, Any], results: Dict[str, Any],
                 residuals: Optional[Dict[str, Any]] = None,
                 warnings: Optional[List[str]] = None,
                 checks: Optional[List[Dict[str, Any]]] = None) -> ExperimentReport:
    return {
        'subcommand': subcommand,
        'created_at': utc_timestamp(),
        'seed': int(seed),
        'inputs': convert_to_json_serializable(inputs),
        'results': convert_to_json_serializable(results),
        'residuals': convert_to_json_serializable(residuals or {}),
        'warnings': list(warnings or []),
        'checks': convert_to_json_serializable(checks or []),
    }


# ============================================================================
# FILE OPERATIONS
# ============================================================================

def save_report(report: ExperimentReport, output_path: Optional[str] = None) -> str:
    """Write the report atomically; a timestamped name in DEFAULT_OUTPUT_DIR by default."""
    if not output_path:
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        name = report['subcommand'].replace('-', '_')
        output_path = str(Path(DEFAULT_OUTPUT_DIR) / f"{name}_{timestamp}.json")

    path = write_json_atomic(output_path, report)
    logger.info(f"Report written to: {path}")
    return path


def save_plot_csv(path: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    path = write_csv_atomic(path, header, rows)
    logger.info(f"Plot data written to: {path}")
    return path


def _headline(value: Any) -> Optional[str]:
    if isinstance(value, bool) or value is None:
        return str(value)
    if isinstance(value, (int, float)):
        return f"{value:.10g}" if isinstance(value, float) else str(value)
    if isinstance(value, str):
        return value
    if isinstance(value, list) and len(value) == 2 and all(isinstance(v, float) for v in value):
        return f"{value[0]:.10g}{value[1]:+.10g}i"
    return None


def print_report_summary(report: ExperimentReport) -> None:
    """Print the scalar results and residuals of a report to the console."""
    print("\n" + "=" * 80)
    print(f"OPERATOR LAB - {report['subcommand'].upper()}")
    print("=" * 80)
    print(f"Seed: {report['seed']}")

    for section in ('results', 'residuals'):
        entries = [(k, _headline(v)) for k, v in sorted(report[section].items())]
        entries = [(k, v) for k, v in entries if v is not None]
        if entries:
            print(f"\n{section.capitalize()}:")
            print("-" * 80)
            for key, text in entries:
                print(f"  {key:<32} {text}")

    if report['warnings']:
        print("\nWarnings:")
        for message in report['warnings']:
            print(f"  ! {message}")
    print("=" * 80)


# ============================================================================
# SELF-VERIFICATION
# ============================================================================

def _matrix(check: Dict[str, Any], key: str) -> np.ndarray:
    data = check.get(key)
    if data is None:
        raise InputError(f"Check '{check.get('kind')}' is missing '{key}'")
    return matrix_from_json(data)


def _pair(value: Any) -> complex:
    return complex(value[0], value[1]) if isinstance(value, list) else complex(value)


def _check_schur_witness(check: Dict[str, Any]) -> VerificationCheck:
    m, x = _matrix(check, 'm'), _matrix(check, 'witness')
    lower = float(check['lower'])
    attained = spectral_norm(m * x) / spectral_norm(x)
    return {'name': 'schur_witness', 'passed': attained >= lower - 1e-8 * max(1.0, lower),
            'detail': f"||M o X|| / ||X|| = {attained:.10g}, claimed {lower:.10g}"}


def _check_factorization(check: Dict[str, Any]) -> VerificationCheck:
    m = _matrix(check, 'm')
    pattern = check.get('pattern')
    certificate = FactorizationCertificate(
        left=_matrix(check, 'left'), right=_matrix(check, 'right'),
        pattern=None if pattern is None else np.abs(matrix_from_json(pattern)) > 0.5,
    )
    ok, error, bound = verify_certificate(m, certificate)
    upper = float(check['upper'])
    passed = ok and bound <= upper + 1e-9 * max(1.0, upper)
    return {'name': 'factorization', 'passed': bool(passed),
            'detail': f"entry error {error:.3e}, bound {bound:.10g}, claimed {upper:.10g}"}


def _check_kappa_witness(check: Dict[str, Any]) -> VerificationCheck:
    a, b, x = _matrix(check, 'a'), _matrix(check, 'b'), _matrix(check, 'witness')
    lower = float(check['lower'])
    denominator = spectral_norm(a @ x - x @ a)
    attained = spectral_norm(b @ x - x @ b) / denominator if denominator > 0 else 0.0
    return {'name': 'kappa_witness', 'passed': attained >= lower - 1e-8 * max(1.0, lower),
            'detail': f"||[b,x]|| / ||[a,x]|| = {attained:.10g}, claimed {lower:.10g}"}


def _check_variance_witness(check: Dict[str, Any]) -> VerificationCheck:
    a, b = _matrix(check, 'a'), _matrix(check, 'b')
    xi = _matrix(check, 'witness').ravel()
    gap = float(check['gap'])
    attained = variance(b, xi).variance - variance(a, xi).variance
    return {'name': 'variance_witness', 'passed': attained >= gap - 1e-9 * max(1.0, abs(gap)),
            'detail': f"D(b) - D(a) = {attained:.10g}, claimed {gap:.10g}"}


def _check_affine_fit(check: Dict[str, Any]) -> VerificationCheck:
    a, b = _matrix(check, 'a'), _matrix(check, 'b')
    alpha, beta = _pair(check['alpha']), _pair(check['beta'])
    base = a.conj().T if check.get('adjoint') else a
    residual = spectral_norm(b - alpha * base - beta * np.eye(a.shape[0]))
    claimed = float(check['residual'])
    return {'name': 'affine_fit',
            'passed': residual <= claimed + 1e-9 * max(1.0, spectral_norm(b)),
            'detail': f"||b - (alpha a + beta)|| = {residual:.3e}, claimed {claimed:.3e}"}


CHECKERS = {
    'schur_witness': _check_schur_witness,
    'factorization': _check_factorization,
    'kappa_witness': _check_kappa_witness,
    'variance_witness': _check_variance_witness,
    'affine_fit': _check_affine_fit,
}


def verify_report(path: str) -> List[VerificationCheck]:
    """
    Reload a report and re-validate every listed check.

    Raises:
        InputError: unreadable report or an unknown check kind
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            report = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"Could not read report {path}: {e}")

    outcomes: List[VerificationCheck] = []
    for check in get_nested_value(report, 'checks', default=[]):
        kind = check.get('kind')
        if kind not in CHECKERS:
            raise InputError(f"Unknown check kind '{kind}' in {path}")
        try:
            outcome = CHECKERS[kind](check)
        except (KeyError, TypeError, ValueError) as e:
            outcome = {'name': kind, 'passed': False, 'detail': f"malformed check: {e}"}
        if not outcome['passed']:
            logger.warning(f"Check {kind} failed: {outcome['detail']}")
        outcomes.append(outcome)
    return outcomes
