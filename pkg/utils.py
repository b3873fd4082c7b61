"""
Utility Functions for the Operator Lab

Shared helpers: logging setup, the Matrix JSON codec used by every module and
the CLI, safe JSON access, and atomic report writing.
"""

import csv
import json
import logging
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np

from config import LOG_LEVEL

# ============================================================================
# LOGGING SETUP
# ============================================================================

logging.basicConfig(
    level=getattr(logging, LOG_LEVEL.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)

logger = logging.getLogger(__name__)


# ============================================================================
# MATRIX JSON CODEC
# ============================================================================

def complex_to_pair(value: complex) -> List[float]:
    """Encode a complex scalar as [re, im]."""
    value = complex(value)
    return [float(value.real), float(value.imag)]


def pair_to_complex(pair: Any) -> complex:
    """
    Decode a scalar given as [re, im], a bare number, or a string like "1+2j".

    Raises:
        ValueError: If the value cannot be read as a finite complex number
    """
    if isinstance(pair, (list, tuple)):
        if len(pair) != 2:
            raise ValueError(f"Complex pair must have two entries, got {pair!r}")
        value = complex(float(pair[0]), float(pair[1]))
    elif isinstance(pair, str):
        value = complex(pair.replace(' ', '').replace('i', 'j'))
    else:
        value = complex(pair)

    if not np.isfinite(value):
        raise ValueError(f"Non-finite scalar: {pair!r}")
    return value


def matrix_to_json(m: np.ndarray) -> Dict[str, Any]:
    """
    Encode a dense complex matrix in the interchange format.

    Format: {"rows": n, "cols": m, "entries": [[re, im], ...]} (row-major).
    A 1-D array is encoded as a column.
    """
    array = np.asarray(m, dtype=complex)
    if array.ndim == 1:
        array = array.reshape(-1, 1)
    rows, cols = array.shape
    return {
        'rows': int(rows),
        'cols': int(cols),
        'entries': [complex_to_pair(z) for z in array.ravel()],
    }


def matrix_from_json(data: Dict[str, Any]) -> np.ndarray:
    """
    Decode the interchange format into a complex ndarray.

    Raises:
        ValueError: On missing keys, a length mismatch or non-finite entries
    """
    try:
        rows = int(data['rows'])
        cols = int(data['cols'])
        entries = data['entries']
    except (KeyError, TypeError) as e:
        raise ValueError(f"Matrix JSON needs rows, cols and entries: {e}") from e

    if rows <= 0 or cols <= 0:
        raise ValueError(f"Matrix dimensions must be positive, got {rows}x{cols}")
    if len(entries) != rows * cols:
        raise ValueError(
            f"Matrix JSON has {len(entries)} entries, expected {rows * cols}"
        )

    values = np.array([pair_to_complex(e) for e in entries], dtype=complex)
    return values.reshape(rows, cols)


def load_matrix_file(path: str) -> np.ndarray:
    """Read a matrix JSON file from disk."""
    with open(path, 'r', encoding='utf-8') as f:
        return matrix_from_json(json.load(f))


# ============================================================================
# SAFE ACCESS
# ============================================================================

def get_nested_value(data: Dict, *keys: str, default: Any = None) -> Any:
    """
    Safely access nested dictionary values without KeyError.

    Args:
        data: Dictionary to access
        *keys: Variable number of keys to traverse
        default: Value to return if key not found
    """
    result = data
    for key in keys:
        if isinstance(result, dict) and key in result:
            result = result[key]
        else:
            return default
    return result


# ============================================================================
# FILE OUTPUT
# ============================================================================

def utc_timestamp() -> str:
    """ISO-8601 UTC timestamp used in report headers."""
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


def write_json_atomic(path: str, payload: Any) -> str:
    """
    Write JSON through a temporary file and an atomic rename.

    Keys are sorted so two runs with the same inputs produce the same bytes
    apart from timestamp fields.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)

    fd, tmp_name = tempfile.mkstemp(prefix='.tmp_', suffix='.json', dir=str(target.parent))
    try:
        with os.fdopen(fd, 'w', encoding='utf-8') as f:
            json.dump(payload, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write('\n')
        os.replace(tmp_name, target)
    except Exception:
        if os.path.exists(tmp_name):
            os.remove(tmp_name)
        raise

    return str(target)


def write_csv_atomic(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Write plot data as CSV with a header row, atomically."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)

    fd, tmp_name = tempfile.mkstemp(prefix='.tmp_', suffix='.csv', dir=str(target.parent))
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(list(header))
            for row in rows:
                writer.writerow(list(row))
        os.replace(tmp_name, target)
    except Exception:
        if os.path.exists(tmp_name):
            os.remove(tmp_name)
        raise

    return str(target)
