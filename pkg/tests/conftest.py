"""Shared fixtures for the operator lab tests."""

import json
import os
import sys

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from utils import matrix_to_json  # noqa: E402


@pytest.fixture
def write_matrix(tmp_path):
    """Write an array as Matrix JSON under tmp_path and return the path."""
    def _write(name, array):
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(matrix_to_json(np.asarray(array, dtype=complex))))
        return str(path)
    return _write


@pytest.fixture
def hermitian3():
    """Hermitian 3x3 with eigenvalues -0.5, 0.1, 0.4 in a rotated basis."""
    q, _ = np.linalg.qr(np.array([[1.0, 2.0, 0.5], [0.3, -1.0, 2.0], [1.5, 0.2, -0.7]]))
    return (q * np.array([-0.5, 0.1, 0.4])) @ q.T


@pytest.fixture
def normal3():
    """Normal, non-Hermitian 3x3 with eigenvalues 1+1j, -1, 2j."""
    q, _ = np.linalg.qr(np.array([[1.0, 1j, 0.0], [0.5, 1.0, -1j], [0.0, 0.3, 1.0]]))
    return (q * np.array([1 + 1j, -1.0, 2j])) @ q.conj().T
