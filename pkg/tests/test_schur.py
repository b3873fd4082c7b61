import numpy as np
import pytest

from operator_lab.errors import InputError
from operator_lab.functions import parse_function_spec
from operator_lab.linalg_core import spectral_norm
from operator_lab.models import FactorizationCertificate
from operator_lab.schur import (divided_difference_matrix, restricted_offdiag_bracket, schur_apply,
                                schur_norm_bracket, schur_norm_lower, schur_norm_upper,
                                transpose_duality_check, verify_certificate)


def test_divided_differences_of_square():
    matrix = divided_difference_matrix(parse_function_spec('square'), [0, 1, 2])
    expected = np.array([[0, 1, 2], [1, 0, 3], [2, 3, 0]], dtype=complex)
    assert np.allclose(matrix.entries, expected)


def test_schur_apply_checks_shapes():
    with pytest.raises(InputError):
        schur_apply(np.ones((2, 2)), np.ones((3, 3)))


class TestBrackets:
    def test_all_ones_multiplier_is_the_identity_map(self):
        bracket = schur_norm_bracket(np.ones((3, 3)), restarts=4)
        assert bracket.lower == pytest.approx(1.0, abs=1e-9)
        assert bracket.upper <= 1.0 + 1e-3

    def test_diagonal_projection_has_norm_one(self):
        bracket = schur_norm_bracket(np.eye(4), restarts=4)
        assert bracket.lower == pytest.approx(1.0, abs=1e-9)
        assert bracket.upper == pytest.approx(1.0, abs=1e-3)

    def test_triangular_truncation_of_size_two(self):
        m = np.array([[1.0, 1.0], [0.0, 1.0]])
        bracket = schur_norm_bracket(m, restarts=10, tol=1e-4)
        exact = 2 / np.sqrt(3)
        assert bracket.lower <= exact + 1e-9
        assert bracket.lower > 1.1
        assert bracket.upper >= exact - 1e-9

    def test_witness_attains_lower_bound(self):
        m = divided_difference_matrix(parse_function_spec('abs'), [-1, -0.3, 0.4, 1]).entries
        value, witness = schur_norm_lower(m, restarts=6)
        assert spectral_norm(m * witness) / spectral_norm(witness) == pytest.approx(value, rel=1e-10)

    def test_certificate_reverifies(self):
        m = divided_difference_matrix(parse_function_spec('abs'), [-1, -0.3, 0.4, 1]).entries
        bracket = schur_norm_bracket(m, restarts=6)
        ok, error, bound = verify_certificate(m, bracket.certificate)
        assert ok and error <= 1e-8
        assert bound == pytest.approx(bracket.upper)
        assert bracket.lower <= bracket.upper + 1e-9

    def test_tampered_certificate_fails(self):
        m = np.ones((2, 2))
        certificate = FactorizationCertificate(left=np.eye(2), right=np.eye(2))
        ok, error, _ = verify_certificate(m, certificate)
        assert not ok and error == pytest.approx(1.0)

    def test_certification_cap(self):
        with pytest.raises(InputError):
            schur_norm_upper(np.ones((65, 65)))


class TestRestricted:
    def test_off_diagonal_ones(self):
        m = np.ones((3, 3)) - np.eye(3)
        bracket = restricted_offdiag_bracket(m, restarts=4)
        assert bracket.lower == pytest.approx(1.0, abs=1e-6)
        assert bracket.upper >= bracket.lower - 1e-9
        assert bracket.upper <= 1.0 + 1e-2

    def test_diagonal_entries_are_rejected(self):
        with pytest.raises(InputError):
            restricted_offdiag_bracket(np.ones((3, 3)))


class TestDuality:
    def test_rank_one_multiplier(self):
        report = transpose_duality_check(np.ones((3, 3)), restarts=4)
        assert report.op_norm_of_transpose == pytest.approx(1.0, abs=1e-9)
        assert report.trace_norm_multiplier == pytest.approx(1.0, abs=1e-9)
        assert report.agrees

    def test_size_cap(self):
        with pytest.raises(InputError):
            transpose_duality_check(np.ones((9, 9)))
