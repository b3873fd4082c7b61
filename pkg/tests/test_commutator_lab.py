import numpy as np
import pytest

from operator_lab.commutator_lab import (amplified_check, commutant_inclusion_check,
                                         equality_structure_recover, kappa_estimate,
                                         kappa_exact_normal, schur_function_from_commutator)
from operator_lab.errors import CommuteError, DegenerateError, InputError, NormalityError, PreconditionError
from operator_lab.linalg_core import cyclic_permutation, spectral_norm
from operator_lab.models import EqualityCase, KappaMethod

A = np.diag([0.0, 1.0, 2.0]).astype(complex)
B = A @ A


def _ratio(a, b, x):
    return spectral_norm(b @ x - x @ b) / spectral_norm(a @ x - x @ a)


class TestKappaEstimate:
    def test_affine_b_has_constant_ratio(self, normal3):
        estimate = kappa_estimate(normal3, 2 * normal3 + np.eye(3), restarts=4)
        assert estimate.lower == pytest.approx(2.0, rel=1e-9)
        assert estimate.method == KappaMethod.ASCENT

    def test_witness_attains_estimate(self):
        estimate = kappa_estimate(A, B, restarts=6)
        assert _ratio(A, B, estimate.witness) == pytest.approx(estimate.lower, rel=1e-9)
        assert estimate.lower >= 3.0 - 1e-9

    def test_scalar_a_is_degenerate(self):
        with pytest.raises(DegenerateError):
            kappa_estimate(3 * np.eye(2), np.diag([0.0, 1.0]))


class TestKappaExact:
    def test_square_on_three_points(self):
        bracket = kappa_exact_normal(A, B, restarts=6)
        assert bracket.lower >= 3.0 - 1e-6
        assert bracket.lower <= bracket.upper + 1e-9
        assert _ratio(A, B, bracket.witness) == pytest.approx(bracket.lower, rel=1e-6)

    def test_repeated_eigenvalue_with_constant_value(self):
        a = np.diag([0.0, 1.0, 1.0])
        bracket = kappa_exact_normal(a, 5 * a, restarts=4)
        assert bracket.lower == pytest.approx(5.0, rel=1e-6)
        assert not bracket.pattern[1, 2]

    def test_non_commuting_b(self):
        with pytest.raises(CommuteError):
            kappa_exact_normal(np.diag([0.0, 1.0]), np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_non_normal_a(self):
        with pytest.raises(NormalityError):
            kappa_exact_normal(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2))


class TestAmplification:
    def test_amplified_ratio_stays_below_kappa(self):
        bracket = kappa_exact_normal(A, B, restarts=4)
        check = amplified_check(A, B, copies=2, samples=20, kappa=bracket.upper)
        assert check.within_kappa
        assert check.worst_ratio <= bracket.upper + 1e-6

    def test_dimension_cap(self):
        with pytest.raises(InputError):
            amplified_check(A, B, copies=200)


class TestEqualityStructure:
    def test_rotated_copy(self):
        verdict = equality_structure_recover(A, 1j * A + 2 * np.eye(3), restarts=6)
        assert verdict.case == EqualityCase.SCALAR_AFFINE
        assert verdict.sigma == pytest.approx(1j)
        assert verdict.shift == pytest.approx(2.0)

    def test_unitary_and_its_adjoint(self):
        u = cyclic_permutation(3)
        verdict = equality_structure_recover(u.conj().T, u, restarts=10)
        assert verdict.case == EqualityCase.UNITARY_PAIR
        assert abs(verdict.beta) == pytest.approx(abs(verdict.alpha))
        assert np.allclose(verdict.unitary.conj().T @ verdict.unitary, np.eye(3), atol=1e-8)

    def test_unequal_norms(self):
        with pytest.raises(PreconditionError):
            equality_structure_recover(A, 2 * A, restarts=4)


def test_full_schur_norm_within_twice_kappa():
    report = schur_function_from_commutator(A, B, restarts=4)
    assert report.within_factor_two
    assert report.full_bracket.upper >= report.kappa.lower - 1e-6


def test_commutant_inclusion_with_certified_kappa():
    bracket = kappa_exact_normal(A, B, restarts=4)
    check = commutant_inclusion_check(A, B, bracket.upper, samples=30)
    assert check.worst_slack <= 1e-9
    assert check.checked == 30


def test_commutant_search_reaches_complex_commutant(normal3):
    check = commutant_inclusion_check(normal3, normal3 @ normal3, 10.0, samples=20)
    assert check.smallest_commutator <= 1e-2
    assert check.checked == 20


class TestKappaInvariants:
    a = np.diag([0.0, 1.0, 3.0]).astype(complex)
    b = np.diag([0.0, 1.0, 9.0]).astype(complex)

    @pytest.mark.parametrize('c', [-2j, 0.5, 3 + 4j])
    def test_homogeneous_in_b(self, c):
        base = kappa_estimate(self.a, self.b, restarts=4).lower
        scaled = kappa_estimate(self.a, c * self.b, restarts=4).lower
        assert scaled == pytest.approx(abs(c) * base, rel=1e-6)

    @pytest.mark.parametrize('s, t', [(1.5, -2.0), (-0.25, 7.0)])
    def test_translation_invariant(self, s, t):
        identity = np.eye(3)
        base = kappa_estimate(self.a, self.b, restarts=4).lower
        shifted = kappa_estimate(self.a + s * identity, self.b + t * identity, restarts=4).lower
        assert shifted == pytest.approx(base, rel=1e-9)

    def test_estimate_agrees_with_certified_bracket(self):
        estimate = kappa_estimate(A, B, restarts=6)
        bracket = kappa_exact_normal(A, B, restarts=6)
        assert estimate.lower <= bracket.upper + 1e-9
        assert estimate.lower >= bracket.lower - 1e-3
