import numpy as np
import pytest

from operator_lab.errors import FunctionError, InputError, LipschitzError, PreconditionError, SpectrumError
from operator_lab.linalg_core import random_matrix, random_unit_vector, spawn_rngs, unilateral_shift_section
from operator_lab.models import DecisionKind, StateSpec, StructureCase
from operator_lab.variance import (adjoint_variance_gap, extract_function, extracted_lipschitz_constant,
                                   extraction_table, lipschitz_variance_bound, mixed_state_domination,
                                   perturbation_gap, rank_one_commutator_check, two_by_two_decide,
                                   variance, variance_equal_recover, variance_state)


class TestVariance:
    def test_balanced_state_of_reflection(self):
        report = variance(np.diag([1.0, -1.0]), np.array([1.0, 1.0]))
        assert report.variance == pytest.approx(1.0)
        assert report.mean == pytest.approx(0.0)

    def test_balanced_state_of_projection(self):
        report = variance(np.diag([0.0, 1.0]), np.array([1.0, 1.0]) / np.sqrt(2))
        assert report.variance == pytest.approx(0.25)

    def test_zero_on_eigenvectors(self, normal3):
        _, vectors = np.linalg.eig(normal3)
        for k in range(3):
            assert variance(normal3, vectors[:, k]).variance == pytest.approx(0.0, abs=1e-12)

    def test_affine_scaling(self):
        a = random_matrix(4, seed=5)
        xi = random_unit_vector(4, spawn_rngs(1, 1)[0])
        scaled = variance((2 - 1j) * a + 3 * np.eye(4), xi).variance
        assert scaled == pytest.approx(5 * variance(a, xi).variance, rel=1e-10)

    def test_zero_vector_is_rejected(self):
        with pytest.raises(InputError):
            variance(np.eye(2), np.zeros(2))

    def test_pure_density_matches_vector_state(self):
        a = random_matrix(3, seed=8)
        xi = random_unit_vector(3, spawn_rngs(4, 1)[0])
        density = np.outer(xi, xi.conj())
        assert variance_state(a, StateSpec(density=density)).variance == pytest.approx(
            variance(a, xi).variance, rel=1e-10)


class TestIdentities:
    @pytest.mark.parametrize('seed', [0, 1, 2])
    def test_rank_one_commutator_identity(self, seed):
        a = random_matrix(4, seed=seed)
        xi = random_unit_vector(4, spawn_rngs(seed + 10, 1)[0])
        check = rank_one_commutator_check(a, xi)
        assert check.identity_gap <= 1e-10 * max(1.0, check.lhs)

    def test_rank_one_identity_needs_unit_vector(self):
        with pytest.raises(InputError):
            rank_one_commutator_check(np.eye(2), np.array([1.0, 1.0]))

    def test_shift_section_has_larger_adjoint_variance(self):
        shift = unilateral_shift_section(3)
        check = rank_one_commutator_check(shift, np.array([1.0, 0.0, 0.0]))
        assert check.rhs == pytest.approx(1.0)
        assert check.adjoint_rhs == pytest.approx(0.0)
        assert check.lhs == pytest.approx(1.0)

    def test_perturbation_gap_below_bound(self):
        a = random_matrix(3, seed=1)
        b = a + 1e-3 * random_matrix(3, seed=2)
        gap, bound = perturbation_gap(a, b, random_unit_vector(3, spawn_rngs(3, 1)[0]))
        assert gap <= bound

    def test_mixed_state_ratio_for_scaled_matrix(self):
        a = random_matrix(3, 'hermitian', seed=4)
        density = np.diag([0.5, 0.3, 0.2]).astype(complex)
        assert mixed_state_domination(a, 0.5 * a, density) == pytest.approx(0.25, rel=1e-9)

    def test_adjoint_gap_separates_normal_from_shift(self, normal3):
        assert adjoint_variance_gap(normal3, samples=8).gap == pytest.approx(0.0, abs=1e-8)
        assert adjoint_variance_gap(unilateral_shift_section(3), samples=8).gap > 0.1


class TestTwoByTwo:
    def test_affine_contraction(self):
        a = np.array([[1.0, 2.0], [0.0, 3.0]])
        decision = two_by_two_decide(a, 0.5 * a + 2 * np.eye(2))
        assert decision.kind == DecisionKind.AFFINE
        assert decision.theta == pytest.approx(0.5)
        assert decision.tau == pytest.approx(2.0)

    def test_expansion_gives_witness(self):
        a = np.array([[1.0, 2.0], [0.0, 3.0]])
        b = 2 * a
        decision = two_by_two_decide(a, b)
        assert decision.kind == DecisionKind.VIOLATION
        witness_gap = variance(b, decision.witness).variance - variance(a, decision.witness).variance
        assert witness_gap == pytest.approx(decision.gap, rel=1e-8)
        assert decision.gap > 0

    def test_eigenvector_leak_is_a_violation(self):
        decision = two_by_two_decide(np.diag([1.0, 2.0]), np.array([[0.0, 0.0], [1.0, 0.0]]))
        assert decision.kind == DecisionKind.VIOLATION
        assert decision.gap == pytest.approx(1.0)

    def test_doubled_projection_is_a_violation(self):
        decision = two_by_two_decide(np.diag([0.0, 1.0]), np.diag([0.0, 2.0]))
        assert decision.kind == DecisionKind.VIOLATION
        assert decision.gap == pytest.approx(0.75, abs=1e-4)

    @pytest.mark.parametrize('seed', range(20))
    def test_random_affine_contractions(self, seed):
        rng = spawn_rngs(seed, 1)[0]
        a = random_matrix(2, seed=seed)
        theta = 0.95 * rng.uniform() * np.exp(2j * np.pi * rng.uniform())
        tau = complex(rng.standard_normal(), rng.standard_normal())
        decision = two_by_two_decide(a, theta * a + tau * np.eye(2))
        assert decision.kind == DecisionKind.AFFINE
        assert decision.theta == pytest.approx(theta, abs=1e-8)
        assert decision.residual <= 1e-9

    @pytest.mark.parametrize('seed', range(20))
    def test_random_pairs_are_decided_with_evidence(self, seed):
        a = random_matrix(2, seed=seed)
        b = random_matrix(2, seed=seed + 1000)
        decision = two_by_two_decide(a, b)
        if decision.kind == DecisionKind.AFFINE:
            assert abs(decision.theta) <= 1 + 1e-9
            assert decision.residual <= 1e-9 * max(1.0, np.linalg.norm(b, 2))
        else:
            assert decision.gap >= 1e-6
            gap = variance(b, decision.witness).variance - variance(a, decision.witness).variance
            assert gap == pytest.approx(decision.gap, rel=1e-8)

    def test_requires_two_by_two(self):
        with pytest.raises(InputError):
            two_by_two_decide(np.eye(3), np.eye(3))


class TestExtraction:
    def test_value_on_repeated_eigenvalue(self):
        extracted = extract_function(np.diag([1.0, 2.0, 2.0]), np.diag([5.0, 7.0, 7.0]), 2.0)
        assert extracted.value == pytest.approx(7.0)
        assert extracted.multiplicity == 2

    def test_inconsistent_eigenspace(self):
        with pytest.raises((FunctionError, PreconditionError)):
            extract_function(np.diag([1.0, 2.0, 2.0]), np.diag([5.0, 7.0, 8.0]), 2.0)

    def test_non_eigenvalue(self):
        with pytest.raises(SpectrumError):
            extract_function(np.diag([1.0, 2.0]), np.diag([1.0, 2.0]), 1.5)

    def test_lipschitz_constant_of_table(self):
        table = extraction_table(np.diag([0.0, 1.0, 3.0]), np.diag([0.0, 2.0, 3.0]))
        worst, pair = extracted_lipschitz_constant(table)
        assert worst == pytest.approx(2.0)
        assert {complex(p) for p in pair} == {0j, 1 + 0j}


class TestRecovery:
    def test_rotation_of_a(self, normal3):
        b = np.exp(0.7j) * normal3 + np.eye(3)
        verdict = variance_equal_recover(normal3, b, samples=40)
        assert verdict.case == StructureCase.AFFINE_OF_A
        assert verdict.alpha == pytest.approx(np.exp(0.7j))
        assert verdict.beta == pytest.approx(1.0)

    def test_adjoint_of_normal(self, normal3):
        verdict = variance_equal_recover(normal3, normal3.conj().T, samples=40)
        assert verdict.case == StructureCase.AFFINE_OF_A_STAR
        assert verdict.alpha == pytest.approx(1.0)

    @pytest.mark.parametrize('seed', range(8))
    def test_random_unimodular_affine(self, seed):
        rng = spawn_rngs(seed, 1)[0]
        a = random_matrix(3, seed=seed)
        sigma = np.exp(2j * np.pi * rng.uniform())
        shift = complex(rng.standard_normal(), rng.standard_normal())
        verdict = variance_equal_recover(a, sigma * a + shift * np.eye(3), samples=20)
        assert verdict.case == StructureCase.AFFINE_OF_A
        assert verdict.alpha == pytest.approx(sigma, abs=1e-6)
        assert verdict.beta == pytest.approx(shift, abs=1e-6)

    @pytest.mark.parametrize('seed', range(8))
    def test_random_normal_adjoint(self, seed):
        a = random_matrix(3, 'normal', seed=seed)
        verdict = variance_equal_recover(a, a.conj().T, samples=20)
        assert verdict.case == StructureCase.AFFINE_OF_A_STAR
        assert verdict.alpha == pytest.approx(1.0, abs=1e-6)
        assert verdict.beta == pytest.approx(0.0, abs=1e-6)

    def test_different_variances(self, normal3):
        verdict = variance_equal_recover(normal3, 2 * normal3, samples=20)
        assert verdict.case == StructureCase.INDETERMINATE
        assert verdict.witness is not None


class TestLipschitzFunctions:
    def test_absolute_value_contracts_variance(self, hermitian3):
        assert lipschitz_variance_bound(hermitian3, np.abs, 1.0, samples=50) <= 1.0 + 1e-9

    def test_constant_too_small(self, hermitian3):
        with pytest.raises(LipschitzError):
            lipschitz_variance_bound(hermitian3, lambda z: 2 * z, 1.0, samples=5)
