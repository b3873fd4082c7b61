import json

import numpy as np
import pytest

from operator_lab.errors import InputError, NormalityError, ResolventError
from operator_lab.linalg_core import (apply_function_spectral, as_matrix, commutator,
                                      cyclic_permutation, eig_normal, is_scalar_matrix,
                                      load_matrix, operator_norm, random_matrix, resolvent,
                                      spawn_rngs, spectral_norm, trace_norm)
from utils import matrix_from_json, pair_to_complex


class TestMatrixJson:
    def test_entry_count_mismatch_is_rejected(self):
        with pytest.raises(ValueError):
            matrix_from_json({'rows': 2, 'cols': 2, 'entries': [[1, 0]] * 3})

    def test_string_scalars_accept_i_and_j(self):
        assert pair_to_complex('1+2i') == 1 + 2j
        assert pair_to_complex([3, -1]) == 3 - 1j

    def test_load_matrix_maps_missing_file_to_input_error(self, tmp_path):
        with pytest.raises(InputError):
            load_matrix(str(tmp_path / 'missing.json'), 'a')

    def test_load_matrix_maps_bad_json_to_input_error(self, tmp_path):
        path = tmp_path / 'bad.json'
        path.write_text(json.dumps({'rows': 1}))
        with pytest.raises(InputError):
            load_matrix(str(path))

    def test_non_finite_entries_are_rejected(self):
        with pytest.raises(InputError):
            as_matrix([[np.nan, 0], [0, 1]])


class TestNorms:
    def test_power_iteration_matches_svd(self):
        m = random_matrix(6, 'general', seed=3)
        assert operator_norm(m) == pytest.approx(spectral_norm(m), rel=1e-8)

    def test_trace_norm_of_diagonal(self):
        assert trace_norm(np.diag([1.0, -2.0, 3j])) == pytest.approx(6.0)


class TestSpectral:
    def test_eig_normal_reconstructs(self, normal3):
        decomposition = eig_normal(normal3)
        assert np.allclose(decomposition.reconstruct(), normal3, atol=1e-12)
        assert np.allclose(decomposition.basis.conj().T @ decomposition.basis, np.eye(3), atol=1e-12)

    def test_eig_normal_rejects_jordan_block(self):
        with pytest.raises(NormalityError):
            eig_normal(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_apply_function_spectral_square(self, normal3):
        assert np.allclose(apply_function_spectral(normal3, lambda z: z ** 2), normal3 @ normal3,
                           atol=1e-10)

    def test_resolvent_refuses_points_near_spectrum(self):
        a = np.diag([0.0, 1.0])
        with pytest.raises(ResolventError):
            resolvent(a, 1.0 + 1e-4j, min_distance=1e-3)
        assert np.allclose(resolvent(a, 2.0), np.diag([0.5, 1.0]))


class TestRandomGeneration:
    def test_random_matrix_is_deterministic(self):
        assert np.array_equal(random_matrix(4, 'normal', seed=11), random_matrix(4, 'normal', seed=11))

    def test_unitary_kind_is_unitary(self):
        u = random_matrix(5, 'unitary', seed=2)
        assert np.allclose(u.conj().T @ u, np.eye(5), atol=1e-12)

    def test_spawned_streams_are_prefix_stable(self):
        short = [rng.standard_normal() for rng in spawn_rngs(9, 3)]
        long = [rng.standard_normal() for rng in spawn_rngs(9, 6)]
        assert short == long[:3]

    def test_unknown_kind_is_rejected(self):
        with pytest.raises(InputError):
            random_matrix(3, 'triangular')


def test_commutator_of_cyclic_permutation_with_itself():
    u = cyclic_permutation(4)
    assert not np.any(commutator(u, u))
    assert is_scalar_matrix(3 * np.eye(4))
    assert not is_scalar_matrix(u)


def test_pauli_x_decomposition():
    decomposition = eig_normal(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(decomposition.eigenvalues, [-1.0, 1.0])
    assert np.allclose(np.abs(decomposition.basis), 1 / np.sqrt(2))
    assert decomposition.residual <= 1e-12


def test_resolvent_identity(normal3):
    z, w = 4.0 + 0j, -3.0 + 3j
    rz, rw = resolvent(normal3, z), resolvent(normal3, w)
    assert np.allclose(rz - rw, (w - z) * rz @ rw, atol=1e-12)


@pytest.mark.parametrize('seed', [0, 1, 2])
def test_commutator_bilinear_and_leibniz(seed):
    a, b, x, y = (random_matrix(4, seed=seed * 10 + k) for k in range(4))
    alpha = 0.3 - 2j
    assert np.allclose(commutator(alpha * a + b, x), alpha * commutator(a, x) + commutator(b, x),
                       atol=1e-12)
    assert np.allclose(commutator(a, x @ y), commutator(a, x) @ y + x @ commutator(a, y), atol=1e-12)


@pytest.mark.parametrize('n', range(1, 9))
@pytest.mark.parametrize('kind', ['general', 'hermitian', 'normal'])
def test_operator_norm_matches_svd(n, kind):
    m = random_matrix(n, kind, seed=n)
    assert operator_norm(m) == pytest.approx(np.linalg.svd(m, compute_uv=False)[0], rel=1e-9)
