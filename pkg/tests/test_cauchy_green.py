import dataclasses

import numpy as np
import pytest

from operator_lab import cauchy_green as cg
from operator_lab.errors import DerivativeError, DivergenceError, InputError, ResolutionError, SpectrumError
from operator_lab.functions import parse_function_spec
from operator_lab.linalg_core import apply_function_spectral, spectral_norm
from operator_lab.models import CompactRealFunction

FSQ = parse_function_spec('fsq')


@pytest.fixture(scope='module')
def fsq_extension():
    step = 1e-2
    return cg.mollifier_extension(cg.compact_function_from_scalar(FSQ, step), cg.build_mollifier(), step)


class TestMollifierAndGrid:
    def test_mollifier_integrates_to_one(self):
        cfg = cg.build_mollifier()
        assert cfg.integral_error <= 1e-8
        assert np.sum(cfg.weights * cfg.phi) == pytest.approx(1.0, abs=1e-8)

    def test_bad_cutoff(self):
        with pytest.raises(InputError):
            cg.build_mollifier(delta=1.5)

    def test_cutoff_levels(self):
        chi, slope = cg.cutoff_chi(np.array([0.0, 0.2, -0.25, 1.0, -1.3]), 0.25)
        assert np.allclose(chi, [1, 1, 1, 0, 0])
        assert np.allclose(slope, 0.0)

    def test_no_cell_center_on_the_real_line(self):
        grid = cg.uniform_grid((-1.0, 1.0, -1.0, 1.0), 0.1)
        assert np.min(np.abs(grid.centers.imag)) == pytest.approx(0.05)
        assert grid.area == pytest.approx(4.0)

    def test_refinement_preserves_area(self):
        grid = cg.uniform_grid((-1.0, 1.0, -1.0, 1.0), 0.1)
        refined = cg.refine_near(grid, np.array([0.0]), levels=3)
        assert refined.centers.size > grid.centers.size
        assert refined.area == pytest.approx(4.0)
        assert refined.shape is None

    def test_grid_carries_its_exclusion_margin(self):
        grid = cg.uniform_grid((-1.0, 1.0, -1.0, 1.0), 0.1)
        assert grid.exclusion_margin == pytest.approx(cg.EXCLUSION_STEPS * 0.1)
        refined = cg.refine_near(grid, np.array([0.0]), levels=2)
        assert refined.exclusion_margin == grid.exclusion_margin

    def test_quadrature_cells_respect_the_margin(self, hermitian3, fsq_extension):
        centers, _ = cg._quadrature_cells(hermitian3, fsq_extension, None, 1e-9)
        eigenvalues = np.array([-0.5, 0.1, 0.4])
        distance = np.min(np.abs(centers[:, None] - eigenvalues[None, :]), axis=1)
        assert fsq_extension.grid.exclusion_margin > 0
        assert np.min(distance) >= fsq_extension.grid.exclusion_margin

    def test_distance_to_interval(self):
        distance = cg.distance_to_set(np.array([0.5 + 1j, 3.0, -2.0 - 0j]), ('interval', -1.0, 1.0))
        assert np.allclose(distance, [1.0, 2.0, 1.0])


class TestExtension:
    def test_non_compact_function_is_rejected(self):
        with pytest.raises(InputError):
            cg.compact_function_from_scalar(parse_function_spec('square'), 1e-2)

    def test_coarse_step_cannot_resolve_cutoff(self):
        source = cg.compact_function_from_scalar(FSQ, 0.1)
        with pytest.raises(ResolutionError):
            cg.mollifier_extension(source, cg.build_mollifier(0.25), 0.1)

    def test_extension_matches_f_near_the_axis(self, fsq_extension):
        centers = fsq_extension.grid.centers
        near = np.abs(centers.imag) < 0.01
        x = centers[near].real
        assert np.max(np.abs(fsq_extension.g_values[near] - FSQ(x))) < 0.1

    def test_dbar_vanishes_outside_the_cone_over_the_support(self, fsq_extension):
        centers = fsq_extension.grid.centers
        outside = np.abs(centers.real) > 0.9 + np.abs(centers.imag) + 1e-9
        assert np.any(outside)
        assert not np.any(fsq_extension.dbar_values[outside])


class TestQuadratureCalculus:
    def test_second_order_refinement(self, hermitian3):
        study = cg.cg_refinement_study(hermitian3, FSQ, steps=(2e-2, 1e-2, 5e-3))
        assert study[1].error <= 5e-3
        assert study[-1].error < study[0].error
        assert study[-1].order is not None and study[-1].order >= 0.9
        assert {p.oracle for p in study} == {'spectral'}

    def test_non_normal_refinement_uses_successive_differences(self):
        shift = np.array([[0.0, 0.5], [0.0, 0.0]])
        study = cg.cg_refinement_study(shift, FSQ, steps=(2e-2, 1e-2))
        assert study[0].error is None
        assert np.isfinite(study[1].error)
        assert study[1].order is None
        assert {p.oracle for p in study} == {'successive'}

    def test_T_of_identity_is_the_derivative(self, hermitian3, fsq_extension):
        T = cg.build_T(hermitian3, fsq_extension)
        assert spectral_norm(T(np.eye(3)) - 2 * hermitian3) <= 3e-2
        assert T.label == 'cauchy-green'

    def test_intertwining_residuals(self, hermitian3, fsq_extension):
        T = cg.build_T(hermitian3, fsq_extension)
        residuals = cg.verify_intertwine(hermitian3, fsq_extension, T, samples=5)
        error = spectral_norm(T.function_value - apply_function_spectral(hermitian3, FSQ))
        assert residuals.oracle == 'spectral'
        assert residuals.discrete_res1 <= 1e-8
        assert residuals.discrete_res2 <= 1e-8
        assert residuals.res1 <= 2 * error + 1e-8
        assert residuals.res2 <= 2 * error + 1e-8

    def test_complex_spectrum_is_rejected(self, fsq_extension):
        with pytest.raises(SpectrumError):
            cg.cg_functional_calculus(np.diag([0.5j, 0.0]), fsq_extension)

    def test_sesquilinear_bound_with_large_kappa(self, hermitian3, fsq_extension):
        T = cg.build_T(hermitian3, fsq_extension)
        check = cg.sesquilinear_bound_check(T, kappa=1e3, samples=5)
        assert check.holds


class TestKappaIntegral:
    def test_distance_weight_around_a_point(self):
        ext = cg.synthetic_extension(('points', np.array([0j])), 1.0, 1.0, 1e-2)
        integral = cg.kappa_integral(ext, levels=4)
        assert integral.value == pytest.approx(2 * np.pi, rel=0.02)
        assert integral.worst_point == 0

    def test_bound_holds_for_synthetic_extension(self):
        ext = cg.synthetic_extension(('points', np.array([0.5 + 0j])), 0.5, 1.0, 2e-2)
        check = cg.kappa_bound_check(ext, 0.5)
        assert check.beta == pytest.approx(1.0, rel=1e-9)
        assert check.holds

    def test_flat_density_diverges(self):
        ext = cg.synthetic_extension(('points', np.array([0j])), 1.0, 1.0, 5e-2)

        def flat(points):
            points = np.asarray(points, dtype=complex).ravel()
            zeros = np.zeros(points.size, dtype=complex)
            return zeros, np.where(np.abs(points) < 1.0, 1.0 + 0j, 0j), zeros

        core = flat(ext.grid.centers)[1]
        ext = dataclasses.replace(ext, evaluator=flat, core_values=core, dbar_values=core)
        with pytest.raises(DivergenceError):
            cg.kappa_integral(ext, levels=4)

    def test_mollifier_integral_settles(self, fsq_extension):
        integral = cg.kappa_integral(fsq_extension, points=np.array([0.0, 0.5]), levels=3)
        assert np.isfinite(integral.value) and integral.value > 0
        assert integral.error_bound < integral.value


class TestRegularity:
    def test_smooth_function_converges(self):
        diagnostic = cg.besov_criterion(cg.compact_function_from_scalar(FSQ, 1e-3))
        assert not diagnostic.diverges
        assert diagnostic.tail_slope == pytest.approx(1.0, abs=0.2)

    def _manual(self, fprime):
        grid = np.linspace(-3.0, 3.0, 6001)
        return CompactRealFunction(sample_grid=grid, f_values=np.zeros(grid.size, dtype=complex),
                                   fprime_values=fprime(grid).astype(complex), support_radius=1.0,
                                   step=1e-3, analytic_derivative=True, fprime_fn=fprime)

    def test_square_root_cusp_has_half_slope(self):
        def fprime(x):
            x = np.real(x)
            return np.where(np.abs(x) <= 1, np.sign(x) * np.sqrt(np.abs(x)) * (1 - x ** 2) ** 2, 0.0)

        diagnostic = cg.besov_criterion(self._manual(fprime))
        assert diagnostic.tail_slope == pytest.approx(0.5, abs=0.15)
        assert not diagnostic.diverges

    def test_jump_in_derivative_diverges(self):
        def fprime(x):
            x = np.real(x)
            return np.where(np.abs(x) <= 1, np.sign(x) * (1 - x ** 2) ** 2, 0.0)

        assert cg.besov_criterion(self._manual(fprime)).diverges

    def test_square_class_constant(self):
        spec = cg.class_membership(parse_function_spec('square'), 1.0)
        assert spec.kappa_const == pytest.approx(2.0, rel=1e-6)
        assert not spec.diverges

    def test_linear_function_has_zero_constant(self):
        spec = cg.class_membership(parse_function_spec('poly:1,3'), 0.5)
        assert spec.kappa_const == pytest.approx(0.0, abs=1e-8)
        assert not spec.diverges

    def test_holder_exponent_threshold(self):
        function = parse_function_spec('abspow:1.5')
        assert not cg.class_membership(function, 0.5).diverges
        assert cg.class_membership(function, 1.0).diverges

    def test_kink_has_no_derivative(self):
        with pytest.raises(DerivativeError):
            cg.class_membership(parse_function_spec('abs'), 0.5)


class TestDiscContour:
    A = np.diag([0.0, 0.5]).astype(complex)

    def test_residual_vanishes_with_enough_nodes(self):
        T = cg.disc_contour_T(self.A, coefficients=[0, 0, 1], r=0.5, nodes=128)
        assert cg.contour_residual(self.A, T, np.array([0, 0, 1]), 0.5) <= 1e-8
        assert T.radius == pytest.approx(0.75)

    def test_identity_function_scales_by_r(self):
        T = cg.disc_contour_T(self.A, coefficients=[0, 1], r=0.5, nodes=128)
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.allclose(T(x), 0.5 * x, atol=1e-10)

    def test_schur_crosscheck_for_diagonal_a(self):
        assert cg.contour_schur_crosscheck(np.diag([0.1, -0.4, 0.6]), [1, 2, 0, 1]) <= 1e-10

    def test_node_study_decreases(self):
        study = cg.contour_node_study(self.A, [0, 0, 1], node_counts=(4, 16, 64))
        assert study[-1].residual < study[0].residual

    def test_coefficients_from_boundary_samples(self):
        z = np.exp(2j * np.pi * np.arange(8) / 8)
        coefficients = cg.coefficients_from_samples(z ** 2)
        assert coefficients.size == 4
        assert np.allclose(coefficients, [0, 0, 1, 0], atol=1e-12)

    def test_spectrum_on_the_circle(self):
        with pytest.raises(SpectrumError):
            cg.disc_contour_T(np.diag([1.0, 0.0]), coefficients=[0, 1])

    def test_exactly_one_source(self):
        with pytest.raises(InputError):
            cg.disc_contour_T(self.A)


def test_bundle_round_trip(tmp_path):
    ext = cg.synthetic_extension(('points', np.array([0j, 0.5 + 0j])), 0.5, 1.0, 5e-2)
    path = cg.save_extension_bundle(ext, str(tmp_path / 'ext.json'), alpha=0.5, radius=1.0)
    loaded = cg.load_extension_bundle(path)
    assert loaded.synthetic
    assert np.allclose(loaded.dbar_values, ext.dbar_values)
    assert loaded.grid.exclusion_margin == pytest.approx(ext.grid.exclusion_margin)
