import csv
import json

import numpy as np
import pytest

from operator_lab.cli import build_parser, main, resolve_config


def _read(path):
    with open(path) as f:
        return json.load(f)


def _stderr_error(captured):
    for line in reversed(captured.err.strip().splitlines()):
        try:
            return json.loads(line)
        except json.JSONDecodeError:
            continue
    return None


class TestConfiguration:
    def test_flags_override_config_file(self, tmp_path):
        config = tmp_path / 'run.json'
        config.write_text(json.dumps({'seed': 5, 'restarts': 3, 'a': 'a.json'}))
        args = build_parser().parse_args(['kappa', '--config', str(config), '--seed', '7'])
        resolved = resolve_config(args)
        assert resolved.seed == 7
        assert resolved.restarts == 3
        assert resolved.a == str(tmp_path / 'a.json')

    def test_unknown_config_key(self, tmp_path, capsys):
        config = tmp_path / 'run.json'
        config.write_text(json.dumps({'seeed': 5}))
        assert main(['kappa', '--config', str(config)]) == 2
        assert _stderr_error(capsys.readouterr())['error'] == 'input_error'

    def test_defaults_without_flags(self):
        resolved = resolve_config(build_parser().parse_args(['besov', '--f', 'fsq']))
        assert resolved.function == 'fsq'
        assert resolved.tol is None and not resolved.strict


class TestSubcommands:
    def test_variance_report(self, tmp_path, write_matrix):
        out = tmp_path / 'variance.json'
        code = main(['variance', '--a', write_matrix('a', np.diag([1.0, -1.0])),
                     '--xi', write_matrix('xi', np.array([[1.0], [1.0]]) / np.sqrt(2)),
                     '--output', str(out)])
        assert code == 0
        report = _read(out)
        assert report['results']['variance'] == pytest.approx(1.0)
        assert report['residuals']['rank_one_identity_gap'] == pytest.approx(0.0, abs=1e-12)
        assert report['inputs']['a']['rows'] == 2

    def test_schur_norm_then_verify(self, tmp_path):
        out = tmp_path / 'schur.json'
        assert main(['schur-norm', '--f', 'square', '--points', '0,1,2', '--restarts', '4',
                     '--output', str(out)]) == 0
        report = _read(out)
        assert report['results']['lower'] <= report['results']['upper'] + 1e-9
        assert {c['kind'] for c in report['checks']} == {'schur_witness', 'factorization'}
        assert main(['verify-report', str(out), '--no-save']) == 0

    def test_kappa_exact_report_verifies(self, tmp_path, write_matrix):
        out = tmp_path / 'kappa.json'
        a = np.diag([0.0, 1.0, 2.0])
        code = main(['kappa-exact', '--a', write_matrix('a', a), '--b', write_matrix('b', a @ a),
                     '--restarts', '4', '--output', str(out)])
        assert code == 0
        assert _read(out)['results']['lower'] >= 3.0 - 1e-6
        assert main(['verify-report', str(out), '--no-save']) == 0

    def test_decide2x2_affine(self, tmp_path, write_matrix):
        out = tmp_path / 'decide.json'
        a = np.array([[1.0, 2.0], [0.0, 3.0]])
        assert main(['decide2x2', '--a', write_matrix('a', a), '--b', write_matrix('b', 0.5 * a),
                     '--output', str(out)]) == 0
        assert _read(out)['results']['kind'] == 'Affine'
        assert main(['verify-report', str(out), '--no-save']) == 0

    def test_contour_plot_data(self, tmp_path, write_matrix):
        out, plot = tmp_path / 'contour.json', tmp_path / 'contour.csv'
        assert main(['contour-tfa', '--a', write_matrix('a', np.diag([0.0, 0.5])),
                     '--coefficients', '0,0,1', '--nodes', '8', '32', '128',
                     '--output', str(out), '--csv', str(plot)]) == 0
        with open(plot, newline='') as f:
            rows = list(csv.reader(f))
        assert rows[0] == ['nodes', 'residual']
        assert [int(r[0]) for r in rows[1:]] == [8, 32, 128]
        assert float(rows[-1][1]) <= 1e-8

    def test_synthetic_kappa_integral(self, tmp_path):
        out = tmp_path / 'integral.json'
        assert main(['kappa-integral', '--radius', '1', '--alpha', '1', '--h', '0.01',
                     '--output', str(out)]) == 0
        results = _read(out)['results']
        assert results['kappa'] == pytest.approx(2 * np.pi, rel=0.02)
        assert results['closed_form'] == pytest.approx(2 * np.pi)

    def test_cg_calc_on_a_shift(self, tmp_path, write_matrix):
        out = tmp_path / 'cg.json'
        shift = np.array([[0.0, 0.5], [0.0, 0.0]])
        assert main(['cg-calc', '--a', write_matrix('a', shift), '--f', 'fsq', '--h', '0.02', '0.01',
                     '--output', str(out)]) == 0
        assert _read(out)['results']['oracle'] == 'successive'

    def test_tfa_verify_on_a_shift_has_no_cg_error(self, tmp_path, write_matrix):
        out, plot = tmp_path / 'tfa.json', tmp_path / 'tfa.csv'
        shift = np.array([[0.0, 0.5], [0.0, 0.0]])
        assert main(['tfa-verify', '--a', write_matrix('a', shift), '--f', 'fsq', '--h', '0.02', '0.01',
                     '--output', str(out), '--csv', str(plot)]) == 0
        with open(plot, newline='') as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 2
        assert all(row['cg_error'] == '' for row in rows)
        assert _read(out)['results']['oracle'] == 'quadrature'


class TestFailures:
    def test_missing_matrix_file(self, tmp_path, capsys):
        code = main(['kappa', '--a', str(tmp_path / 'nope.json'), '--b', str(tmp_path / 'nope.json'),
                     '--no-save'])
        assert code == 2
        assert _stderr_error(capsys.readouterr())['error'] == 'input_error'

    def test_scalar_a_is_a_precondition_failure(self, write_matrix, capsys):
        code = main(['kappa', '--a', write_matrix('a', 2 * np.eye(2)),
                     '--b', write_matrix('b', np.diag([0.0, 1.0])), '--no-save'])
        assert code == 3
        assert _stderr_error(capsys.readouterr())['error'] == 'degenerate_error'

    def test_kink_in_class_membership(self, capsys):
        assert main(['class-membership', '--f', 'abs', '--alpha', '0.5', '--no-save']) == 2
        assert _stderr_error(capsys.readouterr())['error'] == 'derivative_error'

    def test_missing_required_input(self, capsys):
        assert main(['cg-calc', '--no-save']) == 2
