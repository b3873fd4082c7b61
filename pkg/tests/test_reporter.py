import json
import math

import numpy as np
import pytest

from operator_lab.errors import InputError
from operator_lab.models import KappaMethod, VarianceReport
from operator_lab.reporter import build_report, convert_to_json_serializable, save_report, verify_report
from operator_lab.schur import schur_norm_bracket


def test_serialization_of_numeric_types():
    converted = convert_to_json_serializable({
        'z': 1 + 2j,
        'inf': float('inf'),
        'method': KappaMethod.ASCENT,
        'flag': np.bool_(True),
        'count': np.int64(3),
        'm': np.eye(2),
        'report': VarianceReport(variance=1.0, mean=0j, second_moment=1.0),
    })
    assert converted['z'] == [1.0, 2.0]
    assert converted['inf'] == 'inf'
    assert converted['method'] == 'ascent'
    assert converted['flag'] is True and converted['count'] == 3
    assert converted['m']['rows'] == 2 and len(converted['m']['entries']) == 4
    assert converted['report']['mean'] == [0.0, 0.0]
    json.dumps(converted)


def _schur_report(tmp_path, tamper=False):
    m = np.array([[1.0, 2.0], [0.5, 1.0]])
    bracket = schur_norm_bracket(m, restarts=4)
    lower = bracket.lower * (1.5 if tamper else 1.0)
    checks = [
        {'kind': 'schur_witness', 'm': m, 'witness': bracket.witness, 'lower': lower},
        {'kind': 'factorization', 'm': m, 'left': bracket.certificate.left,
         'right': bracket.certificate.right, 'upper': bracket.upper, 'pattern': None},
    ]
    report = build_report('schur-norm', 0, {'m': m}, {'lower': lower, 'upper': bracket.upper},
                          checks=checks)
    return save_report(report, str(tmp_path / 'report.json'))


def test_saved_report_reverifies(tmp_path):
    outcomes = verify_report(_schur_report(tmp_path))
    assert [o['name'] for o in outcomes] == ['schur_witness', 'factorization']
    assert all(o['passed'] for o in outcomes)


def test_inflated_claim_fails(tmp_path):
    outcomes = verify_report(_schur_report(tmp_path, tamper=True))
    assert not outcomes[0]['passed']
    assert outcomes[1]['passed']


def test_report_envelope(tmp_path):
    path = _schur_report(tmp_path)
    with open(path) as f:
        report = json.load(f)
    assert set(report) == {'subcommand', 'created_at', 'seed', 'inputs', 'results', 'residuals',
                           'warnings', 'checks'}
    assert math.isfinite(report['results']['upper'])


def test_unknown_check_kind(tmp_path):
    path = tmp_path / 'odd.json'
    path.write_text(json.dumps({'checks': [{'kind': 'mystery'}]}))
    with pytest.raises(InputError):
        verify_report(str(path))


def test_unreadable_report(tmp_path):
    with pytest.raises(InputError):
        verify_report(str(tmp_path / 'missing.json'))
