import json

import numpy as np
import pytest

from operator_lab.errors import InputError
from operator_lab.functions import TRUNC_INNER, TRUNC_OUTER, parse_function_spec


def test_builtin_polynomials():
    assert parse_function_spec('square')(3.0) == 9
    assert parse_function_spec('poly:1,0,1')(2.0) == 5
    assert parse_function_spec('const:2+1i')(7.0) == 2 + 1j
    assert parse_function_spec('id').power_series == [0, 1]


def test_lipschitz_constants():
    assert parse_function_spec('id').lipschitz == 1.0
    assert parse_function_spec('abs').lipschitz == 1.0
    assert parse_function_spec('square').lipschitz is None


def test_fractional_power_derivative_at_zero():
    root = parse_function_spec('abspow:0.5')
    assert np.isinf(root.derivative(np.array([0.0]))[0])
    assert parse_function_spec('abspow:1.5').derivative(np.array([0.0]))[0] == 0.0


def test_truncation_profile():
    fsq = parse_function_spec('fsq')
    assert fsq.support_radius == TRUNC_OUTER
    assert fsq(0.5) == pytest.approx(0.25)
    assert fsq(TRUNC_OUTER + 0.01) == 0
    middle = 0.5 * (TRUNC_INNER + TRUNC_OUTER)
    step = 1e-6
    numeric = (fsq(middle + step) - fsq(middle - step)) / (2 * step)
    assert fsq.derivative(np.array([middle]))[0] == pytest.approx(numeric.real, rel=1e-5)


def test_spline_from_csv(tmp_path):
    path = tmp_path / 'samples.csv'
    path.write_text('x,y\n0,0\n1,2\n3,3\n')
    spline = parse_function_spec(f'spline:{path}')
    assert spline(0.5) == pytest.approx(1.0)
    assert spline.lipschitz == pytest.approx(2.0)
    with pytest.raises(InputError):
        spline(0.5 + 0.1j)


def test_spline_from_json(tmp_path):
    path = tmp_path / 'samples.json'
    path.write_text(json.dumps({'x': [0, 1], 'y': [[0, 0], [0, 1]]}))
    assert parse_function_spec(f'spline:{path}')(0.5) == pytest.approx(0.5j)


@pytest.mark.parametrize('spec', ['', 'cube', 'abspow:-1', 'poly:', 'abspow:x', 'spline:/nonexistent.csv'])
def test_bad_specs(spec):
    with pytest.raises(InputError):
        parse_function_spec(spec)
