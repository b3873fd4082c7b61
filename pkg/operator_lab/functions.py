"""
Built-in scalar functions selected by name on the command line.

Spec strings:
    id, const:c, square, abs, abspow:p, poly:c0,c1,..., spline:path,
    trunc:<spec> (smooth compactly supported cutoff of <spec>), fsq (= trunc:square)
"""

import csv
import json
import os
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from utils import logger, pair_to_complex

from .errors import InputError

# trunc: cutoff equals 1 on |t| <= TRUNC_INNER and 0 on |t| >= TRUNC_OUTER
TRUNC_INNER = 0.6
TRUNC_OUTER = 0.9


@dataclass
class ScalarFunction:
    """
    A scalar function with whatever side information is known for it.

    derivative is the real-line derivative; lipschitz is a global constant
    when one exists; power_series holds Taylor coefficients at 0 for
    polynomials; support_radius is set for compactly supported functions.
    """
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lipschitz: Optional[float] = None
    power_series: Optional[List[complex]] = None
    support_radius: Optional[float] = None

    def __call__(self, z):
        return self.fn(np.asarray(z, dtype=complex))


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (10 - 15 * u + 6 * u ** 2)


def _smoothstep_prime(u: np.ndarray) -> np.ndarray:
    inside = (u > 0.0) & (u < 1.0)
    return np.where(inside, 30 * u ** 2 * (u - 1) ** 2, 0.0)


def cutoff(t: np.ndarray) -> np.ndarray:
    u = (np.abs(t) - TRUNC_INNER) / (TRUNC_OUTER - TRUNC_INNER)
    return 1.0 - _smoothstep(u)


def cutoff_prime(t: np.ndarray) -> np.ndarray:
    t = np.real(t)
    u = (np.abs(t) - TRUNC_INNER) / (TRUNC_OUTER - TRUNC_INNER)
    return -_smoothstep_prime(u) * np.sign(t) / (TRUNC_OUTER - TRUNC_INNER)


def _polynomial(coefficients: List[complex], name: str) -> ScalarFunction:
    ascending = np.asarray(coefficients, dtype=complex)
    derivative_coeffs = ascending[1:] * np.arange(1, ascending.size)
    lipschitz = 0.0 if ascending.size <= 1 else (abs(ascending[1]) if ascending.size == 2 else None)
    return ScalarFunction(
        name=name,
        fn=lambda z: np.polynomial.polynomial.polyval(z, ascending),
        derivative=lambda x: np.polynomial.polynomial.polyval(x, derivative_coeffs)
        if derivative_coeffs.size else np.zeros_like(np.asarray(x, dtype=complex)),
        lipschitz=lipschitz,
        power_series=list(ascending),
    )


def _abs_power(p: float) -> ScalarFunction:
    if p <= 0:
        raise InputError(f"abspow exponent must be positive, got {p}")

    def derivative(x):
        x = np.real(x)
        magnitude = np.abs(x)
        at_zero = 0.0 if p >= 1 else np.inf
        with np.errstate(divide='ignore', invalid='ignore'):
            return np.where(magnitude > 0, np.sign(x) * p * magnitude ** (p - 1), at_zero)

    return ScalarFunction(name=f'abspow:{p}', fn=lambda z: np.abs(z) ** p,
                          derivative=derivative, lipschitz=1.0 if p == 1 else None)


def _load_samples(path: str) -> np.ndarray:
    """(x, y) sample pairs from a JSON {"x": [...], "y": [...]} file or a two-column CSV."""
    if not os.path.exists(path):
        raise InputError(f"Spline sample file not found: {path}")
    try:
        if path.lower().endswith('.json'):
            with open(path, 'r') as f:
                data = json.load(f)
            xs = np.asarray(data['x'], dtype=float)
            ys = np.asarray([pair_to_complex(v) for v in data['y']], dtype=complex)
        else:
            rows = []
            with open(path, 'r', newline='') as f:
                for row in csv.reader(f):
                    try:
                        rows.append((float(row[0]), float(row[1])))
                    except (ValueError, IndexError):
                        continue  # header
            xs = np.asarray([r[0] for r in rows], dtype=float)
            ys = np.asarray([r[1] for r in rows], dtype=complex)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
        raise InputError(f"Could not read spline samples from {path}: {e}")

    if xs.size < 2 or xs.size != ys.size:
        raise InputError("Spline needs at least two (x, y) samples of equal count")
    order = np.argsort(xs)
    xs, ys = xs[order], ys[order]
    if np.any(np.diff(xs) <= 0):
        raise InputError("Spline abscissae must be distinct")
    return np.vstack([xs, ys])


def _spline(path: str) -> ScalarFunction:
    samples = _load_samples(path)
    xs, ys = samples[0].real, samples[1]
    slopes = np.diff(ys) / np.diff(xs)

    def real_part(z):
        z = np.asarray(z, dtype=complex)
        if np.any(np.abs(z.imag) > 1e-12 * np.maximum(1.0, np.abs(z))):
            raise InputError("spline functions are defined on the real line only")
        return z.real

    def fn(z):
        x = real_part(z)
        return np.interp(x, xs, ys.real) + 1j * np.interp(x, xs, ys.imag)

    def derivative(x):
        x = np.real(x)
        index = np.clip(np.searchsorted(xs, x, side='right') - 1, 0, slopes.size - 1)
        inside = (x >= xs[0]) & (x <= xs[-1])
        return np.where(inside, slopes[index], 0.0)

    return ScalarFunction(name=f'spline:{os.path.basename(path)}', fn=fn, derivative=derivative,
                          lipschitz=float(np.max(np.abs(slopes))))


def truncate(inner: ScalarFunction) -> ScalarFunction:
    """inner times a smooth cutoff supported in [-TRUNC_OUTER, TRUNC_OUTER]."""
    if inner.derivative is None:
        raise InputError(f"trunc needs a function with a known derivative, got {inner.name}")

    def derivative(x):
        x = np.real(x)
        return inner.derivative(x) * cutoff(x) + inner.fn(x.astype(complex)) * cutoff_prime(x)

    return ScalarFunction(name=f'trunc:{inner.name}', fn=lambda z: inner.fn(z) * cutoff(z),
                          derivative=derivative, support_radius=TRUNC_OUTER)


def parse_function_spec(spec: str) -> ScalarFunction:
    """
    Build a ScalarFunction from a spec string.

    Raises:
        InputError: unknown name or malformed parameters
    """
    if not spec:
        raise InputError("Empty function spec")
    spec = spec.strip()
    name, _, argument = spec.partition(':')
    name = name.lower()

    try:
        if name == 'id':
            return _polynomial([0, 1], 'id')
        if name == 'const':
            return _polynomial([pair_to_complex(argument)], spec)
        if name == 'square':
            return _polynomial([0, 0, 1], 'square')
        if name == 'abs':
            return _abs_power(1.0)
        if name == 'abspow':
            return _abs_power(float(argument))
        if name == 'poly':
            coefficients = [pair_to_complex(c) for c in argument.split(',') if c.strip()]
            if not coefficients:
                raise InputError("poly needs at least one coefficient")
            return _polynomial(coefficients, spec)
        if name == 'spline':
            return _spline(argument)
        if name == 'trunc':
            return truncate(parse_function_spec(argument))
        if name == 'fsq':
            return truncate(_polynomial([0, 0, 1], 'square'))
    except ValueError as e:
        if isinstance(e, InputError):
            raise
        raise InputError(f"Malformed function spec '{spec}': {e}")

    logger.error(f"Unknown function spec: {spec}")
    raise InputError(f"Unknown function spec '{spec}'",
                     {'known': ['id', 'const:c', 'square', 'abs', 'abspow:p', 'poly:c0,c1,...',
                                'spline:path', 'trunc:<spec>', 'fsq']})
