"""
Operator Lab - Numerical Experiments on Operator Inequalities

Variances of matrices in vector and density states, Schur multipliers of
divided differences, commutator estimates |[b, x]| <= kappa |[a, x]|, and the
Cauchy-Green functional calculus that produces the intertwining maps.

Main Components:
- linalg_core: matrix loading, spectral decompositions, resolvents
- variance: variance identities, 2x2 decision, structure recovery
- schur: divided differences and Schur-norm brackets with certificates
- commutator_lab: commutator constants, amplification, equality cases
- cauchy_green: plane extensions, kappa integrals, intertwining maps
- reporter: JSON reports, plot CSVs, report re-verification
- cli: experiment driver

Usage:
    # Command line usage
    python main.py kappa-exact --a a.json --b b.json

    # Programmatic usage
    from operator_lab import kappa_exact_normal, schur_norm_bracket
"""

from .errors import (ConvergenceWarning, InputError, OperatorLabError, PreconditionError,
                     SpectrumError)
from .variance import two_by_two_decide, variance, variance_equal_recover
from .schur import divided_difference_matrix, schur_norm_bracket
from .commutator_lab import equality_structure_recover, kappa_estimate, kappa_exact_normal
from .cauchy_green import build_T, disc_contour_T, kappa_integral, mollifier_extension
from .functions import parse_function_spec

# CLI main function
from .cli import main as cli_main

__version__ = "1.0.0"

__description__ = "Numerical experiments on commutator and variance inequalities for matrices"

__all__ = [
    # Variances
    'variance',
    'two_by_two_decide',
    'variance_equal_recover',

    # Schur multipliers
    'divided_difference_matrix',
    'schur_norm_bracket',

    # Commutators
    'kappa_estimate',
    'kappa_exact_normal',
    'equality_structure_recover',

    # Cauchy-Green calculus
    'mollifier_extension',
    'kappa_integral',
    'build_T',
    'disc_contour_T',

    # Functions
    'parse_function_spec',

    # Errors
    'OperatorLabError',
    'InputError',
    'PreconditionError',
    'SpectrumError',
    'ConvergenceWarning',

    # CLI
    'cli_main',
]
