"""
Experiment driver for the operator lab.

Usage:
    python main.py kappa --a a.json --b b.json --seed 7 --restarts 50
    python main.py schur-norm --function square --points 0,1,2
    python main.py tfa-verify --a a.json --f fsq --h 0.01 0.005 --csv tfa.csv
    python main.py verify-report oplab_reports/kappa_20260101_120000.json

Every subcommand writes a JSON report (inputs, seed, results, residuals,
checks). Settings come from defaults, then --config FILE.json, then flags.
"""

import argparse
import dataclasses
import importlib
import json
import os
import sys
import warnings
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import (CONTOUR_NODES, CUTOFF_DELTA, DEFAULT_GRID_STEP, DEFAULT_RESTARTS,
                    DEFAULT_SAMPLES, DEFAULT_SEED, DEFAULT_TOLERANCE, EQUALITY_TOLERANCE,
                    MOLLIFIER_NODES, REFINEMENT_LEVELS, SCHUR_BRACKET_TOLERANCE)
from models import ErrorPayload, ExitCode
from utils import logger, pair_to_complex

from . import cauchy_green, commutator_lab, schur
from .errors import (CommuteError, ConvergenceWarning, DegenerateError, DerivativeError,
                     DivergenceError, FunctionError, InputError, LipschitzError, NormalityError,
                     OperatorLabError, PreconditionError, ResolutionError, ResolventError,
                     SpectrumError)
from .functions import parse_function_spec
from .linalg_core import apply_function_spectral, load_matrix
from .models import DecisionKind, StateSpec, StructureCase
from .reporter import build_report, print_report_summary, save_plot_csv, save_report, verify_report

# The package re-exports the variance() function under the same name, so bind the module explicitly
variance = importlib.import_module('.variance', __package__)

EXIT_CODES: Dict[type, ExitCode] = {
    InputError: ExitCode.INPUT_ERROR,
    LipschitzError: ExitCode.INPUT_ERROR,
    DerivativeError: ExitCode.INPUT_ERROR,
    ResolutionError: ExitCode.INPUT_ERROR,
    PreconditionError: ExitCode.PRECONDITION_ERROR,
    NormalityError: ExitCode.PRECONDITION_ERROR,
    SpectrumError: ExitCode.PRECONDITION_ERROR,
    ResolventError: ExitCode.PRECONDITION_ERROR,
    DegenerateError: ExitCode.PRECONDITION_ERROR,
    CommuteError: ExitCode.PRECONDITION_ERROR,
    FunctionError: ExitCode.PRECONDITION_ERROR,
    DivergenceError: ExitCode.PRECONDITION_ERROR,
}

PATH_FIELDS = ('a', 'b', 'm', 'xi', 'bundle', 'output', 'csv', 'samples_file', 'report')


# ============================================================================
# CONFIGURATION
# ============================================================================

@dataclass
class ExperimentConfig:
    """Everything one run needs; unknown keys in a config file are rejected."""
    subcommand: str = ''
    seed: int = DEFAULT_SEED
    tol: Optional[float] = None
    restarts: int = DEFAULT_RESTARTS
    samples: int = DEFAULT_SAMPLES
    output: Optional[str] = None
    csv: Optional[str] = None
    no_save: bool = False
    strict: bool = False
    verbose: bool = False
    # matrices and states
    a: Optional[str] = None
    b: Optional[str] = None
    m: Optional[str] = None
    xi: Optional[str] = None
    eigenvalue: Optional[str] = None
    # Schur multipliers
    function: Optional[str] = None
    points: Optional[str] = None
    restricted: bool = False
    duality: bool = False
    # commutators
    copies: int = 2
    kappa: Optional[float] = None
    # Cauchy-Green
    steps: List[float] = field(default_factory=lambda: [DEFAULT_GRID_STEP])
    delta: float = CUTOFF_DELTA
    mollifier_nodes: int = MOLLIFIER_NODES
    levels: int = REFINEMENT_LEVELS
    bundle: Optional[str] = None
    alpha: float = 1.0
    radius: Optional[float] = None
    k_set: Optional[str] = None
    interval: List[float] = field(default_factory=lambda: [-1.0, 1.0])
    sample_step: float = 1e-3
    # disc contour
    coefficients: Optional[str] = None
    samples_file: Optional[str] = None
    r: float = 0.5
    nodes: List[int] = field(default_factory=lambda: [CONTOUR_NODES])
    # verify-report
    report: Optional[str] = None

    def tolerance(self, default: float) -> float:
        return default if self.tol is None else self.tol


def load_config_file(path: str) -> Dict[str, Any]:
    """
    Raises:
        InputError: unreadable file or keys that are not ExperimentConfig fields
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"Could not read config file {path}: {e}")
    if not isinstance(data, dict):
        raise InputError(f"Config file {path} must hold a JSON object")

    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise InputError(f"Unknown config keys: {', '.join(unknown)}", {'unknown': unknown})

    base = os.path.dirname(os.path.abspath(path))
    for key in PATH_FIELDS:
        if data.get(key) and not os.path.isabs(data[key]):
            data[key] = os.path.join(base, data[key])
    return data


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """defaults < config file < flags, with every path made absolute."""
    values = dataclasses.asdict(ExperimentConfig())
    flags = vars(args).copy()
    config_path = flags.pop('config', None)
    if config_path:
        values.update(load_config_file(config_path))
    values.update(flags)

    for key in PATH_FIELDS:
        if values.get(key):
            values[key] = os.path.abspath(values[key])
    spec = values.get('function')
    if spec and spec.startswith('spline:'):
        values['function'] = 'spline:' + os.path.abspath(spec[len('spline:'):])
    return ExperimentConfig(**values)


# ============================================================================
# INPUT HELPERS
# ============================================================================

def _require(config: ExperimentConfig, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(config, n) in (None, '')]
    if missing:
        raise InputError(f"{config.subcommand} needs {', '.join(missing)}")


def _fields(result: Any) -> Dict[str, Any]:
    """Shallow field dump of a result dataclass; nested values stay as they are."""
    return {f.name: getattr(result, f.name) for f in dataclasses.fields(result) if f.repr}


def _load(config: ExperimentConfig, name: str) -> np.ndarray:
    _require(config, name)
    return load_matrix(getattr(config, name), name)


def _complex_list(text: str, name: str) -> List[complex]:
    try:
        return [pair_to_complex(item) for item in text.split(',') if item.strip()]
    except ValueError as e:
        raise InputError(f"Malformed {name}: {e}")


def _compact_set(config: ExperimentConfig) -> Tuple:
    """K from 'interval:lo,hi' or 'points:z1,z2,...'; the point 0 by default."""
    if not config.k_set:
        return ('points', np.zeros(1, dtype=complex))
    kind, _, body = config.k_set.partition(':')
    if kind == 'interval':
        bounds = [z.real for z in _complex_list(body, 'interval')]
        if len(bounds) != 2 or bounds[0] >= bounds[1]:
            raise InputError(f"Malformed interval K: {config.k_set}")
        return ('interval', bounds[0], bounds[1])
    if kind == 'points':
        return ('points', np.asarray(_complex_list(body, 'points'), dtype=complex))
    raise InputError(f"K must be interval:lo,hi or points:..., got {config.k_set}")


def _extension(config: ExperimentConfig):
    """Extension from --bundle, a synthetic one from --radius, or the mollifier one of --f."""
    if config.bundle and os.path.exists(config.bundle) and config.subcommand != 'extend':
        return cauchy_green.load_extension_bundle(config.bundle)
    step = config.steps[0]
    if config.radius is not None:
        return cauchy_green.synthetic_extension(_compact_set(config), config.alpha, config.radius, step)
    _require(config, 'function')
    source = cauchy_green.compact_function_from_scalar(parse_function_spec(config.function), step)
    cfg = cauchy_green.build_mollifier(config.delta, config.mollifier_nodes)
    return cauchy_green.mollifier_extension(source, cfg, step)


@dataclass
class Outcome:
    inputs: Dict[str, Any]
    results: Dict[str, Any]
    residuals: Dict[str, Any] = field(default_factory=dict)
    checks: List[Dict[str, Any]] = field(default_factory=list)
    plot: Optional[Tuple[Sequence[str], List[Sequence[Any]]]] = None
    passed: bool = True


# ============================================================================
# SUBCOMMANDS
# ============================================================================

def run_variance(config: ExperimentConfig) -> Outcome:
    a = _load(config, 'a')
    state = StateSpec.from_array(_load(config, 'xi'))
    report = variance.variance_state(a, state)
    inputs = {'a': a, 'xi': state.vector if state.vector is not None else state.density}
    results: Dict[str, Any] = {'variance': report.variance, 'mean': report.mean,
                               'second_moment': report.second_moment}
    residuals: Dict[str, Any] = {}

    if state.vector is not None:
        check = variance.rank_one_commutator_check(a, state.vector)
        results.update({'rank_one_commutator_sq': check.lhs, 'adjoint_variance': check.adjoint_rhs})
        residuals['rank_one_identity_gap'] = check.identity_gap
    if config.b:
        b = _load(config, 'b')
        gap, bound = variance.perturbation_gap(a, b, state)
        inputs['b'] = b
        results.update({'perturbation_gap': gap, 'perturbation_bound': bound})
        if state.density is not None:
            results['mixed_domination_ratio'] = variance.mixed_state_domination(a, b, state.density)
    return Outcome(inputs=inputs, results=results, residuals=residuals)


def run_decide2x2(config: ExperimentConfig) -> Outcome:
    a, b = _load(config, 'a'), _load(config, 'b')
    decision = variance.two_by_two_decide(a, b, tol=config.tolerance(DEFAULT_TOLERANCE), seed=config.seed)
    checks = []
    if decision.kind == DecisionKind.AFFINE:
        checks.append({'kind': 'affine_fit', 'a': a, 'b': b, 'alpha': decision.theta,
                       'beta': decision.tau, 'adjoint': False, 'residual': decision.residual})
    else:
        checks.append({'kind': 'variance_witness', 'a': a, 'b': b, 'witness': decision.witness,
                       'gap': decision.gap})
    return Outcome(inputs={'a': a, 'b': b}, results=_fields(decision),
                   residuals={'affine_residual': decision.residual}, checks=checks)


def run_recover_th1(config: ExperimentConfig) -> Outcome:
    a, b = _load(config, 'a'), _load(config, 'b')
    verdict = variance.variance_equal_recover(a, b, samples=config.samples, seed=config.seed,
                                              tol=config.tolerance(DEFAULT_TOLERANCE))
    checks = []
    if verdict.case in (StructureCase.AFFINE_OF_A, StructureCase.AFFINE_OF_A_STAR):
        checks.append({'kind': 'affine_fit', 'a': a, 'b': b, 'alpha': verdict.alpha,
                       'beta': verdict.beta, 'residual': verdict.residual,
                       'adjoint': verdict.case == StructureCase.AFFINE_OF_A_STAR})
    return Outcome(inputs={'a': a, 'b': b},
                   results={'case': verdict.case, 'alpha': verdict.alpha, 'beta': verdict.beta,
                            'max_sample_gap': verdict.max_sample_gap, 'witness': verdict.witness},
                   residuals={'fit_residual': verdict.residual}, checks=checks)


def run_extract_f(config: ExperimentConfig) -> Outcome:
    a, b = _load(config, 'a'), _load(config, 'b')
    tol = config.tolerance(DEFAULT_TOLERANCE)
    if config.eigenvalue:
        extracted = variance.extract_function(a, b, pair_to_complex(config.eigenvalue), tol)
        return Outcome(inputs={'a': a, 'b': b, 'eigenvalue': config.eigenvalue},
                       results=_fields(extracted),
                       residuals={'spread': extracted.spread})

    table = variance.extraction_table(a, b, tol)
    lipschitz, pair = variance.extracted_lipschitz_constant(table)
    rows = [(alpha.real, alpha.imag, ev.value.real, ev.value.imag, ev.spread, ev.multiplicity)
            for alpha, ev in table]
    return Outcome(inputs={'a': a, 'b': b},
                   results={'table': [{'eigenvalue': alpha, 'value': ev.value,
                                       'multiplicity': ev.multiplicity} for alpha, ev in table],
                            'lipschitz_constant': lipschitz, 'binding_pair': pair},
                   residuals={'max_spread': max(ev.spread for _, ev in table)},
                   plot=(['eigenvalue_re', 'eigenvalue_im', 'value_re', 'value_im', 'spread',
                          'multiplicity'], rows))


def _schur_input(config: ExperimentConfig) -> Tuple[np.ndarray, Dict[str, Any]]:
    if config.m:
        m = _load(config, 'm')
        return m, {'m': m}
    _require(config, 'function', 'points')
    points = _complex_list(config.points, 'points')
    matrix = schur.divided_difference_matrix(parse_function_spec(config.function), points)
    return matrix.entries, {'function': config.function, 'points': points, 'm': matrix.entries}


def run_schur_norm(config: ExperimentConfig) -> Outcome:
    m, inputs = _schur_input(config)
    tol = config.tolerance(SCHUR_BRACKET_TOLERANCE)
    results: Dict[str, Any] = {}
    if config.restricted:
        m = np.where(np.eye(m.shape[0], dtype=bool), 0.0, m)
        bracket = schur.restricted_offdiag_bracket(m, seed=config.seed, restarts=config.restarts, tol=tol)
        pattern = ~np.eye(m.shape[0], dtype=bool)
    else:
        bracket = schur.schur_norm_bracket(m, seed=config.seed, restarts=config.restarts, tol=tol)
        pattern = None
    results.update({'lower': bracket.lower, 'upper': bracket.upper, 'width': bracket.width,
                    'restricted': config.restricted, 'witness': bracket.witness})

    if config.duality:
        duality = schur.transpose_duality_check(m, seed=config.seed, restarts=config.restarts)
        results['duality'] = duality

    checks = [
        {'kind': 'schur_witness', 'm': m, 'witness': bracket.witness, 'lower': bracket.lower},
        {'kind': 'factorization', 'm': m, 'left': bracket.certificate.left,
         'right': bracket.certificate.right, 'upper': bracket.upper,
         'pattern': None if pattern is None else pattern.astype(float)},
    ]
    return Outcome(inputs=inputs, results=results, residuals={'bracket_width': bracket.width},
                   checks=checks)


def run_kappa(config: ExperimentConfig) -> Outcome:
    a, b = _load(config, 'a'), _load(config, 'b')
    estimate = commutator_lab.kappa_estimate(a, b, seed=config.seed, restarts=config.restarts)
    return Outcome(inputs={'a': a, 'b': b, 'restarts': config.restarts},
                   results={'lower': estimate.lower, 'witness': estimate.witness,
                            'method': estimate.method, 'samples_used': estimate.samples_used},
                   checks=[{'kind': 'kappa_witness', 'a': a, 'b': b, 'witness': estimate.witness,
                            'lower': estimate.lower}])


def run_kappa_exact(config: ExperimentConfig) -> Outcome:
    a, b = _load(config, 'a'), _load(config, 'b')
    tol = config.tolerance(SCHUR_BRACKET_TOLERANCE)
    report = commutator_lab.schur_function_from_commutator(a, b, tol=tol, seed=config.seed,
                                                          restarts=config.restarts)
    kappa = report.kappa
    results = {'lower': kappa.lower, 'upper': kappa.upper, 'schur_matrix': kappa.schur.entries,
               'full_schur_lower': report.full_bracket.lower,
               'full_schur_upper': report.full_bracket.upper,
               'full_over_kappa': report.empirical_ratio,
               'within_factor_two': report.within_factor_two, 'witness': kappa.witness}
    checks = [
        {'kind': 'kappa_witness', 'a': a, 'b': b, 'witness': kappa.witness, 'lower': kappa.lower},
        {'kind': 'factorization', 'm': kappa.schur.entries, 'left': kappa.certificate.left,
         'right': kappa.certificate.right, 'upper': kappa.upper,
         'pattern': kappa.pattern.astype(float)},
    ]
    return Outcome(inputs={'a': a, 'b': b}, results=results,
                   residuals={'bracket_width': kappa.upper - kappa.lower}, checks=checks)


def run_recover_th42(config: ExperimentConfig) -> Outcome:
    a, b = _load(config, 'a'), _load(config, 'b')
    verdict = commutator_lab.equality_structure_recover(
        a, b, seed=config.seed, tol=config.tolerance(EQUALITY_TOLERANCE),
        restarts=max(config.restarts, 1))
    return Outcome(inputs={'a': a, 'b': b}, results=_fields(verdict),
                   residuals={'fit_residual': verdict.residual})


def run_amplify(config: ExperimentConfig) -> Outcome:
    a, b = _load(config, 'a'), _load(config, 'b')
    check = commutator_lab.amplified_check(a, b, config.copies, seed=config.seed,
                                           samples=config.samples, kappa=config.kappa)
    return Outcome(inputs={'a': a, 'b': b, 'copies': config.copies, 'kappa': config.kappa},
                   results=_fields(check),
                   passed=check.within_kappa is not False)


def run_extend(config: ExperimentConfig) -> Outcome:
    ext = _extension(config)
    results = {'cells': int(ext.grid.centers.size), 'support_box': list(ext.support_box),
               'max_abs_dbar': float(np.max(np.abs(ext.dbar_values))),
               'max_abs_g': float(np.max(np.abs(ext.g_values))), 'synthetic': ext.synthetic,
               'exclusion_margin': ext.grid.exclusion_margin}
    if config.bundle:
        results['bundle'] = cauchy_green.save_extension_bundle(
            ext, config.bundle, function_spec=None if ext.synthetic else config.function,
            alpha=config.alpha, radius=config.radius)
    return Outcome(inputs={'function': config.function, 'step': config.steps[0], 'delta': config.delta,
                           'radius': config.radius, 'k_set': config.k_set},
                   results=results, residuals={'fd_discrepancy': ext.fd_discrepancy})


def run_kappa_integral(config: ExperimentConfig) -> Outcome:
    ext = _extension(config)
    integral = cauchy_green.kappa_integral(ext, levels=config.levels)
    bound = cauchy_green.kappa_bound_check(ext, config.alpha, integral)
    results = {'kappa': integral.value, 'core': integral.core, 'band': integral.band,
               'worst_point': integral.worst_point, 'level_values': integral.level_values,
               'beta': bound.beta, 'radius': bound.radius, 'bound': bound.bound,
               'bound_holds': bound.holds}
    if ext.synthetic and config.radius is not None and ext.K[0] == 'points' and np.size(ext.K[1]) == 1:
        results['closed_form'] = 2 * np.pi * config.radius ** config.alpha / config.alpha
    rows = [(level, value) for level, value in enumerate(integral.level_values)]
    return Outcome(inputs={'function': config.function, 'bundle': config.bundle, 'alpha': config.alpha,
                           'levels': config.levels, 'step': config.steps[0]},
                   results=results, residuals={'refinement_error': integral.error_bound},
                   plot=(['level', 'kappa'], rows), passed=bound.holds)


def run_cg_calc(config: ExperimentConfig) -> Outcome:
    a = _load(config, 'a')
    _require(config, 'function')
    function = parse_function_spec(config.function)
    cfg = cauchy_green.build_mollifier(config.delta, config.mollifier_nodes)
    study = cauchy_green.cg_refinement_study(a, function, config.steps, cfg)
    rows = [(p.step, '' if p.error is None else p.error, '' if p.order is None else p.order)
            for p in study]
    return Outcome(inputs={'a': a, 'function': config.function, 'steps': config.steps},
                   results={'study': study, 'oracle': study[-1].oracle},
                   residuals={'final_error': study[-1].error},
                   plot=(['step', 'error', 'order'], rows))


def run_tfa_verify(config: ExperimentConfig) -> Outcome:
    a = _load(config, 'a')
    _require(config, 'function')
    function = parse_function_spec(config.function)
    cfg = cauchy_green.build_mollifier(config.delta, config.mollifier_nodes)
    rows, per_step = [], []
    for step in config.steps:
        oracle = None
        source = cauchy_green.compact_function_from_scalar(function, step)
        ext = cauchy_green.mollifier_extension(source, cfg, step)
        T = cauchy_green.build_T(a, ext)
        residuals = cauchy_green.verify_intertwine(a, ext, T, samples=min(config.samples, 20),
                                                   seed=config.seed)
        if residuals.oracle == 'spectral':
            oracle = apply_function_spectral(a, source.f)
        error = float(np.linalg.norm(T.function_value - oracle, 2)) if oracle is not None else None
        per_step.append({'step': step, 'cg_error': error, 'residuals': residuals, 'cells': T.cells})
        rows.append((step, '' if error is None else error, residuals.res1, residuals.res2,
                     residuals.discrete_res1, residuals.discrete_res2))
    last = per_step[-1]['residuals']
    return Outcome(inputs={'a': a, 'function': config.function, 'steps': config.steps},
                   results={'per_step': per_step, 'oracle': last.oracle},
                   residuals={'res1': last.res1, 'res2': last.res2},
                   plot=(['step', 'cg_error', 'res1', 'res2', 'discrete_res1', 'discrete_res2'], rows))


def run_contour_tfa(config: ExperimentConfig) -> Outcome:
    a = _load(config, 'a')
    if config.coefficients:
        coefficients = np.asarray(_complex_list(config.coefficients, 'coefficients'))
    else:
        _require(config, 'samples_file')
        samples = load_matrix(config.samples_file, 'boundary samples').ravel()
        coefficients = cauchy_green.coefficients_from_samples(samples)
    node_counts = sorted(set(config.nodes))
    if len(node_counts) == 1:
        node_counts = [n for n in (4, 8, 16, 32, 64) if n < node_counts[0]] + node_counts
    study = cauchy_green.contour_node_study(a, coefficients, r=config.r, node_counts=node_counts,
                                            samples=min(config.samples, 20), seed=config.seed)
    T = cauchy_green.disc_contour_T(a, coefficients=coefficients, r=config.r, nodes=node_counts[-1])
    rows = [(p.nodes, p.residual) for p in study]
    return Outcome(inputs={'a': a, 'coefficients': coefficients, 'r': config.r},
                   results={'study': study, 'contour_radius': T.radius},
                   residuals={'final_residual': study[-1].residual},
                   plot=(['nodes', 'residual'], rows))


def run_besov(config: ExperimentConfig) -> Outcome:
    _require(config, 'function')
    source = cauchy_green.compact_function_from_scalar(parse_function_spec(config.function),
                                                       config.steps[0])
    diagnostic = cauchy_green.besov_criterion(source)
    rows = list(zip(diagnostic.h_values.tolist(), diagnostic.deltas.tolist()))
    return Outcome(inputs={'function': config.function, 'step': config.steps[0]},
                   results={'value': diagnostic.value, 'tail_slope': diagnostic.tail_slope,
                            'diverges': diagnostic.diverges},
                   plot=(['h', 'sup_delta_fprime'], rows))


def run_class_membership(config: ExperimentConfig) -> Outcome:
    _require(config, 'function')
    spec = cauchy_green.class_membership(parse_function_spec(config.function), config.alpha,
                                         interval=tuple(config.interval), step=config.sample_step,
                                         seed=config.seed)
    return Outcome(inputs={'function': config.function, 'alpha': config.alpha,
                           'interval': config.interval, 'step': config.sample_step},
                   results=_fields(spec))


def run_verify_report(config: ExperimentConfig) -> Outcome:
    _require(config, 'report')
    outcomes = verify_report(config.report)
    passed = all(o['passed'] for o in outcomes)
    return Outcome(inputs={'report': config.report},
                   results={'checks': outcomes, 'all_passed': passed}, passed=passed)


HANDLERS: Dict[str, Callable[[ExperimentConfig], Outcome]] = {
    'variance': run_variance,
    'decide2x2': run_decide2x2,
    'recover-th1': run_recover_th1,
    'extract-f': run_extract_f,
    'schur-norm': run_schur_norm,
    'kappa': run_kappa,
    'kappa-exact': run_kappa_exact,
    'recover-th42': run_recover_th42,
    'amplify': run_amplify,
    'extend': run_extend,
    'kappa-integral': run_kappa_integral,
    'cg-calc': run_cg_calc,
    'tfa-verify': run_tfa_verify,
    'contour-tfa': run_contour_tfa,
    'besov': run_besov,
    'class-membership': run_class_membership,
    'verify-report': run_verify_report,
}


# ============================================================================
# RUN
# ============================================================================

def _exit_code_for(error: OperatorLabError) -> ExitCode:
    for error_type, code in EXIT_CODES.items():
        if isinstance(error, error_type):
            return code
    return ExitCode.FAILURE


def _emit_error(payload: ErrorPayload) -> None:
    sys.stderr.write(json.dumps(payload, sort_keys=True, default=str) + '\n')


def run(config: ExperimentConfig) -> int:
    """Run one subcommand, write its report and plot data, and return the exit code."""
    handler = HANDLERS.get(config.subcommand)
    if handler is None:
        _emit_error({'error': 'input_error', 'message': f"Unknown subcommand {config.subcommand!r}",
                     'details': {}})
        return ExitCode.INPUT_ERROR.value

    logger.info("=" * 80)
    logger.info(f"Operator lab: {config.subcommand} (seed {config.seed})")
    logger.info("=" * 80)
    start_time = datetime.now()

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always', ConvergenceWarning)
        try:
            outcome = handler(config)
        except OperatorLabError as e:
            code = _exit_code_for(e)
            logger.error(f"{type(e).__name__}: {e.message}")
            _emit_error(e.to_dict())
            return code.value
        except KeyboardInterrupt:
            logger.warning("Operation cancelled by user")
            return ExitCode.FAILURE.value
        except Exception as e:
            logger.error(f"Unexpected failure: {e}", exc_info=True)
            _emit_error({'error': 'internal_error', 'message': str(e), 'details': {}})
            return ExitCode.FAILURE.value

    convergence = [str(w.message) for w in caught if issubclass(w.category, ConvergenceWarning)]
    report = build_report(config.subcommand, config.seed, outcome.inputs, outcome.results,
                          outcome.residuals, convergence, outcome.checks)
    if not config.no_save:
        save_report(report, config.output)
    if outcome.plot is not None and config.csv:
        header, rows = outcome.plot
        save_plot_csv(config.csv, header, rows)
    print_report_summary(report)

    duration = (datetime.now() - start_time).total_seconds()
    logger.info(f"{config.subcommand} completed in {duration:.2f} seconds")

    if convergence and config.strict:
        logger.warning(f"{len(convergence)} convergence warning(s) under --strict")
        return ExitCode.CONVERGENCE.value
    if not outcome.passed:
        return ExitCode.PRECONDITION_ERROR.value
    return ExitCode.OK.value


# ============================================================================
# ARGUMENT PARSING
# ============================================================================

def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument('--seed', type=int, help='Seed for every random draw', metavar='N')
    common.add_argument('--tol', type=float, help='Tolerance override', metavar='TOL')
    common.add_argument('--restarts', type=int, help='Ascent restarts', metavar='N')
    common.add_argument('--samples', type=int, help='Random samples', metavar='N')
    common.add_argument('--output', type=str, metavar='PATH',
                        help='Report path (auto-generated if not provided)')
    common.add_argument('--csv', type=str, metavar='PATH', help='Plot-data CSV path')
    common.add_argument('--config', type=str, metavar='FILE', help='JSON config file')
    common.add_argument('--no-save', dest='no_save', action='store_true',
                        help='Do not save the report, only print the summary')
    common.add_argument('--strict', action='store_true',
                        help='Treat convergence warnings as failures (exit 4)')
    common.add_argument('--verbose', action='store_true', help='Enable DEBUG logging')
    return common


def _matrix_args(parser: argparse.ArgumentParser, *names: str) -> None:
    for name in names:
        parser.add_argument(f'--{name}', type=str, metavar='FILE', help=f'Matrix JSON for {name}')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Operator inequalities lab: variances, Schur multipliers, commutators',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    subparsers = parser.add_subparsers(dest='subcommand', required=True)
    common = _common_parser()

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return subparsers.add_parser(name, parents=[common], help=help_text,
                                     argument_default=argparse.SUPPRESS)

    p = add('variance', 'Variance of a in a vector or density state')
    _matrix_args(p, 'a', 'b', 'xi')

    p = add('decide2x2', 'Decide variance domination for 2x2 matrices')
    _matrix_args(p, 'a', 'b')

    p = add('recover-th1', 'Recover b from equal variances')
    _matrix_args(p, 'a', 'b')

    p = add('extract-f', 'Read off f with b = f(a) on eigenvalues of a')
    _matrix_args(p, 'a', 'b')
    p.add_argument('--eigenvalue', type=str, metavar='Z', help='Single eigenvalue (e.g. 1+2j)')

    p = add('schur-norm', 'Bracket the Schur multiplier norm')
    _matrix_args(p, 'm')
    p.add_argument('--function', '--f', dest='function', type=str, metavar='SPEC')
    p.add_argument('--points', type=str, metavar='Z1,Z2,...')
    p.add_argument('--restricted', action='store_true', help='Norm on zero-diagonal matrices')
    p.add_argument('--duality', action='store_true', help='Also compare with the transpose dual')

    p = add('kappa', 'Lower bound on the commutator constant')
    _matrix_args(p, 'a', 'b')

    p = add('kappa-exact', 'Certified commutator constant for normal a')
    _matrix_args(p, 'a', 'b')

    p = add('recover-th42', 'Classify b when the derivation norms agree')
    _matrix_args(p, 'a', 'b')

    p = add('amplify', 'Commutator ratio for block-diagonal amplifications')
    _matrix_args(p, 'a', 'b')
    p.add_argument('--copies', type=int, metavar='N')
    p.add_argument('--kappa', type=float, metavar='K')

    for name, help_text in (('extend', 'Build and save an extension of f off the real line'),
                            ('kappa-integral', 'Integral of |dbar g| / |zeta - lam|^2 over the plane')):
        p = add(name, help_text)
        p.add_argument('--function', '--f', dest='function', type=str, metavar='SPEC')
        p.add_argument('--h', dest='steps', type=float, nargs='+', metavar='STEP')
        p.add_argument('--delta', type=float)
        p.add_argument('--mollifier-nodes', dest='mollifier_nodes', type=int)
        p.add_argument('--bundle', type=str, metavar='FILE')
        p.add_argument('--alpha', type=float)
        p.add_argument('--radius', type=float, help='Synthetic extension on the disc of this radius')
        p.add_argument('--k-set', dest='k_set', type=str, metavar='K',
                       help='interval:lo,hi or points:z1,... (synthetic extensions)')
        p.add_argument('--levels', type=int)

    for name, help_text in (('cg-calc', 'Quadrature f(a) with a refinement study'),
                            ('tfa-verify', 'Check [f(a), x] = [a, T(x)] = T([a, x])')):
        p = add(name, help_text)
        _matrix_args(p, 'a')
        p.add_argument('--function', '--f', dest='function', type=str, metavar='SPEC')
        p.add_argument('--h', dest='steps', type=float, nargs='+', metavar='STEP')
        p.add_argument('--delta', type=float)
        p.add_argument('--mollifier-nodes', dest='mollifier_nodes', type=int)

    p = add('contour-tfa', 'Intertwining map on a circle contour')
    _matrix_args(p, 'a')
    p.add_argument('--coefficients', type=str, metavar='C0,C1,...')
    p.add_argument('--samples-file', dest='samples_file', type=str, metavar='FILE')
    p.add_argument('--r', type=float)
    p.add_argument('--nodes', type=int, nargs='+')

    p = add('besov', 'Integral of ||f\'(. - h) - f\'||_inf / h')
    p.add_argument('--function', '--f', dest='function', type=str, metavar='SPEC')
    p.add_argument('--h', dest='steps', type=float, nargs='+', metavar='STEP')

    p = add('class-membership', 'Taylor and Holder constants of f on an interval')
    p.add_argument('--function', '--f', dest='function', type=str, metavar='SPEC')
    p.add_argument('--alpha', type=float)
    p.add_argument('--interval', type=float, nargs=2, metavar=('LO', 'HI'))
    p.add_argument('--step', dest='sample_step', type=float)

    p = add('verify-report', 'Re-validate the witnesses and certificates of a report')
    p.add_argument('report', type=str, metavar='REPORT')

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args)
    except OperatorLabError as e:
        _emit_error(e.to_dict())
        return ExitCode.INPUT_ERROR.value

    if config.verbose:
        logger.setLevel('DEBUG')
    return run(config)
