"""
Commutator-norm inequalities ||[b, x]|| <= kappa ||[a, x]||.

- kappa_estimate: seeded ascent lower bound with a witness x, any a, b
- kappa_exact_normal: certified bracket for normal a and b = f(a), reduced
  to the restricted Schur norm of the divided-difference matrix of f
- amplified_check: the same ratio for n-fold block-diagonal amplifications
- equality_structure_recover: what b can be when kappa(a, b) = kappa(b, a) = 1
- schur_function_from_commutator: the divided-difference matrix with its
  full-norm bracket, checked against twice the optimal kappa
"""

from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg

from config import (AMPLIFY_MAX_DIM, DEFAULT_RESTARTS, DEFAULT_SAMPLES, DEFAULT_SEED,
                    DEFAULT_TOLERANCE, EQUALITY_RESTARTS, EQUALITY_TOLERANCE,
                    SCHUR_BRACKET_TOLERANCE)
from utils import logger

from .ascent import RatioObjective, commutator_map, maximize_ratio
from .errors import (CommuteError, DegenerateError, FunctionError, InputError, NormalityError,
                     PreconditionError)
from .linalg_core import (as_matrix, eig_normal, is_scalar_matrix, random_gaussian, same_shape,
                          spawn_rngs, spectral_norm)
from .models import (AmplifiedCheck, EqualityCase, EqualityVerdict, InclusionCheck,
                     KappaBracket, KappaEstimate, KappaMethod, SchurFunctionReport)
from .schur import divided_difference_from_values, restricted_offdiag_bracket, schur_norm_bracket

# Denominator floor: ||[a, x]|| >= EXCLUSION * ||a|| * ||x||
EXCLUSION = 1e-8


# ============================================================================
# KAPPA ESTIMATION
# ============================================================================

def _matrix_unit_starts(a: np.ndarray, limit: int) -> List[np.ndarray]:
    """Matrix units q_i q_j^H in a Schur basis of a."""
    n = a.shape[0]
    _, q = scipy.linalg.schur(a, output='complex')
    starts = []
    for i in range(n):
        for j in range(n):
            if i != j and len(starts) < limit:
                starts.append(np.outer(q[:, i], q[:, j].conj()))
    return starts


def _ratio_starts(a: np.ndarray, seed: int, restarts: int) -> List[np.ndarray]:
    n = a.shape[0]
    starts = [random_gaussian((n, n), rng) for rng in spawn_rngs(seed, restarts)]
    starts.extend(_matrix_unit_starts(a, limit=n * (n - 1) if n <= 6 else 2 * n))
    return starts


def kappa_estimate(a, b, seed: int = DEFAULT_SEED, restarts: int = DEFAULT_RESTARTS,
                   tol: float = DEFAULT_TOLERANCE) -> KappaEstimate:
    """
    Lower bound on sup ||[b, x]|| / ||[a, x]|| with a witness.

    Raises:
        DegenerateError: a is scalar, so every [a, x] vanishes
    """
    a = as_matrix(a, 'a', square=True)
    b = as_matrix(b, 'b', square=True)
    same_shape(a, b)
    if is_scalar_matrix(a, tol):
        raise DegenerateError("a is a scalar matrix; [a, x] = 0 for every x",
                              {'norm_a': spectral_norm(a)})

    objective = RatioObjective(commutator_map(b), commutator_map(a),
                               floor=EXCLUSION * spectral_norm(a))
    starts = _ratio_starts(a, seed, restarts)
    result = maximize_ratio(objective, starts)
    logger.debug(f"kappa estimate {result.value:.10f} from {len(starts)} starts")
    return KappaEstimate(lower=float(result.value), witness=result.witness,
                         method=KappaMethod.ASCENT, samples_used=len(starts))


# ============================================================================
# EXACT CONSTANT FOR NORMAL a
# ============================================================================

def _eigen_groups(eigenvalues: np.ndarray, threshold: float) -> np.ndarray:
    """Group label per eigenvalue; eigenvalues within threshold share a label."""
    labels = -np.ones(eigenvalues.size, dtype=int)
    next_label = 0
    for i in range(eigenvalues.size):
        if labels[i] >= 0:
            continue
        stack = [i]
        labels[i] = next_label
        while stack:
            k = stack.pop()
            close = np.nonzero((np.abs(eigenvalues - eigenvalues[k]) <= threshold) & (labels < 0))[0]
            labels[close] = next_label
            stack.extend(close.tolist())
        next_label += 1
    return labels


def kappa_exact_normal(a, b, tol: float = DEFAULT_TOLERANCE,
                       bracket_tol: float = SCHUR_BRACKET_TOLERANCE,
                       seed: int = DEFAULT_SEED, restarts: int = DEFAULT_RESTARTS) -> KappaBracket:
    """
    Optimal kappa for normal a and b commuting with a.

    In an eigenbasis of a, [a, x] has entries (l_i - l_j) x_ij and [b, x]
    has entries (f_i - f_j) x_ij, so kappa is the norm of the
    divided-difference matrix on matrices vanishing inside eigenspaces.

    Raises:
        NormalityError: a is not normal
        CommuteError: ab - ba is not zero within tol
        FunctionError: b is not scalar on an eigenspace of a
    """
    a = as_matrix(a, 'a', square=True)
    b = as_matrix(b, 'b', square=True)
    same_shape(a, b)
    decomposition = eig_normal(a, tol)
    norm_a, norm_b = spectral_norm(a), spectral_norm(b)

    commutator_norm = spectral_norm(a @ b - b @ a)
    if commutator_norm > tol * max(1.0, norm_a * norm_b):
        raise CommuteError("a and b do not commute", {'commutator_norm': commutator_norm})

    basis = decomposition.basis
    eigenvalues = decomposition.eigenvalues
    rotated = basis.conj().T @ b @ basis
    labels = _eigen_groups(eigenvalues, tol * max(1.0, norm_a))

    n = eigenvalues.size
    points = np.empty(n, dtype=complex)
    values = np.empty(n, dtype=complex)
    for label in np.unique(labels):
        members = np.nonzero(labels == label)[0]
        block = rotated[np.ix_(members, members)]
        value = complex(np.trace(block) / members.size)
        spread = spectral_norm(block - value * np.eye(members.size))
        if spread > 10 * tol * max(1.0, norm_b):
            raise FunctionError("b is not a function of a: inconsistent on a repeated eigenvalue",
                                {'spread': spread, 'multiplicity': int(members.size)})
        points[members] = eigenvalues[members[0]]
        values[members] = value

    schur = divided_difference_from_values(points, values)
    pattern = labels[:, None] != labels[None, :]
    if not np.any(pattern):
        raise DegenerateError("a is a scalar matrix; [a, x] = 0 for every x")

    bracket = restricted_offdiag_bracket(schur.entries, seed=seed, restarts=restarts,
                                         tol=bracket_tol, pattern=pattern)

    differences = points[:, None] - points[None, :]
    coordinates = np.where(pattern, bracket.witness / np.where(pattern, differences, 1.0), 0.0)
    witness = basis @ coordinates @ basis.conj().T
    return KappaBracket(lower=bracket.lower, upper=bracket.upper, schur=schur, witness=witness,
                        certificate=bracket.certificate, pattern=pattern)


# ============================================================================
# AMPLIFICATION
# ============================================================================

def amplified_check(a, b, copies: int, seed: int = DEFAULT_SEED, samples: int = DEFAULT_SAMPLES,
                    kappa: Optional[float] = None, slack: float = 1e-6) -> AmplifiedCheck:
    """
    Worst ||[b_n, x]|| / ||[a_n, x]|| for block-diagonal amplifications a_n = I_n (x) a.

    Random block matrices are sampled and the best few are refined by ascent.

    Raises:
        InputError: copies * dim exceeds the amplification cap
    """
    a = as_matrix(a, 'a', square=True)
    b = as_matrix(b, 'b', square=True)
    same_shape(a, b)
    size = copies * a.shape[0]
    if copies < 1 or size > AMPLIFY_MAX_DIM:
        raise InputError(f"Amplified dimension {size} outside 1..{AMPLIFY_MAX_DIM}")

    identity = np.eye(copies, dtype=complex)
    a_n, b_n = np.kron(identity, a), np.kron(identity, b)
    objective = RatioObjective(commutator_map(b_n), commutator_map(a_n),
                               floor=EXCLUSION * spectral_norm(a))

    scored = []
    for rng in spawn_rngs(seed, samples):
        x = random_gaussian((size, size), rng)
        scored.append((objective.exact(x), x))
    scored.sort(key=lambda item: item[0], reverse=True)
    starts = [x for value, x in scored[:3] if np.isfinite(value)]
    starts.extend(np.kron(identity, unit) for unit in _matrix_unit_starts(a, limit=2 * a.shape[0]))

    result = maximize_ratio(objective, starts, max_iter=50, polish=False)
    worst = max(result.value, scored[0][0])
    within = None if kappa is None else worst <= kappa + slack
    if within is False:
        logger.warning(f"Amplified ratio {worst:.6f} exceeds kappa {kappa:.6f}")
    return AmplifiedCheck(worst_ratio=float(worst), witness=result.witness, copies=copies,
                          kappa=kappa, within_kappa=within)


# ============================================================================
# NORM-EQUALITY STRUCTURE
# ============================================================================

def _circle_center(points: np.ndarray) -> complex:
    """Least-squares circle through points; midpoint when at most two are distinct."""
    distinct = []
    for p in points:
        if all(abs(p - d) > 1e-9 * max(1.0, abs(p)) for d in distinct):
            distinct.append(p)
    if len(distinct) <= 2:
        return complex(np.mean(distinct))
    x, y = points.real, points.imag
    design = np.column_stack([2 * x, 2 * y, np.ones_like(x)])
    solution, *_ = np.linalg.lstsq(design, np.abs(points) ** 2, rcond=None)
    return complex(solution[0], solution[1])


def _fit_on(target: np.ndarray, basis: np.ndarray) -> Tuple[complex, complex]:
    n = target.shape[0]
    design = np.column_stack([basis.ravel(), np.eye(n).ravel()])
    coefficients, *_ = np.linalg.lstsq(design, target.ravel(), rcond=None)
    return complex(coefficients[0]), complex(coefficients[1])


def equality_structure_recover(a, b, seed: int = DEFAULT_SEED, tol: float = EQUALITY_TOLERANCE,
                               restarts: int = EQUALITY_RESTARTS, fit_tol: float = 1e-6
                               ) -> EqualityVerdict:
    """
    Classify b when ||[a, x]|| = ||[b, x]|| for all x (tested as both kappas ~ 1).

    Case (i): b = sigma a + lambda with |sigma| = 1.
    Case (ii): a = alpha u^H + lambda, b = beta u + mu, u unitary, |beta| = |alpha|.

    Raises:
        PreconditionError: a kappa estimate is not within tol of 1
    """
    a = as_matrix(a, 'a', square=True)
    b = as_matrix(b, 'b', square=True)
    same_shape(a, b)
    n = a.shape[0]

    kappa_ab = kappa_estimate(a, b, seed=seed, restarts=restarts).lower
    kappa_ba = kappa_estimate(b, a, seed=seed + 1, restarts=restarts).lower
    logger.info(f"kappa(a,b) = {kappa_ab:.6f}, kappa(b,a) = {kappa_ba:.6f}")
    if abs(kappa_ab - 1.0) > tol or abs(kappa_ba - 1.0) > tol:
        raise PreconditionError("Derivation norms are not equal",
                                {'kappa_ab': kappa_ab, 'kappa_ba': kappa_ba, 'tolerance': tol})

    norm_b = spectral_norm(b)
    identity = np.eye(n, dtype=complex)

    raw, _ = _fit_on(b, a)
    sigma = raw / abs(raw) if abs(raw) > 0 else 1.0 + 0j
    shift = complex(np.trace(b - sigma * a) / n)
    residual = spectral_norm(b - sigma * a - shift * identity)
    if residual <= fit_tol * max(1.0, norm_b):
        return EqualityVerdict(case=EqualityCase.SCALAR_AFFINE, kappa_ab=kappa_ab,
                               kappa_ba=kappa_ba, residual=residual, sigma=sigma, shift=shift)

    try:
        decomposition = eig_normal(a, fit_tol)
    except NormalityError:
        logger.info("a is not normal; the unitary case cannot apply")
        return EqualityVerdict(case=EqualityCase.INCONCLUSIVE, kappa_ab=kappa_ab,
                               kappa_ba=kappa_ba, residual=residual)

    eigenvalues = decomposition.eigenvalues
    center = _circle_center(eigenvalues)
    radii = np.abs(eigenvalues - center)
    alpha = float(np.sqrt(np.mean(radii ** 2)))
    if alpha == 0.0 or np.max(np.abs(radii - alpha)) > fit_tol * max(1.0, alpha):
        return EqualityVerdict(case=EqualityCase.INCONCLUSIVE, kappa_ab=kappa_ab,
                               kappa_ba=kappa_ba, residual=residual)

    unitary = ((a - center * identity) / alpha).conj().T
    unitarity = spectral_norm(unitary.conj().T @ unitary - identity)
    beta_raw, _ = _fit_on(b, unitary)
    if abs(beta_raw) == 0.0:
        return EqualityVerdict(case=EqualityCase.INCONCLUSIVE, kappa_ab=kappa_ab,
                               kappa_ba=kappa_ba, residual=residual)
    beta = alpha * beta_raw / abs(beta_raw)
    mu = complex(np.trace(b - beta * unitary) / n)
    unitary_residual = max(spectral_norm(b - beta * unitary - mu * identity), unitarity)

    if (unitary_residual <= fit_tol * max(1.0, norm_b)
            and abs(abs(beta_raw) - alpha) <= fit_tol * max(1.0, alpha)):
        return EqualityVerdict(case=EqualityCase.UNITARY_PAIR, kappa_ab=kappa_ab,
                               kappa_ba=kappa_ba, residual=unitary_residual, shift=center,
                               alpha=complex(alpha), beta=complex(beta), mu=mu, unitary=unitary)

    return EqualityVerdict(case=EqualityCase.INCONCLUSIVE, kappa_ab=kappa_ab, kappa_ba=kappa_ba,
                           residual=min(residual, unitary_residual))


# ============================================================================
# SCHUR FUNCTIONS FROM COMMUTATOR BOUNDS
# ============================================================================

def schur_function_from_commutator(a, b, tol: float = SCHUR_BRACKET_TOLERANCE,
                                   seed: int = DEFAULT_SEED,
                                   restarts: int = DEFAULT_RESTARTS) -> SchurFunctionReport:
    """
    Divided-difference matrix of f (b = f(a)) with its full Schur-norm bracket.

    The full norm is at most twice the optimal kappa: removing the diagonal
    of X at most doubles its norm.
    """
    kappa = kappa_exact_normal(a, b, bracket_tol=tol, seed=seed, restarts=restarts)
    full = schur_norm_bracket(kappa.schur.entries, seed=seed, restarts=restarts, tol=tol)
    within = full.upper <= 2 * kappa.upper + tol
    ratio = full.upper / kappa.lower if kappa.lower > 0 else 0.0
    if not within:
        logger.warning(f"Full Schur norm {full.upper:.6f} exceeds 2*kappa = {2 * kappa.upper:.6f}")
    return SchurFunctionReport(schur=kappa.schur, full_bracket=full, kappa=kappa,
                               empirical_ratio=float(ratio), within_factor_two=within)


def commutant_inclusion_check(a, b, kappa: float, epsilon: float = 1e-3,
                              seed: int = DEFAULT_SEED, samples: int = DEFAULT_SAMPLES,
                              tol: float = 1e-9) -> InclusionCheck:
    """
    Probe ||[b, x]|| <= kappa ||[a, x]|| on x close to the commutant of a.

    Candidates combine the smallest right singular vectors of the derivation
    x -> [a, x] with a perturbation of relative size epsilon. worst_slack is
    max (||[b, x]|| - kappa ||[a, x]||) / ||x||; it stays below tol when the
    inequality holds.
    """
    a = as_matrix(a, 'a', square=True)
    b = as_matrix(b, 'b', square=True)
    same_shape(a, b)
    n = a.shape[0]
    if n > 16:
        raise InputError("commutant_inclusion_check supports n <= 16")

    identity = np.eye(n, dtype=complex)
    derivation = np.kron(a, identity) - np.kron(identity, a.T)
    _, singular, vh = np.linalg.svd(derivation)
    # rows of vh are conjugated right singular vectors
    right = vh.conj()
    near = right[singular <= max(epsilon * spectral_norm(a), singular[-1])]
    near = near if near.shape[0] > 0 else right[-1:]

    worst = -np.inf
    witness = identity
    smallest = np.inf
    for rng in spawn_rngs(seed, samples):
        coefficients = random_gaussian((near.shape[0],), rng)
        x = (coefficients @ near).reshape(n, n)
        x = x / spectral_norm(x) + epsilon * random_gaussian((n, n), rng) / n
        norm_x = spectral_norm(x)
        commutator_a = spectral_norm(a @ x - x @ a)
        slack = (spectral_norm(b @ x - x @ b) - kappa * commutator_a) / norm_x
        smallest = min(smallest, commutator_a / norm_x)
        if slack > worst:
            worst, witness = slack, x
    if worst > tol:
        logger.warning(f"Commutant inclusion slack {worst:.3e} exceeds {tol}")
    return InclusionCheck(worst_slack=float(worst), witness=witness, checked=samples,
                          smallest_commutator=float(smallest))
