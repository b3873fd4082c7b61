"""
Operator variance and the procedures built on it.

D_xi(a) = ||a xi||^2 - |<a xi, xi>|^2 for unit xi, the squared distance from
a xi to the line through xi. This module evaluates it in vector and density
states, checks its identities, decides 2x2 variance domination, reads off
the function f with b = f(a), and recovers b from a when variances agree.

Key relations used throughout:
- D_xi(alpha a + beta) = |alpha|^2 D_xi(a)
- D_xi(a) = 0 exactly when xi is an eigenvector of a
- D_xi(a^H) = D_xi(a) for all xi exactly when a is normal
"""

from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from config import DEFAULT_RESTARTS, DEFAULT_SAMPLES, DEFAULT_SEED, DEFAULT_TOLERANCE
from utils import logger

from .errors import (FunctionError, InputError, LipschitzError, PreconditionError,
                     SpectrumError)
from .linalg_core import (as_matrix, as_vector, eig_normal, evaluate_scalar_function,
                          is_scalar_matrix, normality_defect, random_unit_vector,
                          same_shape, spawn_rngs, spectral_norm)
from .models import (DecisionKind, ExtractedValue, RankOneCheck, StateSpec,
                     StructureCase, StructureVerdict, TwoByTwoDecision, VarianceGap,
                     VarianceReport)

# Points of the (t, phi) scan used for 2x2 witness searches
GRID_T_POINTS = 33
GRID_PHI_POINTS = 64


# ============================================================================
# VARIANCE IN A STATE
# ============================================================================

def variance(a, xi) -> VarianceReport:
    """
    Variance of a at the vector state of xi (xi need not be normalized).

    Raises:
        InputError: xi is zero or has the wrong dimension
    """
    a = as_matrix(a, 'a', square=True)
    v = as_vector(xi, 'xi', dim=a.shape[0])
    norm_sq = float(np.vdot(v, v).real)
    if norm_sq == 0.0:
        raise InputError("xi must be nonzero")

    unit = v / np.sqrt(norm_sq)
    image = a @ unit
    mean = complex(np.vdot(unit, image))
    orthogonal = image - mean * unit
    return VarianceReport(
        variance=float(np.vdot(orthogonal, orthogonal).real),
        mean=mean,
        second_moment=float(np.vdot(image, image).real),
    )


def _variance_value(a: np.ndarray, unit: np.ndarray) -> float:
    image = a @ unit
    orthogonal = image - np.vdot(unit, image) * unit
    return float(np.vdot(orthogonal, orthogonal).real)


def validate_density(rho: np.ndarray, atol: float = 1e-10) -> np.ndarray:
    """
    Raises:
        InputError: rho not Hermitian, not PSD, or trace not 1 within atol
    """
    rho = as_matrix(rho, 'density', square=True)
    if spectral_norm(rho - rho.conj().T) > atol:
        raise InputError("Density matrix is not Hermitian")
    smallest = float(np.min(scipy.linalg.eigvalsh((rho + rho.conj().T) / 2)))
    if smallest < -atol:
        raise InputError("Density matrix is not positive semidefinite",
                         {'min_eigenvalue': smallest})
    trace = complex(np.trace(rho))
    if abs(trace - 1.0) > atol:
        raise InputError("Density matrix must have unit trace", {'trace': [trace.real, trace.imag]})
    return rho


def variance_state(a, state) -> VarianceReport:
    """tr(rho a^H a) - |tr(rho a)|^2, or the vector formula for vector states."""
    a = as_matrix(a, 'a', square=True)
    if not isinstance(state, StateSpec):
        state = StateSpec.from_array(state)
    if state.vector is not None:
        return variance(a, state.vector)

    rho = validate_density(state.density)
    same_shape(a, rho, 'a, density')
    mean = complex(np.trace(rho @ a))
    second = float(np.trace(rho @ a.conj().T @ a).real)
    return VarianceReport(variance=max(second - abs(mean) ** 2, 0.0),
                          mean=mean, second_moment=second)


def rank_one_commutator_check(a, xi) -> RankOneCheck:
    """
    ||[a, xi xi^H]||^2 against D_xi(a) and D_xi(a^H).

    [a, xi xi^H] = r xi^H - xi s^H with r, s the components of a xi and
    a^H xi orthogonal to xi, so its squared norm is max(D_xi(a), D_xi(a^H)).
    """
    a = as_matrix(a, 'a', square=True)
    v = as_vector(xi, 'xi', dim=a.shape[0])
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > 1e-8:
        raise InputError(f"xi must be a unit vector, norm is {norm}")
    v = v / norm

    projection = np.outer(v, v.conj())
    lhs = spectral_norm(a @ projection - projection @ a) ** 2
    return RankOneCheck(
        lhs=lhs,
        rhs=_variance_value(a, v),
        adjoint_rhs=_variance_value(a.conj().T, v),
    )


def perturbation_gap(a, b, state) -> Tuple[float, float]:
    """(|D(b) - D(a)|, 2 ||b - a|| (||a|| + ||b||)); the first never exceeds the second."""
    a = as_matrix(a, 'a', square=True)
    b = as_matrix(b, 'b', square=True)
    same_shape(a, b)
    gap = abs(variance_state(b, state).variance - variance_state(a, state).variance)
    bound = 2 * spectral_norm(b - a) * (spectral_norm(a) + spectral_norm(b))
    return gap, bound


def mixed_state_domination(a, b, density) -> float:
    """D_rho(b) / D_rho(a) for a density state; 0/0 counts as 0."""
    state = StateSpec(density=np.asarray(density, dtype=complex))
    var_a = variance_state(a, state).variance
    var_b = variance_state(b, state).variance
    scale = max(spectral_norm(as_matrix(a)), spectral_norm(as_matrix(b)), 1.0) ** 2
    if var_a <= 1e-14 * scale:
        return 0.0 if var_b <= 1e-12 * scale else float('inf')
    return var_b / var_a


# ============================================================================
# UNIT-VECTOR WITNESS SEARCH
# ============================================================================

def _variance_gradient(a: np.ndarray, a_h: np.ndarray, unit: np.ndarray) -> np.ndarray:
    """Wirtinger gradient of D_xi(a): a^H a xi - conj(m) a xi - m a^H xi."""
    image = a @ unit
    mean = np.vdot(unit, image)
    return a_h @ image - np.conj(mean) * image - mean * (a_h @ unit)


def _ascend_gap(a: np.ndarray, b: np.ndarray, start: np.ndarray,
                max_iter: int = 300) -> Tuple[float, np.ndarray]:
    """Projected gradient ascent of D_xi(b) - D_xi(a) on the unit sphere."""
    a_h, b_h = a.conj().T, b.conj().T
    x = start / np.linalg.norm(start)
    value = _variance_value(b, x) - _variance_value(a, x)
    step = 0.5 / max(spectral_norm(a) ** 2, spectral_norm(b) ** 2, 1e-300)

    for _ in range(max_iter):
        gradient = _variance_gradient(b, b_h, x) - _variance_gradient(a, a_h, x)
        gradient -= np.vdot(x, gradient).real * x
        if np.linalg.norm(gradient) <= 1e-14:
            break

        accepted = False
        while step > 1e-16:
            candidate = x + step * gradient
            candidate /= np.linalg.norm(candidate)
            candidate_value = _variance_value(b, candidate) - _variance_value(a, candidate)
            if candidate_value > value:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break

        improvement = candidate_value - value
        x, value = candidate, candidate_value
        step *= 1.5
        if improvement <= 1e-15 * max(abs(value), 1.0):
            break

    return value, x


def _two_dimensional_grid(basis: np.ndarray) -> np.ndarray:
    """Unit vectors basis @ (cos t, e^{i phi} sin t) over a (t, phi) grid."""
    t = np.linspace(0.0, np.pi / 2, GRID_T_POINTS)
    phi = np.linspace(0.0, 2 * np.pi, GRID_PHI_POINTS, endpoint=False)
    tt, pp = np.meshgrid(t, phi, indexing='ij')
    coords = np.stack([np.cos(tt).ravel(), (np.exp(1j * pp) * np.sin(tt)).ravel()], axis=1)
    return coords @ basis.T


def _eigenvector_starts(a: np.ndarray) -> List[np.ndarray]:
    _, vectors = np.linalg.eig(a)
    n = a.shape[0]
    starts = [vectors[:, k] for k in range(n)]
    if n <= 8:
        for i in range(n):
            for j in range(i + 1, n):
                starts.append((vectors[:, i] + vectors[:, j]) / np.sqrt(2))
                starts.append((vectors[:, i] + 1j * vectors[:, j]) / np.sqrt(2))
    return starts


def maximize_variance_gap(a, b, seed: int = DEFAULT_SEED, restarts: int = DEFAULT_RESTARTS,
                          starts: Optional[Iterable[np.ndarray]] = None) -> VarianceGap:
    """
    Maximize D_xi(b) - D_xi(a) over unit xi.

    Starts: seeded random vectors, eigenvectors of a and their mixtures, any
    caller-supplied vectors, and for n = 2 the best point of a (t, phi) scan.
    """
    a = as_matrix(a, 'a', square=True)
    b = as_matrix(b, 'b', square=True)
    same_shape(a, b)
    n = a.shape[0]

    candidates = [random_unit_vector(n, rng) for rng in spawn_rngs(seed, restarts)]
    candidates.extend(_eigenvector_starts(a))
    if starts is not None:
        candidates.extend(np.asarray(s, dtype=complex) for s in starts)
    if n == 2:
        grid = _two_dimensional_grid(np.eye(2, dtype=complex))
        gaps = [_variance_value(b, v) - _variance_value(a, v) for v in grid]
        candidates.append(grid[int(np.argmax(gaps))])

    best = VarianceGap(gap=-np.inf, witness=candidates[0])
    for start in candidates:
        if np.linalg.norm(start) == 0.0:
            continue
        value, witness = _ascend_gap(a, b, start)
        if value > best.gap:
            best = VarianceGap(gap=value, witness=witness)
    return best


def adjoint_variance_gap(a, samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED) -> VarianceGap:
    """max over xi of |D_xi(a^H) - D_xi(a)|; zero exactly for normal a."""
    a = as_matrix(a, 'a', square=True)
    a_h = a.conj().T
    restarts = max(1, min(samples, DEFAULT_RESTARTS))
    forward = maximize_variance_gap(a, a_h, seed=seed, restarts=restarts)
    backward = maximize_variance_gap(a_h, a, seed=seed + 1, restarts=restarts)
    return forward if forward.gap >= backward.gap else backward


# ============================================================================
# 2x2 DECISION
# ============================================================================

def two_by_two_decide(a, b, tol: float = DEFAULT_TOLERANCE, seed: int = DEFAULT_SEED
                      ) -> TwoByTwoDecision:
    """
    Decide whether D_xi(b) <= D_xi(a) for all xi, for 2x2 a and b.

    In a Schur basis (q1, q2) of a, with B = Q^H b Q:
    - if B[1,0] != 0 then q1 is an eigenvector of a but not of b: witness.
    - otherwise D_v(a) - D_v(b) = |mu|^2 v^H M v for v = (lambda, mu), with
      M built from (t11 - t22, t12) and (B00 - B11, B01). Domination holds
      iff M is positive semidefinite, and then b = theta a + tau.

    Returns an Affine decision (theta, tau, residual) or a Violation with a
    unit witness xi and gap D_xi(b) - D_xi(a).
    """
    a = as_matrix(a, 'a', square=True)
    b = as_matrix(b, 'b', square=True)
    same_shape(a, b)
    if a.shape != (2, 2):
        raise InputError("two_by_two_decide needs 2x2 matrices", {'shape': list(a.shape)})

    norm_a, norm_b = spectral_norm(a), spectral_norm(b)
    absolute_tol = tol * max(1.0, norm_a ** 2, norm_b ** 2)

    triangular, q = scipy.linalg.schur(a, output='complex')
    rotated = q.conj().T @ b @ q

    leak = abs(rotated[1, 0]) ** 2
    if leak > absolute_tol:
        witness = q[:, 0]
        gap = _variance_value(b, witness) - _variance_value(a, witness)
        logger.debug(f"Eigenvector of a is not an eigenvector of b (leak {leak:.3e})")
        return TwoByTwoDecision(kind=DecisionKind.VIOLATION, witness=witness, gap=gap)

    alpha1 = triangular[0, 0] - triangular[1, 1]
    gamma = triangular[0, 1]
    beta1 = rotated[0, 0] - rotated[1, 1]
    delta = rotated[0, 1]
    off_diagonal = np.conj(alpha1) * gamma - np.conj(beta1) * delta
    form = np.array([
        [abs(alpha1) ** 2 - abs(beta1) ** 2, off_diagonal],
        [np.conj(off_diagonal), abs(gamma) ** 2 - abs(delta) ** 2],
    ])
    min_eigenvalue = float(np.min(scipy.linalg.eigvalsh(form)))

    if min_eigenvalue >= -absolute_tol:
        if abs(alpha1) >= abs(gamma) and abs(alpha1) > 0:
            theta = beta1 / alpha1
        elif abs(gamma) > 0:
            theta = delta / gamma
        else:
            theta = 0.0
        theta = complex(theta)
        tau = complex(np.trace(b - theta * a) / 2)
        residual = spectral_norm(b - theta * a - tau * np.eye(2))
        if residual <= tol * max(1.0, norm_b) and abs(theta) <= 1 + tol:
            return TwoByTwoDecision(kind=DecisionKind.AFFINE, theta=theta, tau=tau,
                                    residual=residual, form_min_eigenvalue=min_eigenvalue)
        logger.debug(f"Form is PSD but affine fit failed (residual {residual:.3e}, |theta| {abs(theta):.6f})")

    seeds = [q[:, 0], q[:, 1]]
    _, vectors = np.linalg.eigh(form)
    seeds.append(q @ vectors[:, 0])
    grid = _two_dimensional_grid(q)
    gaps = np.array([_variance_value(b, v) - _variance_value(a, v) for v in grid])
    seeds.extend(grid[np.argsort(gaps)[-3:]])

    best = maximize_variance_gap(a, b, seed=seed, restarts=4, starts=seeds)
    if best.gap > absolute_tol:
        return TwoByTwoDecision(kind=DecisionKind.VIOLATION, witness=best.witness, gap=best.gap,
                                form_min_eigenvalue=min_eigenvalue)

    theta = complex(beta1 / alpha1) if abs(alpha1) > 0 else (complex(delta / gamma) if abs(gamma) > 0 else 0j)
    tau = complex(np.trace(b - theta * a) / 2)
    residual = spectral_norm(b - theta * a - tau * np.eye(2))
    logger.warning(f"2x2 decision is borderline: no witness above {absolute_tol:.3e}, "
                   f"affine residual {residual:.3e}")
    return TwoByTwoDecision(kind=DecisionKind.AFFINE, theta=theta, tau=tau, residual=residual,
                            form_min_eigenvalue=min_eigenvalue)


# ============================================================================
# FUNCTION EXTRACTION
# ============================================================================

def _eigenspace(a: np.ndarray, alpha: complex, threshold: float) -> np.ndarray:
    n = a.shape[0]
    _, singular, vh = np.linalg.svd(a - alpha * np.eye(n))
    count = max(1, int(np.sum(singular <= threshold)))
    return vh[n - count:].conj().T


def extract_function(a, b, alpha: complex, tol: float = DEFAULT_TOLERANCE) -> ExtractedValue:
    """
    f(alpha) = <b xi, xi> for unit eigenvectors xi of a at alpha.

    Raises:
        SpectrumError: alpha is not an eigenvalue of a within tol
        PreconditionError: D_xi(b) > D_xi(a) on an eigenvector
        FunctionError: <b xi, xi> is not constant on the eigenspace
    """
    a = as_matrix(a, 'a', square=True)
    b = as_matrix(b, 'b', square=True)
    same_shape(a, b)
    alpha = complex(alpha)

    scale = max(1.0, spectral_norm(a))
    distance = float(np.min(np.abs(np.linalg.eigvals(a) - alpha)))
    if distance > tol * scale:
        raise SpectrumError(f"{alpha} is not an eigenvalue of a",
                            {'alpha': [alpha.real, alpha.imag], 'distance': distance})

    basis = _eigenspace(a, alpha, max(tol * scale, distance * 10))
    scale_b = max(1.0, spectral_norm(b))
    for k in range(basis.shape[1]):
        excess = _variance_value(b, basis[:, k]) - _variance_value(a, basis[:, k])
        if excess > tol * scale_b ** 2:
            raise PreconditionError("Variance domination fails on an eigenvector of a",
                                    {'excess': excess, 'alpha': [alpha.real, alpha.imag]})

    compressed = basis.conj().T @ b @ basis
    multiplicity = basis.shape[1]
    value = complex(np.trace(compressed) / multiplicity)
    spread = spectral_norm(compressed - value * np.eye(multiplicity))
    if spread > tol * scale_b:
        raise FunctionError("b is not scalar on the eigenspace of a",
                            {'spread': spread, 'alpha': [alpha.real, alpha.imag]})
    return ExtractedValue(value=value, spread=spread, multiplicity=multiplicity)


def distinct_eigenvalues(a: np.ndarray, tol: float = DEFAULT_TOLERANCE) -> np.ndarray:
    """Eigenvalues of a with clusters within tol * max(1, ||a||) merged, sorted by (re, im)."""
    eigenvalues = np.linalg.eigvals(a)
    eigenvalues = eigenvalues[np.lexsort((eigenvalues.imag, eigenvalues.real))]
    threshold = tol * max(1.0, spectral_norm(a))
    distinct: List[complex] = []
    for value in eigenvalues:
        if all(abs(value - d) > threshold for d in distinct):
            distinct.append(complex(value))
    return np.array(distinct, dtype=complex)


def extraction_table(a, b, tol: float = DEFAULT_TOLERANCE) -> List[Tuple[complex, ExtractedValue]]:
    a = as_matrix(a, 'a', square=True)
    return [(alpha, extract_function(a, b, alpha, tol)) for alpha in distinct_eigenvalues(a, tol)]


def extracted_lipschitz_constant(table: Sequence[Tuple[complex, ExtractedValue]]
                                 ) -> Tuple[float, Optional[Tuple[complex, complex]]]:
    """Largest |f(beta) - f(alpha)| / |beta - alpha| over the table and its binding pair."""
    worst, pair = 0.0, None
    for i in range(len(table)):
        for j in range(i + 1, len(table)):
            (x, fx), (y, fy) = table[i], table[j]
            ratio = abs(fy.value - fx.value) / abs(y - x)
            if ratio > worst:
                worst, pair = ratio, (x, y)
    return worst, pair


# ============================================================================
# STRUCTURE RECOVERY
# ============================================================================

def _unimodular_fit(target: np.ndarray, basis: np.ndarray) -> Tuple[complex, complex, float, float]:
    """
    Fit target ~ alpha basis + beta I, then rescale alpha to modulus 1.

    Returns (alpha, beta, residual, raw_modulus).
    """
    n = target.shape[0]
    design = np.column_stack([basis.ravel(), np.eye(n).ravel()])
    coefficients, *_ = np.linalg.lstsq(design, target.ravel(), rcond=None)
    raw = complex(coefficients[0])
    modulus = abs(raw)
    alpha = raw / modulus if modulus > 0 else 1.0 + 0j
    beta = complex(np.trace(target - alpha * basis) / n)
    residual = spectral_norm(target - alpha * basis - beta * np.eye(n))
    return alpha, beta, residual, modulus


def variance_equal_recover(a, b, samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED,
                           tol: float = DEFAULT_TOLERANCE) -> StructureVerdict:
    """
    Recover b = alpha a + beta or b = alpha a^H + beta (a normal) from equal variances.

    Variance equality is checked on seeded samples and then attacked by
    ascent in both directions; any gap above tolerance yields Indeterminate
    with the witness.
    """
    a = as_matrix(a, 'a', square=True)
    b = as_matrix(b, 'b', square=True)
    same_shape(a, b)
    n = a.shape[0]
    norm_b = spectral_norm(b)
    scale = max(1.0, spectral_norm(a), norm_b) ** 2
    threshold = tol * scale

    worst_gap, worst_vector = 0.0, None
    for rng in spawn_rngs(seed, samples):
        xi = random_unit_vector(n, rng)
        gap = abs(_variance_value(b, xi) - _variance_value(a, xi))
        if worst_vector is None or gap > worst_gap:
            worst_gap, worst_vector = gap, xi

    if worst_gap <= threshold:
        for first, second, offset in ((a, b, 1), (b, a, 2)):
            found = maximize_variance_gap(first, second, seed=seed + offset, restarts=4,
                                          starts=[worst_vector])
            if found.gap > worst_gap:
                worst_gap, worst_vector = found.gap, found.witness

    if worst_gap > threshold:
        logger.info(f"Variances differ by {worst_gap:.3e} at the witness")
        return StructureVerdict(case=StructureCase.INDETERMINATE, alpha=None, beta=None,
                                residual=float('inf'), witness=worst_vector,
                                max_sample_gap=worst_gap)

    fit_tol = tol * max(1.0, norm_b)
    if is_scalar_matrix(a, tol):
        beta = complex(np.trace(b - a) / n)
        residual = spectral_norm(b - a - beta * np.eye(n))
        if residual <= fit_tol:
            return StructureVerdict(case=StructureCase.AFFINE_OF_A, alpha=1.0 + 0j, beta=beta,
                                    residual=residual, max_sample_gap=worst_gap)

    alpha, beta, residual, modulus = _unimodular_fit(b, a)
    if residual <= fit_tol and abs(modulus - 1.0) <= tol:
        return StructureVerdict(case=StructureCase.AFFINE_OF_A, alpha=alpha, beta=beta,
                                residual=residual, max_sample_gap=worst_gap)

    defect = normality_defect(a)
    star_alpha, star_beta, star_residual, star_modulus = _unimodular_fit(b, a.conj().T)
    combined = max(star_residual, defect)
    if (star_residual <= fit_tol and defect <= tol * max(1.0, spectral_norm(a)) ** 2
            and abs(star_modulus - 1.0) <= tol):
        return StructureVerdict(case=StructureCase.AFFINE_OF_A_STAR, alpha=star_alpha,
                                beta=star_beta, residual=combined, max_sample_gap=worst_gap)

    logger.info(f"No affine fit passed (residuals {residual:.3e}, {star_residual:.3e})")
    return StructureVerdict(case=StructureCase.INDETERMINATE, alpha=None, beta=None,
                            residual=min(residual, combined), witness=worst_vector,
                            max_sample_gap=worst_gap)


# ============================================================================
# LIPSCHITZ FUNCTIONS OF NORMAL MATRICES
# ============================================================================

def lipschitz_variance_bound(a, f: Callable, lipschitz: float, samples: int = DEFAULT_SAMPLES,
                             seed: int = DEFAULT_SEED, tol: float = DEFAULT_TOLERANCE) -> float:
    """
    Worst D_xi(f(a)) / D_xi(a) over sampled xi; at most L^2 for L-Lipschitz f.

    Raises:
        LipschitzError: f violates the Lipschitz bound on a pair of eigenvalues
    """
    decomposition = eig_normal(a, tol)
    eigenvalues = decomposition.eigenvalues
    values = evaluate_scalar_function(f, eigenvalues)
    n = eigenvalues.size

    slack = 1e-12 * max(1.0, float(np.max(np.abs(eigenvalues))))
    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) > lipschitz * abs(eigenvalues[i] - eigenvalues[j]) + slack:
                raise LipschitzError(
                    "f is not Lipschitz with the given constant on the spectrum",
                    {'pair': [[eigenvalues[i].real, eigenvalues[i].imag],
                              [eigenvalues[j].real, eigenvalues[j].imag]],
                     'lipschitz': lipschitz},
                )

    basis = decomposition.basis
    a_matrix = (basis * eigenvalues) @ basis.conj().T
    b_matrix = (basis * values) @ basis.conj().T
    vectors = [random_unit_vector(n, rng) for rng in spawn_rngs(seed, samples)]
    for i in range(n):
        for j in range(i + 1, n):
            vectors.append((basis[:, i] + basis[:, j]) / np.sqrt(2))
            vectors.append((basis[:, i] + 1j * basis[:, j]) / np.sqrt(2))

    scale = max(1.0, spectral_norm(a_matrix)) ** 2
    worst = 0.0
    for xi in vectors:
        var_a = _variance_value(a_matrix, xi)
        if var_a <= 1e-14 * scale:
            continue
        worst = max(worst, _variance_value(b_matrix, xi) / var_a)
    return worst
