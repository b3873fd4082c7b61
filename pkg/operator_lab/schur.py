"""
Schur multipliers: divided-difference matrices and two-sided norm brackets.

The Schur norm of M is sup ||M o X|| / ||X|| over matrices X (operator
norms). Lower bounds come from ascent and carry a witness X; upper bounds
come from factorizations M_ij = <u_i, v_j> and carry the vectors, since
||M||_S <= max_i ||u_i|| * max_j ||v_j||. Both re-verify without the solver.

Upper bounds solve the feasibility problem

    [[P, M], [M^H, Q]] PSD,  diag(P) <= t,  diag(Q) <= t

by Dykstra's alternating projections, bisecting on t. Any approximately
feasible iterate is turned into an exact factorization by appending the
SVD of the leftover entries, so every reported upper bound is sound.
"""

import warnings
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg

from config import (BISECTION_DEPTH, DEFAULT_RESTARTS, DEFAULT_SEED, SCHUR_BRACKET_TOLERANCE,
                    SCHUR_MAX_DIM, SCHUR_MAX_ITER)
from utils import logger

from .ascent import RatioObjective, maximize_ratio, pattern_projector, schur_map
from .errors import ConvergenceWarning, InputError
from .linalg_core import (as_matrix, evaluate_scalar_function, random_unitary, same_shape,
                          spawn_rngs, spectral_norm)
from .models import DualityReport, FactorizationCertificate, NormBracket, SchurMatrix

# Dykstra iterations between certificate extractions
CERTIFICATE_INTERVAL = 50


# ============================================================================
# DIVIDED DIFFERENCES
# ============================================================================

def divided_difference_from_values(points, values) -> SchurMatrix:
    """Lambda_ij = (values_i - values_j) / (points_i - points_j), 0 where points coincide."""
    points = np.asarray(points, dtype=complex).ravel()
    values = np.asarray(values, dtype=complex).ravel()
    if points.size == 0:
        raise InputError("points must be nonempty")
    if points.shape != values.shape:
        raise InputError("points and values differ in length")
    if not np.all(np.isfinite(values)) or not np.all(np.isfinite(points)):
        raise InputError("points and values must be finite")

    numerator = values[:, None] - values[None, :]
    denominator = points[:, None] - points[None, :]
    coincide = denominator == 0
    entries = np.where(coincide, 0.0, numerator / np.where(coincide, 1.0, denominator))
    return SchurMatrix(points=points, values=values, entries=entries.astype(complex))


def divided_difference_matrix(f: Callable, points) -> SchurMatrix:
    """
    Raises:
        InputError: f is not finite on the points
    """
    points = np.asarray(points, dtype=complex).ravel()
    if points.size == 0:
        raise InputError("points must be nonempty")
    return divided_difference_from_values(points, evaluate_scalar_function(f, points))


def schur_apply(m, x) -> np.ndarray:
    """Entrywise product M o X."""
    m = as_matrix(m, 'M')
    x = as_matrix(x, 'X')
    same_shape(m, x, 'M, X')
    return m * x


# ============================================================================
# LOWER BOUNDS
# ============================================================================

def _alternating_ascent(m: np.ndarray, x0: np.ndarray, max_iter: int = 500) -> Tuple[float, np.ndarray]:
    """
    Monotone ascent of ||M o X|| over ||X|| <= 1.

    With (p, q) the top singular pair of M o X and C = diag(conj p) M diag(q),
    the next X = conj(P) Q^T from the SVD C = P S Q^H attains ||C||_1, which
    is at least the current value.
    """
    x = x0 / spectral_norm(x0)
    value = spectral_norm(m * x)
    for _ in range(max_iter):
        u, _, vh = np.linalg.svd(m * x)
        p, q = u[:, 0], vh[0].conj()
        c = np.conj(p)[:, None] * m * q[None, :]
        left, _, right_h = np.linalg.svd(c)
        candidate = np.conj(left) @ np.conj(right_h)
        candidate_value = spectral_norm(m * candidate)
        if candidate_value <= value * (1 + 1e-12):
            if candidate_value > value:
                x, value = candidate, candidate_value
            break
        x, value = candidate, candidate_value
    return value, x


def schur_norm_lower(m, seed: int = DEFAULT_SEED, restarts: int = DEFAULT_RESTARTS
                     ) -> Tuple[float, np.ndarray]:
    """
    Best ||M o X|| / ||X|| over seeded restarts, with the witness X.

    Starts are the identity, the all-ones matrix, and Haar unitaries; more
    restarts never lower the result for a fixed seed.
    """
    m = as_matrix(m, 'M', square=True)
    n = m.shape[0]
    if not np.any(m):
        return 0.0, np.eye(n, dtype=complex)

    starts = [np.eye(n, dtype=complex), np.ones((n, n), dtype=complex) / n]
    starts.extend(random_unitary(n, rng) for rng in spawn_rngs(seed, restarts))

    best_value, best_x = -1.0, starts[0]
    for index, start in enumerate(starts):
        value, x = _alternating_ascent(m, start)
        logger.debug(f"  schur lower run {index}: {value:.10f}")
        if value > best_value:
            best_value, best_x = value, x
    return float(best_value), best_x


# ============================================================================
# FACTORIZATION CERTIFICATES
# ============================================================================

def verify_certificate(m, certificate: FactorizationCertificate, atol: float = 1e-8
                       ) -> Tuple[bool, float, float]:
    """
    Re-check a factorization independently of the solver.

    Returns (valid, max entry error on the pattern, bound).
    """
    m = as_matrix(m, 'M', square=True)
    product = certificate.product()
    if product.shape != m.shape:
        return False, float('inf'), certificate.bound
    difference = np.abs(product - m)
    if certificate.pattern is not None:
        difference = np.where(certificate.pattern, difference, 0.0)
    error = float(np.max(difference))
    return error <= atol, error, certificate.bound


def _trivial_certificates(m: np.ndarray, pattern: Optional[np.ndarray]) -> List[FactorizationCertificate]:
    n = m.shape[0]
    identity = np.eye(n, dtype=complex)
    u, s, vh = np.linalg.svd(m)
    root = np.sqrt(s)
    return [
        FactorizationCertificate(left=u * root, right=vh.conj().T * root, pattern=pattern),
        FactorizationCertificate(left=m.copy(), right=identity, pattern=pattern),
        FactorizationCertificate(left=identity, right=m.conj().T.copy(), pattern=pattern),
    ]


def _extract_certificate(z: np.ndarray, m: np.ndarray, pattern: Optional[np.ndarray]
                         ) -> FactorizationCertificate:
    """Gram factor of a PSD block matrix, corrected so the pattern entries are exact."""
    n = m.shape[0]
    eigenvalues, vectors = scipy.linalg.eigh((z + z.conj().T) / 2)
    keep = eigenvalues > 1e-14 * max(float(eigenvalues[-1]), 1e-300)
    factor = vectors[:, keep] * np.sqrt(eigenvalues[keep])
    left, right = factor[:n], factor[n:]

    leftover = m - left @ right.conj().T
    if pattern is not None:
        leftover = np.where(pattern, leftover, 0.0)
    p, s, qh = np.linalg.svd(leftover)
    significant = s > 1e-300
    root = np.sqrt(s[significant])
    left = np.hstack([left, p[:, significant] * root])
    right = np.hstack([right, qh[significant].conj().T * root])
    return FactorizationCertificate(left=left, right=right, pattern=pattern)


def _project_psd(z: np.ndarray) -> np.ndarray:
    eigenvalues, vectors = scipy.linalg.eigh((z + z.conj().T) / 2)
    return (vectors * np.maximum(eigenvalues, 0.0)) @ vectors.conj().T


def _project_constraints(z: np.ndarray, m: np.ndarray, mask: np.ndarray, cap: float) -> np.ndarray:
    """Hermitian part with the pattern block fixed to M and diagonals clipped at cap."""
    n = m.shape[0]
    y = (z + z.conj().T) / 2
    block = y[:n, n:]
    block = np.where(mask, m, block)
    y[:n, n:] = block
    y[n:, :n] = block.conj().T
    diagonal = np.minimum(np.real(np.diag(y)), cap)
    np.fill_diagonal(y, diagonal)
    return y


def _dykstra(m: np.ndarray, mask: np.ndarray, pattern: Optional[np.ndarray], cap: float,
             accept: float, start: np.ndarray, max_iter: int
             ) -> Tuple[Optional[FactorizationCertificate], np.ndarray, bool]:
    """
    Dykstra iterations between the PSD cone and the constraint set.

    Returns the best certificate seen, the last iterate, and whether a
    certificate with bound <= accept was found.
    """
    z = start.copy()
    p_increment = np.zeros_like(z)
    q_increment = np.zeros_like(z)
    best: Optional[FactorizationCertificate] = None

    for iteration in range(1, max_iter + 1):
        y = _project_psd(z + p_increment)
        p_increment = z + p_increment - y
        z_next = _project_constraints(y + q_increment, m, mask, cap)
        q_increment = y + q_increment - z_next
        change = float(np.linalg.norm(z_next - z))
        z = z_next

        if iteration % CERTIFICATE_INTERVAL == 0 or iteration == max_iter:
            certificate = _extract_certificate(y, m, pattern)
            if best is None or certificate.bound < best.bound:
                best = certificate
            if certificate.bound <= accept:
                return best, z, True
            if change <= 1e-12 * max(1.0, float(np.linalg.norm(z))):
                break
    return best, z, False


def schur_norm_upper(m, tol: float = SCHUR_BRACKET_TOLERANCE, lower: Optional[float] = None,
                     max_iter: int = SCHUR_MAX_ITER, depth: int = BISECTION_DEPTH,
                     pattern: Optional[np.ndarray] = None
                     ) -> Tuple[float, FactorizationCertificate]:
    """
    Certified upper bound on the Schur norm by bisection on t.

    With a pattern, entries of M off the pattern are free; the result then
    bounds the norm of M restricted to matrices supported on the pattern.
    Issues ConvergenceWarning when the bracket against lower stays wider
    than tol.

    Raises:
        InputError: n exceeds the certification cap
    """
    m = as_matrix(m, 'M', square=True)
    n = m.shape[0]
    if n > SCHUR_MAX_DIM:
        raise InputError(f"Schur certification supports n <= {SCHUR_MAX_DIM}, got {n}")
    mask = np.ones((n, n), dtype=bool) if pattern is None else np.asarray(pattern, dtype=bool)
    target = np.where(mask, m, 0.0)

    if not np.any(target):
        zero = FactorizationCertificate(left=np.zeros((n, 1), dtype=complex),
                                        right=np.zeros((n, 1), dtype=complex), pattern=pattern)
        return 0.0, zero

    best = min(_trivial_certificates(target, pattern), key=lambda c: c.bound)
    hi = best.bound
    lo = max(lower or 0.0, 0.0)
    identity = np.eye(n, dtype=complex)
    z = np.block([[hi * identity, target], [target.conj().T, hi * identity]])

    for step in range(depth):
        if hi - lo <= tol:
            break
        mid = (lo + hi) / 2
        cap = mid - (mid - lo) / 4
        certificate, z, feasible = _dykstra(target, mask, pattern, cap, mid, z, max_iter)
        if certificate is not None and certificate.bound < hi:
            best, hi = certificate, certificate.bound
        if not feasible:
            lo = mid
        logger.debug(f"  bisection {step}: [{lo:.8f}, {hi:.8f}]")

    if lower is not None and hi - lower > tol:
        warnings.warn(f"Schur bracket [{lower:.6f}, {hi:.6f}] is wider than {tol}",
                      ConvergenceWarning)
        logger.warning(f"Schur bracket did not close: width {hi - lower:.3e}")
    return float(hi), best


def schur_norm_bracket(m, seed: int = DEFAULT_SEED, restarts: int = DEFAULT_RESTARTS,
                       tol: float = SCHUR_BRACKET_TOLERANCE, max_iter: int = SCHUR_MAX_ITER
                       ) -> NormBracket:
    m = as_matrix(m, 'M', square=True)
    lower, witness = schur_norm_lower(m, seed, restarts)
    upper, certificate = schur_norm_upper(m, tol=tol, lower=lower, max_iter=max_iter)
    if lower > upper + 1e-6:
        logger.warning(f"Inconsistent bracket: lower {lower} > upper {upper}")
    return NormBracket(lower=lower, upper=upper, witness=witness, certificate=certificate)


# ============================================================================
# RESTRICTED NORMS
# ============================================================================

def _pattern_starts(m: np.ndarray, mask: np.ndarray, seed: int, restarts: int) -> List[np.ndarray]:
    n = m.shape[0]
    rows, cols = np.nonzero(np.triu(mask | mask.T, k=0) & ~np.eye(n, dtype=bool))
    weights = np.abs(m[rows, cols]) + np.abs(m[cols, rows])
    order = np.argsort(-weights)[:max(2 * n, 6)]

    starts = []
    for k in order:
        start = np.zeros((n, n), dtype=complex)
        start[rows[k], cols[k]] = 1.0
        start[cols[k], rows[k]] = 1.0
        starts.append(start)
    starts.append(np.ones((n, n), dtype=complex))
    for rng in spawn_rngs(seed, restarts):
        starts.append(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    return starts


def restricted_offdiag_norm(m, seed: int = DEFAULT_SEED, restarts: int = DEFAULT_RESTARTS,
                            pattern: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray]:
    """
    sup ||M o X|| / ||X|| over X supported on the pattern (default: zero diagonal).

    Returns (value, witness).

    Raises:
        InputError: M is nonzero off the pattern
    """
    m = as_matrix(m, 'M', square=True)
    n = m.shape[0]
    mask = ~np.eye(n, dtype=bool) if pattern is None else np.asarray(pattern, dtype=bool)
    if np.any(m[~mask] != 0):
        raise InputError("M must vanish off the pattern (zero diagonal by default)")
    if not np.any(m):
        return 0.0, np.where(mask, 1.0 + 0j, 0.0)
    if n == 1:
        return 0.0, np.zeros((1, 1), dtype=complex)

    objective = RatioObjective(schur_map(m), projector=pattern_projector(mask))
    result = maximize_ratio(objective, _pattern_starts(m, mask, seed, restarts))
    return float(result.value), result.witness


def restricted_offdiag_bracket(m, seed: int = DEFAULT_SEED, restarts: int = DEFAULT_RESTARTS,
                               tol: float = SCHUR_BRACKET_TOLERANCE,
                               pattern: Optional[np.ndarray] = None,
                               max_iter: int = SCHUR_MAX_ITER) -> NormBracket:
    """
    Two-sided bracket for the restricted norm.

    The upper side minimizes the full Schur norm over fillings of the
    entries off the pattern; any filling restricts to the same map on
    matrices supported on the pattern.
    """
    m = as_matrix(m, 'M', square=True)
    n = m.shape[0]
    mask = ~np.eye(n, dtype=bool) if pattern is None else np.asarray(pattern, dtype=bool)
    lower, witness = restricted_offdiag_norm(m, seed, restarts, mask)
    upper, certificate = schur_norm_upper(m, tol=tol, lower=lower, max_iter=max_iter, pattern=mask)
    return NormBracket(lower=lower, upper=upper, witness=witness, certificate=certificate)


# ============================================================================
# TRANSPOSE DUALITY
# ============================================================================

def _trace_norm_ascent(m: np.ndarray, x: np.ndarray, y: np.ndarray, max_iter: int = 500
                       ) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Monotone ascent of ||diag(x) M diag(y)||_1 over unit x, y.

    Fixing the polar part W of diag(x) M diag(y), the value is at least
    Re x^T (conj(W) o M) y, maximized by the top singular pair.
    """
    value = float(np.sum(scipy.linalg.svdvals(x[:, None] * m * y[None, :])))
    for _ in range(max_iter):
        u, _, vh = np.linalg.svd(x[:, None] * m * y[None, :])
        polar = u @ vh
        kernel = np.conj(polar) * m
        p, _, qh = np.linalg.svd(kernel)
        x_next, y_next = np.conj(p[:, 0]), qh[0].conj()
        candidate = float(np.sum(scipy.linalg.svdvals(x_next[:, None] * m * y_next[None, :])))
        if candidate <= value * (1 + 1e-12):
            if candidate > value:
                x, y, value = x_next, y_next, candidate
            break
        x, y, value = x_next, y_next, candidate
    return value, x, y


def trace_norm_schur_lower(m, seed: int = DEFAULT_SEED, restarts: int = DEFAULT_RESTARTS) -> float:
    """Schur norm of M acting on trace-class matrices (rank-one extreme points)."""
    m = as_matrix(m, 'M', square=True)
    n = m.shape[0]
    if not np.any(m):
        return 0.0
    ones = np.ones(n, dtype=complex) / np.sqrt(n)
    starts = [(ones, ones)]
    for rng in spawn_rngs(seed, restarts):
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        y = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        starts.append((x / np.linalg.norm(x), y / np.linalg.norm(y)))
    for i in range(n):
        for j in range(n):
            if m[i, j] != 0:
                e_i, e_j = np.zeros(n, dtype=complex), np.zeros(n, dtype=complex)
                e_i[i], e_j[j] = 1.0, 1.0
                starts.append((e_i, e_j))
                break
    return max(_trace_norm_ascent(m, x, y)[0] for x, y in starts)


def transpose_duality_check(m, seed: int = DEFAULT_SEED, restarts: int = DEFAULT_RESTARTS,
                            atol: float = 1e-3) -> DualityReport:
    """
    Compare the trace-norm Schur norm of M with the operator-norm Schur norm of M^T.

    Raises:
        InputError: n > 8
    """
    m = as_matrix(m, 'M', square=True)
    if m.shape[0] > 8:
        raise InputError("transpose_duality_check supports n <= 8")
    op_side, _ = schur_norm_lower(m.T, seed, restarts)
    trace_side = trace_norm_schur_lower(m, seed + 1, restarts)
    difference = abs(op_side - trace_side)
    return DualityReport(op_norm_of_transpose=op_side, trace_norm_multiplier=trace_side,
                         difference=difference, agrees=difference <= atol)
