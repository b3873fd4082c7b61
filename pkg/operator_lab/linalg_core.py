"""
Dense complex linear algebra shared by every module.

Norms, the normal-matrix eigendecomposition, resolvents and seeded random
generation. All randomness flows through explicit seeds; no global RNG state.
"""

from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from config import DEFAULT_SEED, DEFAULT_TOLERANCE
from utils import load_matrix_file, logger

from .errors import InputError, NormalityError, ResolventError
from .models import MatrixKind, SpectralDecomposition

SeedLike = Union[int, np.random.Generator, None]


# ============================================================================
# VALIDATION
# ============================================================================

def as_matrix(m, name: str = 'matrix', square: bool = False) -> np.ndarray:
    """
    Coerce input to a finite 2-D complex array.

    Raises:
        InputError: Wrong rank, empty, non-finite, or not square when required
    """
    try:
        array = np.asarray(m, dtype=complex)
    except (TypeError, ValueError) as e:
        raise InputError(f"{name} is not numeric: {e}") from e

    if array.ndim != 2 or array.size == 0:
        raise InputError(f"{name} must be a nonempty 2-D matrix", {'shape': list(array.shape)})
    if not np.all(np.isfinite(array)):
        raise InputError(f"{name} has non-finite entries")
    if square and array.shape[0] != array.shape[1]:
        raise InputError(f"{name} must be square", {'shape': list(array.shape)})
    return array


def as_vector(v, name: str = 'vector', dim: Optional[int] = None) -> np.ndarray:
    """Coerce input to a finite 1-D complex array (columns are flattened)."""
    try:
        array = np.asarray(v, dtype=complex)
    except (TypeError, ValueError) as e:
        raise InputError(f"{name} is not numeric: {e}") from e

    if array.ndim == 2 and 1 in array.shape:
        array = array.reshape(-1)
    if array.ndim != 1 or array.size == 0:
        raise InputError(f"{name} must be a nonempty vector", {'shape': list(array.shape)})
    if not np.all(np.isfinite(array)):
        raise InputError(f"{name} has non-finite entries")
    if dim is not None and array.size != dim:
        raise InputError(f"{name} has dimension {array.size}, expected {dim}")
    return array


def same_shape(a: np.ndarray, b: np.ndarray, names: str = 'a, b') -> None:
    if a.shape != b.shape:
        raise InputError(f"Dimension mismatch between {names}",
                         {'shapes': [list(a.shape), list(b.shape)]})


def load_matrix(path: str, name: str = 'matrix') -> np.ndarray:
    """Read a Matrix JSON file, mapping every failure to InputError."""
    try:
        return as_matrix(load_matrix_file(path), name)
    except (OSError, ValueError) as e:
        if isinstance(e, InputError):
            raise
        raise InputError(f"Cannot read {name} from {path}: {e}", {'path': str(path)}) from e


# ============================================================================
# NORMS
# ============================================================================

def spectral_norm(m: np.ndarray) -> float:
    """Largest singular value via LAPACK; 0 for empty input."""
    array = np.asarray(m, dtype=complex)
    if array.size == 0:
        return 0.0
    if array.ndim == 1:
        return float(np.linalg.norm(array))
    return float(scipy.linalg.svdvals(array)[0])


def operator_norm(m, seed: SeedLike = DEFAULT_SEED, rtol: float = 1e-10,
                  max_iter: int = 2000) -> float:
    """
    Largest singular value by power iteration on m^H m.

    Stops once the eigen-residual of the Gram matrix drops below rtol times
    the Rayleigh quotient. Falls back to a full SVD when the iteration stalls
    (clustered top singular values).
    """
    array = as_matrix(m)
    if not np.any(array):
        return 0.0

    gram = array.conj().T @ array
    rng = make_rng(seed)
    n = gram.shape[0]
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)

    for iteration in range(max_iter):
        w = gram @ v
        rayleigh = float(np.vdot(v, w).real)
        residual = float(np.linalg.norm(w - rayleigh * v))
        w_norm = float(np.linalg.norm(w))
        if w_norm == 0.0:
            break
        v = w / w_norm
        if residual <= rtol * rayleigh:
            return float(np.sqrt(rayleigh))

    logger.debug(f"Power iteration did not settle in {max_iter} steps; using SVD")
    return spectral_norm(array)


def trace_norm(m) -> float:
    """Sum of singular values."""
    array = as_matrix(m)
    return float(np.sum(scipy.linalg.svdvals(array)))


def frobenius_normalize(m: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(m)
    return m / norm if norm > 0 else m


# ============================================================================
# SPECTRAL DECOMPOSITION
# ============================================================================

def normality_defect(a: np.ndarray) -> float:
    """||a^H a - a a^H||."""
    return spectral_norm(a.conj().T @ a - a @ a.conj().T)


def eig_normal(a, tol: float = DEFAULT_TOLERANCE) -> SpectralDecomposition:
    """
    Unitary eigendecomposition of a normal matrix.

    The complex Schur form is computed and the triangular factor is required
    to be diagonal within tolerance, so one factorization serves both as a
    normality check and as the decomposition.

    Raises:
        NormalityError: a^H a - a a^H, or the off-diagonal Schur residual, is
            larger than tolerance allows
    """
    a = as_matrix(a, 'a', square=True)
    scale = spectral_norm(a)
    defect = normality_defect(a)
    if defect > tol * scale ** 2:
        raise NormalityError(
            f"Matrix is not normal: ||a*a - aa*|| = {defect:.3e}",
            {'defect': defect, 'tolerance': tol * scale ** 2},
        )

    triangular, unitary = scipy.linalg.schur(a, output='complex')
    eigenvalues = np.diag(triangular).copy()
    order = np.lexsort((eigenvalues.imag, eigenvalues.real))
    eigenvalues = eigenvalues[order]
    unitary = unitary[:, order]

    residual = spectral_norm(a @ unitary - unitary * eigenvalues)
    if residual > 10 * tol * scale:
        raise NormalityError(
            f"Schur factor is not diagonal: residual {residual:.3e}",
            {'defect': defect, 'residual': residual},
        )

    return SpectralDecomposition(eigenvalues=eigenvalues, basis=unitary, residual=residual)


def evaluate_scalar_function(f: Callable, points: np.ndarray, name: str = 'f') -> np.ndarray:
    """
    Evaluate f on an array of points, vectorized when f allows it.

    Raises:
        InputError: f returns non-finite values
    """
    points = np.asarray(points, dtype=complex)
    try:
        values = np.asarray(f(points), dtype=complex)
        if values.shape != points.shape:
            values = np.broadcast_to(values, points.shape).astype(complex)
    except (TypeError, ValueError):
        values = np.array([complex(f(p)) for p in points.ravel()]).reshape(points.shape)

    if not np.all(np.isfinite(values)):
        raise InputError(f"{name} produced non-finite values")
    return values


def apply_function_spectral(a, f: Callable, tol: float = DEFAULT_TOLERANCE) -> np.ndarray:
    """U diag(f(lambda)) U^H for normal a."""
    decomposition = eig_normal(a, tol)
    values = evaluate_scalar_function(f, decomposition.eigenvalues)
    basis = decomposition.basis
    return (basis * values) @ basis.conj().T


# ============================================================================
# RESOLVENTS AND COMMUTATORS
# ============================================================================

def resolvent(a, zeta: complex, min_distance: float = 0.0) -> np.ndarray:
    """
    (zeta I - a)^{-1} with a residual check.

    Raises:
        ResolventError: zeta within min_distance of the spectrum, a singular
            solve, or residual above 1e-10 times the condition number
    """
    a = as_matrix(a, 'a', square=True)
    n = a.shape[0]
    identity = np.eye(n, dtype=complex)

    distance = float(np.min(np.abs(zeta - np.linalg.eigvals(a))))
    if distance <= min_distance:
        raise ResolventError(
            f"zeta={zeta} is within {min_distance} of the spectrum",
            {'distance': distance, 'min_distance': min_distance},
        )

    shifted = zeta * identity - a
    try:
        result = scipy.linalg.solve(shifted, identity)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise ResolventError(f"Resolvent solve failed: {e}", {'distance': distance}) from e

    condition = float(np.linalg.cond(shifted))
    if not np.all(np.isfinite(result)) or not np.isfinite(condition):
        raise ResolventError("Resolvent is not finite", {'distance': distance})

    residual = spectral_norm(shifted @ result - identity)
    if residual > 1e-10 * max(condition, 1.0):
        raise ResolventError(
            f"Resolvent residual {residual:.3e} too large",
            {'distance': distance, 'residual': residual, 'condition': condition},
        )
    return result


def batched_resolvents(a: np.ndarray, zetas: np.ndarray) -> np.ndarray:
    """Stack of (zeta_k I - a)^{-1}, shape (k, n, n). No safety checks."""
    n = a.shape[0]
    identity = np.eye(n, dtype=complex)
    shifted = zetas[:, None, None] * identity - a
    rhs = np.broadcast_to(identity, shifted.shape)
    return np.linalg.solve(shifted, rhs)


def commutator(a, x) -> np.ndarray:
    """[a, x] = a x - x a."""
    a = as_matrix(a, 'a', square=True)
    x = as_matrix(x, 'x', square=True)
    same_shape(a, x, 'a, x')
    return a @ x - x @ a


def is_scalar_matrix(a: np.ndarray, tol: float = DEFAULT_TOLERANCE) -> bool:
    n = a.shape[0]
    centered = a - (np.trace(a) / n) * np.eye(n)
    return spectral_norm(centered) <= tol * max(spectral_norm(a), np.finfo(float).tiny)


# ============================================================================
# SEEDED RANDOM GENERATION
# ============================================================================

def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(DEFAULT_SEED if seed is None else seed)


def spawn_rngs(seed: int, count: int) -> List[np.random.Generator]:
    """
    Independent generators for restarts.

    Children of one SeedSequence are prefix-stable: asking for more restarts
    keeps the earlier streams unchanged.
    """
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(child) for child in children]


def random_gaussian(shape: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar unitary via QR with the phase of R's diagonal removed."""
    q, r = np.linalg.qr(random_gaussian((n, n), rng))
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def random_unit_vector(n: int, rng: np.random.Generator) -> np.ndarray:
    v = random_gaussian((n,), rng)
    return v / np.linalg.norm(v)


def random_matrix(n: int, kind: Union[str, MatrixKind] = MatrixKind.GENERAL,
                  seed: SeedLike = DEFAULT_SEED) -> np.ndarray:
    """
    Deterministic random matrix for fixed (n, kind, seed).

    Raises:
        InputError: n < 1 or unknown kind
    """
    if n < 1:
        raise InputError(f"n must be positive, got {n}")
    try:
        kind = MatrixKind(kind) if not isinstance(kind, MatrixKind) else kind
    except ValueError as e:
        raise InputError(f"Unknown matrix kind: {kind}") from e

    rng = make_rng(seed)
    if kind is MatrixKind.GENERAL:
        return random_gaussian((n, n), rng)
    if kind is MatrixKind.HERMITIAN:
        g = random_gaussian((n, n), rng)
        return (g + g.conj().T) / 2
    if kind is MatrixKind.UNITARY:
        return random_unitary(n, rng)

    u = random_unitary(n, rng)
    eigenvalues = random_gaussian((n,), rng)
    return (u * eigenvalues) @ u.conj().T


def unilateral_shift_section(n: int) -> np.ndarray:
    """n x n section of the unilateral shift: e_k -> e_{k+1}."""
    return np.eye(n, k=-1, dtype=complex)


def cyclic_permutation(n: int) -> np.ndarray:
    """Unitary with e_k -> e_{k+1 mod n}."""
    return np.roll(np.eye(n, dtype=complex), 1, axis=0)
