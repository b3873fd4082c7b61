"""
Data Models for the Operator Lab

Every computation returns one of these containers instead of a loose tuple so
the reporter can serialize results uniformly and the tests can name fields.

Key Design Principles:
- Matrices and vectors are plain complex numpy arrays
- Enums name every categorical verdict
- Dataclasses hold results; TypedDicts describe the JSON they turn into
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple, TypedDict

import numpy as np


# ============================================================================
# ENUMS - Type-Safe Constants
# ============================================================================

class MatrixKind(Enum):
    """Families produced by the seeded random generator."""
    GENERAL = 'general'
    NORMAL = 'normal'
    HERMITIAN = 'hermitian'
    UNITARY = 'unitary'


class StructureCase(Enum):
    """Outcome of recovering b from equal variances."""
    AFFINE_OF_A = 'AffineOfA'            # b = alpha*a + beta
    AFFINE_OF_A_STAR = 'AffineOfAStar'   # a normal, b = alpha*a^H + beta
    INDETERMINATE = 'Indeterminate'      # variances differ, or no fit passed


class DecisionKind(Enum):
    AFFINE = 'Affine'
    VIOLATION = 'Violation'


class KappaMethod(Enum):
    RANDOM = 'random'
    ASCENT = 'ascent'
    EXACT_NORMAL = 'exact-normal'


class EqualityCase(Enum):
    """Outcome of recovering b from equal derivation norms."""
    SCALAR_AFFINE = 'case-i'     # b = sigma*a + lambda, |sigma| = 1
    UNITARY_PAIR = 'case-ii'     # a = alpha*u^H + lambda, b = beta*u + mu
    INCONCLUSIVE = 'inconclusive'


# ============================================================================
# LINEAR ALGEBRA
# ============================================================================

@dataclass
class SpectralDecomposition:
    """
    Eigen-decomposition of a normal matrix.

    basis columns are orthonormal eigenvectors; eigenvalues are sorted
    lexicographically by (real, imag).
    """
    eigenvalues: np.ndarray
    basis: np.ndarray
    residual: float  # ||a U - U diag(eigenvalues)||

    def reconstruct(self) -> np.ndarray:
        return (self.basis * self.eigenvalues) @ self.basis.conj().T


# ============================================================================
# VARIANCE
# ============================================================================

@dataclass
class StateSpec:
    """A vector state or a density matrix; exactly one is set."""
    vector: Optional[np.ndarray] = None
    density: Optional[np.ndarray] = None

    @classmethod
    def from_array(cls, array: np.ndarray) -> 'StateSpec':
        array = np.asarray(array, dtype=complex)
        if array.ndim == 2 and array.shape[0] == array.shape[1] and array.shape[0] > 1:
            return cls(density=array)
        return cls(vector=array.reshape(-1))


@dataclass
class VarianceReport:
    variance: float
    mean: complex        # omega(a)
    second_moment: float  # omega(a^H a)


@dataclass
class RankOneCheck:
    """
    Squared norm of [a, xi xi^H] against the variances of a and a^H at xi.

    lhs always equals max(rhs, adjoint_rhs); it equals rhs alone whenever
    the adjoint variance does not exceed the variance (hyponormal or normal a).
    """
    lhs: float
    rhs: float
    adjoint_rhs: float

    @property
    def identity_gap(self) -> float:
        return abs(self.lhs - max(self.rhs, self.adjoint_rhs))


@dataclass
class VarianceGap:
    """Best unit vector found for D_xi(b) - D_xi(a)."""
    gap: float
    witness: np.ndarray


@dataclass
class TwoByTwoDecision:
    kind: DecisionKind
    theta: Optional[complex] = None
    tau: Optional[complex] = None
    residual: Optional[float] = None
    witness: Optional[np.ndarray] = None
    gap: Optional[float] = None
    form_min_eigenvalue: float = 0.0  # smallest eigenvalue of the 2x2 Hermitian form


@dataclass
class ExtractedValue:
    value: complex
    spread: float
    multiplicity: int


@dataclass
class StructureVerdict:
    case: StructureCase
    alpha: Optional[complex]
    beta: Optional[complex]
    residual: float
    witness: Optional[np.ndarray] = None
    max_sample_gap: float = 0.0


# ============================================================================
# SCHUR MULTIPLIERS
# ============================================================================

@dataclass
class SchurMatrix:
    """Divided-difference matrix with its generating points and values."""
    points: np.ndarray
    values: np.ndarray
    entries: np.ndarray


@dataclass
class FactorizationCertificate:
    """
    M_ij = sum_k left[i, k] * conj(right[j, k]) on the pattern.

    The Schur norm of M is at most max_i ||left[i]|| * max_j ||right[j]||.
    Entries off the pattern are free (restricted norms).
    """
    left: np.ndarray
    right: np.ndarray
    pattern: Optional[np.ndarray] = None

    @property
    def bound(self) -> float:
        if self.left.size == 0 or self.right.size == 0:
            return 0.0
        left_max = float(np.max(np.linalg.norm(self.left, axis=1)))
        right_max = float(np.max(np.linalg.norm(self.right, axis=1)))
        return left_max * right_max

    def product(self) -> np.ndarray:
        return self.left @ self.right.conj().T


@dataclass
class NormBracket:
    lower: float
    upper: float
    witness: np.ndarray
    certificate: FactorizationCertificate

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass
class DualityReport:
    op_norm_of_transpose: float
    trace_norm_multiplier: float
    difference: float
    agrees: bool


# ============================================================================
# COMMUTATORS
# ============================================================================

@dataclass
class KappaEstimate:
    lower: float
    witness: np.ndarray
    method: KappaMethod
    samples_used: int


@dataclass
class KappaBracket:
    """Optimal commutator constant for normal a, bracketed by certificates."""
    lower: float
    upper: float
    schur: SchurMatrix
    witness: np.ndarray           # x in the original basis attaining lower
    certificate: FactorizationCertificate
    pattern: np.ndarray


@dataclass
class AmplifiedCheck:
    worst_ratio: float
    witness: np.ndarray
    copies: int
    kappa: Optional[float] = None
    within_kappa: Optional[bool] = None


@dataclass
class EqualityVerdict:
    case: EqualityCase
    kappa_ab: float
    kappa_ba: float
    residual: float
    sigma: Optional[complex] = None
    shift: Optional[complex] = None
    alpha: Optional[complex] = None
    beta: Optional[complex] = None
    mu: Optional[complex] = None
    unitary: Optional[np.ndarray] = None


@dataclass
class SchurFunctionReport:
    schur: SchurMatrix
    full_bracket: NormBracket
    kappa: KappaBracket
    empirical_ratio: float      # full norm over kappa
    within_factor_two: bool


@dataclass
class InclusionCheck:
    worst_slack: float
    witness: np.ndarray
    checked: int
    smallest_commutator: float


# ============================================================================
# CAUCHY-GREEN CALCULUS
# ============================================================================

@dataclass
class MollifierConfig:
    """
    Smooth bump phi on (-1, 1) sampled at Gauss-Legendre nodes.

    phi_prime is stored so theta(s) = (i + s) phi'(s) needs no differencing.
    """
    delta: float
    nodes: np.ndarray
    weights: np.ndarray
    phi: np.ndarray
    phi_prime: np.ndarray
    normalization: float
    integral_error: float

    @property
    def theta(self) -> np.ndarray:
        return (1j + self.nodes) * self.phi_prime


@dataclass
class CompactRealFunction:
    """Compactly supported f on a uniform grid, with f' analytic when known."""
    sample_grid: np.ndarray
    f_values: np.ndarray
    fprime_values: np.ndarray
    support_radius: float
    step: float
    analytic_derivative: bool
    name: str = 'f'
    f_fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    fprime_fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    def f(self, x: np.ndarray) -> np.ndarray:
        if self.f_fn is not None:
            return np.asarray(self.f_fn(x), dtype=complex)
        return (np.interp(x, self.sample_grid, self.f_values.real, left=0.0, right=0.0)
                + 1j * np.interp(x, self.sample_grid, self.f_values.imag, left=0.0, right=0.0))

    def fprime(self, x: np.ndarray) -> np.ndarray:
        if self.fprime_fn is not None:
            return np.asarray(self.fprime_fn(x), dtype=complex)
        return (np.interp(x, self.sample_grid, self.fprime_values.real, left=0.0, right=0.0)
                + 1j * np.interp(x, self.sample_grid, self.fprime_values.imag, left=0.0, right=0.0))


@dataclass
class PlanarGrid:
    """
    Cell-centred quadrature grid over a box of the plane.

    shape is (ny, nx) for a uniform grid laid out row-major, None once cells
    have been subdivided.
    """
    centers: np.ndarray
    weights: np.ndarray
    sizes: np.ndarray
    step: float
    box: Tuple[float, float, float, float]  # xmin, xmax, ymin, ymax
    levels: int = 0
    exclusion_margin: float = 0.0
    shape: Optional[Tuple[int, int]] = None

    @property
    def area(self) -> float:
        return float(np.sum(self.weights))

    def subset(self, mask: np.ndarray) -> 'PlanarGrid':
        return PlanarGrid(
            centers=self.centers[mask], weights=self.weights[mask], sizes=self.sizes[mask],
            step=self.step, box=self.box, levels=self.levels,
            exclusion_margin=self.exclusion_margin, shape=None,
        )


@dataclass
class ExtensionFunction:
    """
    Extension g of f off the real line, sampled with its dbar derivative.

    K is ('interval', lo, hi) or ('points', array). evaluator maps complex
    points to (g, core, band) where dbar g = core + band; core is the
    chi * dbar g0 part and band the g0 * dbar chi part.
    """
    grid: PlanarGrid
    g_values: np.ndarray
    dbar_values: np.ndarray
    core_values: np.ndarray
    band_values: np.ndarray
    support_box: Tuple[float, float, float, float]
    K: Tuple[Any, ...]
    config: Optional[MollifierConfig]
    evaluator: Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]] = field(repr=False)
    source: Optional[CompactRealFunction] = None
    fd_discrepancy: float = 0.0
    synthetic: bool = False

    def dbar(self, points: np.ndarray) -> np.ndarray:
        _, core, band = self.evaluator(np.asarray(points, dtype=complex))
        return core + band


@dataclass
class IntertwiningMap:
    """
    x -> scale * sum_k c_k R_k x R_k, stored as the kernel
    S_ijlm = sum_k c_k R_k[i, j] R_k[l, m].

    function_value is scale * sum_k c_k R_k, the matching quadrature f(a).
    """
    kernel: np.ndarray
    function_value: np.ndarray
    scale: complex
    label: str
    cells: int
    radius: Optional[float] = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.scale * np.einsum('ijlm,jl->im', self.kernel, np.asarray(x, dtype=complex))


@dataclass
class FunctionClassSpec:
    alpha: float
    kappa_const: float
    kappa_taylor: float       # constant in the Taylor-remainder inequality
    kappa_derivative: float   # constant in the derivative Holder inequality
    binding_pair: Tuple[float, float]
    verified_pairs: int
    diverges: bool


@dataclass
class KappaIntegral:
    value: float
    error_bound: float
    core: float
    band: float
    worst_point: complex
    level_values: List[float]


@dataclass
class KappaBoundCheck:
    beta: float
    alpha: float
    radius: float
    bound: float
    kappa: float
    error_bound: float
    holds: bool


@dataclass
class RefinementPoint:
    """
    error is against the spectral f(a) when oracle is 'spectral'. Without an
    oracle it is the change from the previous step, and None at the first step.
    """
    step: float
    error: Optional[float]
    order: Optional[float]
    oracle: str = 'spectral'


@dataclass
class IntertwineResiduals:
    """
    res1/res2 compare against the exact f(a); discrete_* against the
    quadrature g(a) built from the same resolvents as T.
    """
    res1: float
    res2: float
    discrete_res1: float
    discrete_res2: float
    oracle: str


@dataclass
class SesquilinearCheck:
    worst_ratio: float
    bound: float
    holds: bool


@dataclass
class BesovDiagnostic:
    value: float
    tail_slope: Optional[float]
    diverges: bool
    h_values: np.ndarray
    deltas: np.ndarray


@dataclass
class ContourPoint:
    nodes: int
    residual: float


# ============================================================================
# REPORT FRAGMENTS
# ============================================================================

class BracketJSON(TypedDict):
    lower: float
    upper: float
    witness: Dict[str, Any]
    certificate: Dict[str, Any]


class KappaEstimateJSON(TypedDict):
    lower: float
    witness: Dict[str, Any]
    method: str
    samples_used: int
