"""
Ratio ascent for operator-norm objectives.

Maximizes ||N(X)|| / ||D(X)|| over matrices X, where N and D are linear maps
on matrices and norms are operator norms. Used for commutator constants,
restricted Schur norms and amplified checks.

The operator norm is nonsmooth where the top singular value is repeated, so
each run climbs a log-sum-exp smoothing of the singular values and tightens
it in stages; the returned value is always the exact ratio at the witness.
Small problems get a Nelder-Mead polish of the best run.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from utils import logger

from .linalg_core import spectral_norm

# Relative smoothing levels, loosest first; 0 is the exact norm
SMOOTHING_SCHEDULE: Tuple[float, ...] = (1e-1, 1e-2, 1e-3, 1e-4, 0.0)


@dataclass
class LinearMap:
    """A linear map on matrices together with its Frobenius adjoint."""
    apply: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]
    name: str = 'map'

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.apply(x)


@dataclass
class AscentResult:
    value: float
    witness: np.ndarray
    run_values: List[float] = field(default_factory=list)


def commutator_map(a: np.ndarray) -> LinearMap:
    """x -> [a, x]; its adjoint is G -> [a^H, G]."""
    a_h = a.conj().T
    return LinearMap(
        apply=lambda x: a @ x - x @ a,
        adjoint=lambda g: a_h @ g - g @ a_h,
        name='commutator',
    )


def schur_map(m: np.ndarray) -> LinearMap:
    """X -> M o X; its adjoint is G -> conj(M) o G."""
    m_conj = m.conj()
    return LinearMap(apply=lambda x: m * x, adjoint=lambda g: m_conj * g, name='schur')


def identity_map() -> LinearMap:
    return LinearMap(apply=lambda x: x, adjoint=lambda g: g, name='identity')


def zero_diagonal_projector(x: np.ndarray) -> np.ndarray:
    y = x.copy()
    np.fill_diagonal(y, 0.0)
    return y


def pattern_projector(pattern: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    mask = np.asarray(pattern, dtype=bool)
    return lambda x: np.where(mask, x, 0.0)


def smoothed_norm(y: np.ndarray, mu: float) -> Tuple[float, np.ndarray]:
    """
    Smoothed operator norm and its gradient.

    With mu > 0 returns mu*log(sum exp(s_k / mu)) shifted to be at least the
    top singular value; the gradient is U diag(softmax) V^H. With mu == 0
    returns the top singular value and p q^H.
    """
    u, s, vh = np.linalg.svd(y, full_matrices=False)
    if mu <= 0.0 or s[0] == 0.0:
        return float(s[0]), np.outer(u[:, 0], vh[0])

    shifted = np.exp((s - s[0]) / mu)
    total = float(np.sum(shifted))
    weights = shifted / total
    value = float(s[0] + mu * np.log(total))
    return value, (u * weights) @ vh


class RatioObjective:
    """||N X|| / ||D X|| with an optional subspace projector and floor."""

    def __init__(self, numerator: LinearMap, denominator: Optional[LinearMap] = None,
                 projector: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 floor: float = 0.0):
        self.numerator = numerator
        self.denominator = denominator or identity_map()
        self.projector = projector or (lambda x: x)
        self.floor = floor

    def exact(self, x: np.ndarray) -> float:
        """Exact ratio, or -inf when the denominator is below floor * ||x||."""
        denominator = spectral_norm(self.denominator(x))
        if denominator <= self.floor * spectral_norm(x) or denominator == 0.0:
            return -np.inf
        return spectral_norm(self.numerator(x)) / denominator

    def smoothed(self, x: np.ndarray, mu_num: float, mu_den: float
                 ) -> Tuple[float, Optional[np.ndarray]]:
        y_num = self.numerator(x)
        y_den = self.denominator(x)
        n_val, n_grad = smoothed_norm(y_num, mu_num)
        d_val, d_grad = smoothed_norm(y_den, mu_den)
        if d_val <= self.floor * spectral_norm(x) or d_val == 0.0:
            return -np.inf, None
        ratio = n_val / d_val
        gradient = (self.numerator.adjoint(n_grad) - ratio * self.denominator.adjoint(d_grad)) / d_val
        return ratio, self.projector(gradient)


def _climb(objective: RatioObjective, x0: np.ndarray, max_iter: int) -> Tuple[float, np.ndarray]:
    x = objective.projector(x0)
    x = x / np.linalg.norm(x)
    best_value = objective.exact(x)
    best_x = x

    for level in SMOOTHING_SCHEDULE:
        mu_num = level * spectral_norm(objective.numerator(x))
        mu_den = level * spectral_norm(objective.denominator(x))
        value, gradient = objective.smoothed(x, mu_num, mu_den)
        if gradient is None:
            break
        step = 0.5

        for _ in range(max_iter):
            radial = np.vdot(x, gradient).real
            direction = gradient - radial * x
            direction_norm = np.linalg.norm(direction)
            if direction_norm <= 1e-14 * max(abs(value), 1.0):
                break
            direction /= direction_norm

            accepted = False
            while step > 1e-12:
                candidate = objective.projector(x + step * direction)
                candidate /= np.linalg.norm(candidate)
                candidate_value, candidate_gradient = objective.smoothed(candidate, mu_num, mu_den)
                if candidate_gradient is not None and candidate_value > value:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                break

            improvement = candidate_value - value
            x, value, gradient = candidate, candidate_value, candidate_gradient
            step = min(step * 1.5, 1.0)

            exact = objective.exact(x)
            if exact > best_value:
                best_value, best_x = exact, x
            if improvement <= 1e-13 * abs(value):
                break

    return best_value, best_x


def _polish(objective: RatioObjective, x0: np.ndarray, max_dim: int) -> Tuple[float, np.ndarray]:
    """Nelder-Mead on the real coordinates of X, objective scaled by the start value."""
    shape = x0.shape
    dim = 2 * x0.size
    start_value = objective.exact(x0)
    if dim > max_dim or not np.isfinite(start_value) or start_value <= 0.0:
        return start_value, x0

    def unpack(v: np.ndarray) -> np.ndarray:
        return objective.projector(v[:x0.size].reshape(shape) + 1j * v[x0.size:].reshape(shape))

    def cost(v: np.ndarray) -> float:
        x = unpack(v)
        if not np.any(x):
            return 0.0
        value = objective.exact(x)
        return -value / start_value if np.isfinite(value) else 0.0

    start = np.concatenate([x0.real.ravel(), x0.imag.ravel()])
    result = minimize(cost, start, method='Nelder-Mead',
                      options={'maxfev': 400 * dim, 'xatol': 1e-10, 'fatol': 1e-14, 'adaptive': True})
    candidate = unpack(result.x)
    candidate_value = objective.exact(candidate) if np.any(candidate) else -np.inf
    if candidate_value > start_value:
        return candidate_value, candidate / np.linalg.norm(candidate)
    return start_value, x0


def maximize_ratio(objective: RatioObjective, starts: Sequence[np.ndarray],
                   max_iter: int = 200, polish: bool = True,
                   polish_max_dim: int = 50) -> AscentResult:
    """
    Best ratio over ascent runs from each start.

    Starts whose denominator is below the floor are skipped. The result is a
    lower bound on the supremum with a witness that attains it.
    """
    best = AscentResult(value=-np.inf, witness=np.zeros_like(starts[0]))
    for index, start in enumerate(starts):
        projected = objective.projector(np.asarray(start, dtype=complex))
        if not np.any(projected) or not np.isfinite(objective.exact(projected)):
            best.run_values.append(float('nan'))
            continue
        value, witness = _climb(objective, projected, max_iter)
        best.run_values.append(float(value))
        logger.debug(f"  ascent run {index}: {value:.10f}")
        if value > best.value:
            best.value, best.witness = value, witness

    if polish and np.isfinite(best.value):
        polished_value, polished = _polish(objective, best.witness, polish_max_dim)
        if polished_value > best.value:
            logger.debug(f"  polish: {best.value:.10f} -> {polished_value:.10f}")
            best.value, best.witness = polished_value, polished

    return best
