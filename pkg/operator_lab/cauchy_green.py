"""
Cauchy-Green functional calculus for compactly supported C^1 functions.

A function f on the real line is extended to the strip |y| < 1 by

    g0(x + iy) = f(x) + i y * integral phi(s) f'(x - s y) ds
    g = chi(y) * g0

with phi a smooth bump on (-1, 1) and chi a cutoff equal to 1 on |y| <= delta.
Then dbar g vanishes on the real line and for a matrix a with real spectrum

    f(a) ~ -(1/pi) * sum_cells w * dbar g(zeta) * (zeta - a)^{-1}
    T(x) = -(1/pi) * sum_cells w * dbar g(zeta) * (zeta - a)^{-1} x (zeta - a)^{-1}

with [f(a), x] = [a, T(x)] = T([a, x]). Cells closer than twice the grid
step to the spectrum are dropped. The same identities are checked on a
circle contour for functions analytic on the unit disc.
"""

import json
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad, trapezoid

from config import (CONTOUR_NODES, CUTOFF_DELTA, DEFAULT_GRID_STEP, DEFAULT_SAMPLES,
                    DEFAULT_SEED, DEFAULT_TOLERANCE, MOLLIFIER_NODES, QUADRATURE_CHUNK,
                    REFINEMENT_LEVELS)
from utils import complex_to_pair, logger, pair_to_complex, write_json_atomic

from .errors import (DerivativeError, DivergenceError, InputError, ResolutionError,
                     SpectrumError)
from .functions import ScalarFunction, parse_function_spec
from .linalg_core import (apply_function_spectral, as_matrix, batched_resolvents,
                          normality_defect, random_gaussian, spawn_rngs, spectral_norm)
from .models import (BesovDiagnostic, CompactRealFunction, ContourPoint, ExtensionFunction,
                     FunctionClassSpec, IntertwineResiduals, IntertwiningMap, KappaBoundCheck,
                     KappaIntegral, MollifierConfig, PlanarGrid, RefinementPoint,
                     SesquilinearCheck)
from .schur import divided_difference_from_values

MAX_MOLLIFIER_NODES = 512
KAPPA_SAMPLES = 33
DIVERGENCE_RATIO = 0.95
# Cells closer than this many grid steps to an eigenvalue are left out of the quadrature
EXCLUSION_STEPS = 2.0


# ============================================================================
# MOLLIFIER AND CUTOFF
# ============================================================================

def _bump(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    safe = np.where(inside, 1.0 - s ** 2, 1.0)
    return np.where(inside, np.exp(-1.0 / safe), 0.0)


def build_mollifier(delta: float = CUTOFF_DELTA, nodes: int = MOLLIFIER_NODES) -> MollifierConfig:
    """
    Normalized bump exp(-1/(1 - s^2)) / Z on Gauss-Legendre nodes.

    The node count doubles until the weights integrate phi to within 1e-8
    of 1.

    Raises:
        InputError: delta outside (0, 1) or nodes < 2
        ResolutionError: 1e-8 accuracy not reached with MAX_MOLLIFIER_NODES nodes
    """
    if not 0.0 < delta < 1.0:
        raise InputError(f"Cutoff delta must lie in (0, 1), got {delta}")
    if nodes < 2:
        raise InputError(f"Need at least two quadrature nodes, got {nodes}")

    normalization, _ = quad(lambda s: float(_bump(s)), -1.0, 1.0, epsabs=1e-14, epsrel=1e-13)

    count = nodes
    while True:
        s, w = np.polynomial.legendre.leggauss(count)
        phi = _bump(s) / normalization
        integral_error = abs(float(np.sum(w * phi)) - 1.0)
        if integral_error <= 1e-8:
            break
        if count >= MAX_MOLLIFIER_NODES:
            raise ResolutionError("Mollifier quadrature did not reach 1e-8",
                                  {'nodes': count, 'integral_error': integral_error})
        count *= 2

    if count != nodes:
        logger.debug(f"Mollifier nodes raised from {nodes} to {count}")
    phi_prime = phi * (-2.0 * s / (1.0 - s ** 2) ** 2)
    return MollifierConfig(delta=delta, nodes=s, weights=w, phi=phi, phi_prime=phi_prime,
                           normalization=normalization, integral_error=integral_error)


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (10 - 15 * u + 6 * u ** 2)


def cutoff_chi(y: np.ndarray, delta: float) -> Tuple[np.ndarray, np.ndarray]:
    """chi(y) and dchi/dy: 1 on |y| <= delta, 0 on |y| >= 1, quintic smoothstep between."""
    u = (np.abs(y) - delta) / (1.0 - delta)
    chi = 1.0 - _smoothstep(u)
    inside = (u > 0.0) & (u < 1.0)
    slope = np.where(inside, -30 * u ** 2 * (u - 1) ** 2 * np.sign(y) / (1.0 - delta), 0.0)
    return chi, slope


# ============================================================================
# FUNCTIONS AND GRIDS
# ============================================================================

def compact_function_from_scalar(function: ScalarFunction, step: float = DEFAULT_GRID_STEP
                                 ) -> CompactRealFunction:
    """
    Sample a compactly supported function on [-(R + 2), R + 2].

    The analytic derivative is used when the function carries one, otherwise
    second-order central differences of the samples.

    Raises:
        InputError: the function has no support radius or does not vanish outside it
    """
    if function.support_radius is None:
        raise InputError(f"{function.name} is not compactly supported; wrap it as trunc:<spec>")
    radius = float(function.support_radius)
    half = np.ceil((radius + 2.0) / step) * step
    grid = np.linspace(-half, half, int(round(2 * half / step)) + 1)

    values = np.asarray(function(grid), dtype=complex)
    outside = np.abs(grid) > radius
    scale = max(1.0, float(np.max(np.abs(values))))
    if np.any(np.abs(values[outside]) > 1e-12 * scale):
        raise InputError(f"{function.name} does not vanish outside |t| <= {radius}")

    if function.derivative is not None:
        derivative = np.asarray(function.derivative(grid), dtype=complex)
        f_fn = lambda x: function(np.real(x))
        fprime_fn = lambda x: np.asarray(function.derivative(np.real(x)), dtype=complex)
        analytic = True
    else:
        derivative = np.gradient(values, step, edge_order=2)
        f_fn, fprime_fn, analytic = None, None, False

    return CompactRealFunction(sample_grid=grid, f_values=values, fprime_values=derivative,
                               support_radius=radius, step=step, analytic_derivative=analytic,
                               name=function.name, f_fn=f_fn, fprime_fn=fprime_fn)


def _snap(value: float, step: float) -> float:
    return float(np.ceil(value / step - 1e-9) * step)


def uniform_grid(box: Tuple[float, float, float, float], step: float) -> PlanarGrid:
    """Cell-centred grid, row-major with rows along y."""
    xmin, xmax, ymin, ymax = box
    nx = int(round((xmax - xmin) / step))
    ny = int(round((ymax - ymin) / step))
    if nx < 1 or ny < 1:
        raise InputError(f"Grid step {step} too large for box {box}")
    xs = xmin + (np.arange(nx) + 0.5) * step
    ys = ymin + (np.arange(ny) + 0.5) * step
    x_mesh, y_mesh = np.meshgrid(xs, ys)
    count = nx * ny
    return PlanarGrid(centers=(x_mesh + 1j * y_mesh).ravel(), weights=np.full(count, step * step),
                      sizes=np.full(count, step), step=step, box=box,
                      exclusion_margin=EXCLUSION_STEPS * step, shape=(ny, nx))


def _split_cells(centers: np.ndarray, sizes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    quarter = sizes / 4.0
    offsets = np.array([-1 - 1j, 1 - 1j, -1 + 1j, 1 + 1j])
    children = (centers[:, None] + quarter[:, None] * offsets[None, :]).ravel()
    return children, np.repeat(sizes / 2.0, 4)


def refine_near(grid: PlanarGrid, points: np.ndarray, levels: int = REFINEMENT_LEVELS) -> PlanarGrid:
    """Split cells closer than twice their size to any of the points, repeatedly."""
    centers, sizes = grid.centers, grid.sizes
    points = np.asarray(points, dtype=complex).ravel()
    for _ in range(levels):
        distance = np.min(np.abs(centers[:, None] - points[None, :]), axis=1)
        flagged = distance < 2.0 * sizes
        if not np.any(flagged):
            break
        children, child_sizes = _split_cells(centers[flagged], sizes[flagged])
        centers = np.concatenate([centers[~flagged], children])
        sizes = np.concatenate([sizes[~flagged], child_sizes])
    return PlanarGrid(centers=centers, weights=sizes ** 2, sizes=sizes, step=grid.step,
                      box=grid.box, levels=grid.levels + levels,
                      exclusion_margin=grid.exclusion_margin, shape=None)


def distance_to_set(points: np.ndarray, K: Tuple) -> np.ndarray:
    points = np.asarray(points, dtype=complex)
    if K[0] == 'interval':
        lo, hi = K[1], K[2]
        dx = np.maximum.reduce([lo - points.real, np.zeros(points.shape), points.real - hi])
        return np.hypot(dx, points.imag)
    if K[0] == 'points':
        targets = np.asarray(K[1], dtype=complex).ravel()
        return np.min(np.abs(points.ravel()[:, None] - targets[None, :]), axis=1).reshape(points.shape)
    raise InputError(f"Unknown compact set descriptor {K[0]!r}")


def _sample_set(K: Tuple, count: int) -> np.ndarray:
    if K[0] == 'interval':
        return np.linspace(K[1], K[2], count).astype(complex)
    return np.asarray(K[1], dtype=complex).ravel()


# ============================================================================
# EXTENSIONS
# ============================================================================

def _chunked(evaluator: Callable, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    g = np.empty(points.size, dtype=complex)
    core = np.empty(points.size, dtype=complex)
    band = np.empty(points.size, dtype=complex)
    for start in range(0, points.size, QUADRATURE_CHUNK):
        stop = start + QUADRATURE_CHUNK
        g[start:stop], core[start:stop], band[start:stop] = evaluator(points[start:stop])
    return g, core, band


def _mollifier_evaluator(f: CompactRealFunction, cfg: MollifierConfig) -> Callable:
    phi_weights = cfg.weights * cfg.phi
    theta_weights = cfg.weights * cfg.theta

    def evaluate(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        points = np.asarray(points, dtype=complex).ravel()
        x, y = points.real, points.imag
        shifted = x[:, None] - cfg.nodes[None, :] * y[:, None]
        fprime_shifted = f.fprime(shifted)
        fprime_here = f.fprime(x)

        g0 = f.f(x) + 1j * y * (fprime_shifted @ phi_weights)
        dbar_g0 = 0.5 * ((fprime_shifted - fprime_here[:, None]) @ theta_weights)
        chi, chi_slope = cutoff_chi(y, cfg.delta)
        return chi * g0, chi * dbar_g0, g0 * (0.5j * chi_slope)

    return evaluate


def mollifier_extension(f: CompactRealFunction, cfg: Optional[MollifierConfig] = None,
                        step: float = DEFAULT_GRID_STEP) -> ExtensionFunction:
    """
    Extend f to the plane and sample g and dbar g on a uniform grid.

    dbar g is evaluated from the mollifier formula and compared with central
    differences of the sampled g; the discrepancy is stored on the result.

    Raises:
        ResolutionError: step too coarse for the cutoff band, or the two
            dbar evaluations disagree beyond O(step)
    """
    cfg = cfg or build_mollifier()
    if step > cfg.delta / 4.0:
        raise ResolutionError(f"Grid step {step} cannot resolve cutoff delta {cfg.delta}",
                              {'step': step, 'max_step': cfg.delta / 4.0})

    half_x = _snap(f.support_radius + 1.0, step)
    half_y = _snap(1.0, step)
    box = (-half_x, half_x, -half_y, half_y)
    grid = uniform_grid(box, step)
    evaluator = _mollifier_evaluator(f, cfg)
    g, core, band = _chunked(evaluator, grid.centers)
    dbar = core + band

    ny, nx = grid.shape
    g_mesh = g.reshape(ny, nx)
    d_dy, d_dx = np.gradient(g_mesh, step, step, edge_order=2)
    finite_difference = 0.5 * (d_dx + 1j * d_dy)
    discrepancy = float(np.max(np.abs(finite_difference.ravel() - dbar)))
    scale = max(1.0, float(np.max(np.abs(dbar))))
    logger.debug(f"dbar finite-difference discrepancy {discrepancy:.3e} at step {step}")
    if discrepancy > 50.0 * step * scale:
        raise ResolutionError(
            f"dbar g from the mollifier formula and from differences disagree by {discrepancy:.3e}",
            {'step': step, 'discrepancy': discrepancy, 'limit': 50.0 * step * scale},
        )

    return ExtensionFunction(grid=grid, g_values=g, dbar_values=dbar, core_values=core,
                             band_values=band, support_box=box, K=('interval', -half_x, half_x),
                             config=cfg, evaluator=evaluator, source=f,
                             fd_discrepancy=discrepancy)


def synthetic_extension(K: Tuple, alpha: float, radius: float,
                        step: float = DEFAULT_GRID_STEP) -> ExtensionFunction:
    """|dbar g| = dist(zeta, K)^alpha on the disc |zeta| < radius, zero elsewhere."""
    if not 0.0 < alpha <= 1.0:
        raise InputError(f"alpha must lie in (0, 1], got {alpha}")
    if radius <= 0.0:
        raise InputError(f"radius must be positive, got {radius}")

    def evaluate(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        points = np.asarray(points, dtype=complex).ravel()
        inside = np.abs(points) < radius
        core = np.where(inside, distance_to_set(points, K) ** alpha, 0.0).astype(complex)
        zeros = np.zeros(points.size, dtype=complex)
        return zeros, core, zeros

    half = _snap(radius, step)
    box = (-half, half, -half, half)
    grid = uniform_grid(box, step)
    g, core, band = evaluate(grid.centers)
    return ExtensionFunction(grid=grid, g_values=g, dbar_values=core + band, core_values=core,
                             band_values=band, support_box=box, K=K, config=None,
                             evaluator=evaluate, synthetic=True)


# ============================================================================
# KAPPA INTEGRAL
# ============================================================================

def _refined_integral(ext: ExtensionFunction, lam: complex, levels: int
                      ) -> Tuple[List[float], float, float]:
    """Level values of sum w |dbar g| / |zeta - lam|^2 plus final core and band parts."""
    support = np.abs(ext.dbar_values) > 0.0
    centers = ext.grid.centers[support]
    sizes = ext.grid.sizes[support]
    core = np.abs(ext.core_values[support])
    band = np.abs(ext.band_values[support])
    total = np.abs(ext.dbar_values[support])

    def contributions(c, s, t):
        return s ** 2 * t / np.abs(c - lam) ** 2

    value = float(np.sum(contributions(centers, sizes, total)))
    core_sum = float(np.sum(contributions(centers, sizes, core)))
    band_sum = float(np.sum(contributions(centers, sizes, band)))
    values = [value]

    for _ in range(levels):
        flagged = np.abs(centers - lam) < 2.0 * sizes
        if np.any(flagged):
            value -= float(np.sum(contributions(centers[flagged], sizes[flagged], total[flagged])))
            core_sum -= float(np.sum(contributions(centers[flagged], sizes[flagged], core[flagged])))
            band_sum -= float(np.sum(contributions(centers[flagged], sizes[flagged], band[flagged])))

            children, child_sizes = _split_cells(centers[flagged], sizes[flagged])
            _, child_core, child_band = ext.evaluator(children)
            child_total = np.abs(child_core + child_band)
            child_core, child_band = np.abs(child_core), np.abs(child_band)

            value += float(np.sum(contributions(children, child_sizes, child_total)))
            core_sum += float(np.sum(contributions(children, child_sizes, child_core)))
            band_sum += float(np.sum(contributions(children, child_sizes, child_band)))

            keep = ~flagged
            centers = np.concatenate([centers[keep], children])
            sizes = np.concatenate([sizes[keep], child_sizes])
            total = np.concatenate([total[keep], child_total])
            core = np.concatenate([core[keep], child_core])
            band = np.concatenate([band[keep], child_band])
        values.append(value)

    return values, core_sum, band_sum


def kappa_integral(ext: ExtensionFunction, points: Optional[np.ndarray] = None,
                   levels: int = REFINEMENT_LEVELS, n_samples: int = KAPPA_SAMPLES) -> KappaIntegral:
    """
    sup over lam in K of the integral of |dbar g| / |zeta - lam|^2.

    Cells near each sampled lam are subdivided levels times. The error bound
    is the last refinement increment.

    Raises:
        DivergenceError: increments stop shrinking while still significant
    """
    samples = _sample_set(ext.K, n_samples) if points is None else np.asarray(points, dtype=complex).ravel()

    best: Optional[Tuple[float, complex, float, float, List[float]]] = None
    error_bound = 0.0
    for lam in samples:
        values, core_sum, band_sum = _refined_integral(ext, complex(lam), levels)
        increments = np.abs(np.diff(values))
        if increments.size:
            error_bound = max(error_bound, float(increments[-1]))
        if (increments.size >= 2 and increments[-1] >= DIVERGENCE_RATIO * increments[-2]
                and increments[-1] > 1e-3 * abs(values[-1])):
            raise DivergenceError(
                f"kappa integral does not settle under refinement at lambda={complex(lam)}",
                {'level_values': values, 'lambda': complex_to_pair(lam)},
            )
        if best is None or values[-1] > best[0]:
            best = (values[-1], complex(lam), core_sum, band_sum, values)

    value, worst_point, core_sum, band_sum, level_values = best
    logger.debug(f"kappa integral {value:.6f} (+/- {error_bound:.2e}) at {worst_point}")
    return KappaIntegral(value=value, error_bound=error_bound, core=core_sum, band=band_sum,
                         worst_point=worst_point, level_values=level_values)


def kappa_bound_check(ext: ExtensionFunction, alpha: float,
                      integral: Optional[KappaIntegral] = None) -> KappaBoundCheck:
    """
    Compare the kappa integral with 2 pi beta R^alpha / alpha.

    beta = max |dbar g| / dist(zeta, K)^alpha over the sampled cells and R
    bounds |zeta - lam| over the support for every lam in K.
    """
    if not 0.0 < alpha <= 1.0:
        raise InputError(f"alpha must lie in (0, 1], got {alpha}")
    support = np.abs(ext.dbar_values) > 0.0
    if not np.any(support):
        integral = integral or kappa_integral(ext)
        return KappaBoundCheck(beta=0.0, alpha=alpha, radius=0.0, bound=0.0,
                               kappa=integral.value, error_bound=integral.error_bound,
                               holds=integral.value <= integral.error_bound)

    centers = ext.grid.centers[support]
    distance = distance_to_set(centers, ext.K)
    beta = float(np.max(np.abs(ext.dbar_values[support]) / distance ** alpha))

    anchors = (np.array([ext.K[1], ext.K[2]], dtype=complex) if ext.K[0] == 'interval'
               else np.asarray(ext.K[1], dtype=complex).ravel())
    half_diagonal = float(np.max(ext.grid.sizes[support])) / np.sqrt(2.0)
    radius = float(np.max(np.abs(centers[:, None] - anchors[None, :]))) + half_diagonal

    integral = integral or kappa_integral(ext)
    bound = 2.0 * np.pi * beta * radius ** alpha / alpha
    holds = integral.value <= bound + integral.error_bound
    if not holds:
        logger.warning(f"kappa integral {integral.value:.6f} exceeds bound {bound:.6f}")
    return KappaBoundCheck(beta=beta, alpha=alpha, radius=radius, bound=float(bound),
                           kappa=integral.value, error_bound=integral.error_bound, holds=holds)


# ============================================================================
# QUADRATURE CALCULUS
# ============================================================================

def _check_spectrum(a: np.ndarray, K: Tuple, tol: float) -> np.ndarray:
    eigenvalues = np.linalg.eigvals(a)
    scale = max(1.0, spectral_norm(a))
    if K[0] == 'interval':
        escaped = ((np.abs(eigenvalues.imag) > tol * scale) | (eigenvalues.real < K[1])
                   | (eigenvalues.real > K[2]))
    else:
        escaped = distance_to_set(eigenvalues, K) > tol * scale
    if np.any(escaped):
        raise SpectrumError("Spectrum of a is not contained in K",
                            {'escaped': [complex_to_pair(z) for z in eigenvalues[escaped]]})
    return eigenvalues


def _quadrature_cells(a: np.ndarray, ext: ExtensionFunction, grid: Optional[PlanarGrid],
                      tol: float) -> Tuple[np.ndarray, np.ndarray]:
    """Centers and coefficients w * dbar g of the cells used for a."""
    eigenvalues = _check_spectrum(a, ext.K, tol)
    if normality_defect(a) > tol * max(1.0, spectral_norm(a)) ** 2:
        logger.warning("a is not normal; quadrature results are reported without an oracle")

    if grid is None:
        grid = ext.grid
        centers, weights, dbar = grid.centers, grid.weights, ext.dbar_values
    else:
        centers, weights = grid.centers, grid.weights
        dbar = ext.dbar(centers)
    margin = grid.exclusion_margin

    distance = np.min(np.abs(centers[:, None] - eigenvalues[None, :]), axis=1)
    keep = (dbar != 0) & (distance >= margin)
    logger.debug(f"{int(np.sum(keep))} quadrature cells, exclusion margin {margin}")
    return centers[keep], weights[keep] * dbar[keep]


def cg_functional_calculus(a, ext: ExtensionFunction, grid: Optional[PlanarGrid] = None,
                           tol: float = DEFAULT_TOLERANCE) -> np.ndarray:
    """
    -(1/pi) sum w dbar g(zeta) (zeta - a)^{-1}.

    Raises:
        SpectrumError: an eigenvalue of a lies outside K
    """
    a = as_matrix(a, 'a', square=True)
    centers, coefficients = _quadrature_cells(a, ext, grid, tol)
    total = np.zeros(a.shape, dtype=complex)
    for start in range(0, centers.size, QUADRATURE_CHUNK):
        stop = start + QUADRATURE_CHUNK
        resolvents = batched_resolvents(a, centers[start:stop])
        total += np.einsum('k,kij->ij', coefficients[start:stop], resolvents)
    return -total / np.pi


def build_T(a, ext: ExtensionFunction, grid: Optional[PlanarGrid] = None,
            tol: float = DEFAULT_TOLERANCE) -> IntertwiningMap:
    """The intertwining map on the same cells as cg_functional_calculus."""
    a = as_matrix(a, 'a', square=True)
    n = a.shape[0]
    centers, coefficients = _quadrature_cells(a, ext, grid, tol)

    kernel = np.zeros((n * n, n * n), dtype=complex)
    function_value = np.zeros((n, n), dtype=complex)
    for start in range(0, centers.size, QUADRATURE_CHUNK):
        stop = start + QUADRATURE_CHUNK
        resolvents = batched_resolvents(a, centers[start:stop])
        flat = resolvents.reshape(-1, n * n)
        weights = coefficients[start:stop]
        kernel += (weights[:, None] * flat).T @ flat
        function_value += np.einsum('k,kij->ij', weights, resolvents)

    return IntertwiningMap(kernel=kernel.reshape(n, n, n, n), function_value=-function_value / np.pi,
                           scale=-1.0 / np.pi, label='cauchy-green', cells=int(centers.size))


def cg_refinement_study(a, function: ScalarFunction, steps: Sequence[float] = (2e-2, 1e-2, 5e-3),
                        cfg: Optional[MollifierConfig] = None,
                        tol: float = DEFAULT_TOLERANCE) -> List[RefinementPoint]:
    """
    Error of cg_functional_calculus for each grid step.

    For normal a the error is measured against the spectral f(a). For
    non-normal a there is no oracle, so each step is compared with the one
    before it and no pass/fail is implied.
    """
    a = as_matrix(a, 'a', square=True)
    cfg = cfg or build_mollifier()
    oracle = None
    if normality_defect(a) <= tol * max(1.0, spectral_norm(a)) ** 2:
        oracle = apply_function_spectral(a, function, tol)
    else:
        logger.warning("a is not normal; refinement errors are differences between successive steps")

    study: List[RefinementPoint] = []
    previous = None
    for step in steps:
        ext = mollifier_extension(compact_function_from_scalar(function, step), cfg, step)
        value = cg_functional_calculus(a, ext, tol=tol)
        if oracle is not None:
            error = spectral_norm(value - oracle)
        else:
            error = None if previous is None else spectral_norm(value - previous)
        previous = value

        order = None
        last = study[-1] if study else None
        if last is not None and last.error and error:
            order = float(np.log(last.error / error) / np.log(last.step / step))
        study.append(RefinementPoint(step=step, error=error, order=order,
                                     oracle='spectral' if oracle is not None else 'successive'))
        shown = 'n/a' if error is None else f"{error:.3e}"
        logger.info(f"  step {step:.4g}: error {shown}" + (f", order {order:.2f}" if order else ''))
    return study


def _test_matrices(n: int, samples: int, seed: int) -> List[np.ndarray]:
    matrices = [np.eye(n, dtype=complex)]
    matrices.extend(random_gaussian((n, n), rng) for rng in spawn_rngs(seed, samples))
    return matrices


def verify_intertwine(a, ext: ExtensionFunction, T: IntertwiningMap, samples: int = 20,
                      seed: int = DEFAULT_SEED, tol: float = DEFAULT_TOLERANCE) -> IntertwineResiduals:
    """
    Residuals of [f(a), x] = [a, T(x)] = T([a, x]) over sampled x.

    For normal a the reference f(a) is spectral; otherwise the quadrature
    value is the only reference and oracle is 'quadrature'.
    """
    a = as_matrix(a, 'a', square=True)
    discrete = T.function_value
    exact, oracle = discrete, 'quadrature'
    if ext.source is not None and normality_defect(a) <= tol * max(1.0, spectral_norm(a)) ** 2:
        exact, oracle = apply_function_spectral(a, ext.source.f, tol), 'spectral'

    worst = np.zeros(4)
    for x in _test_matrices(a.shape[0], samples, seed):
        norm_x = spectral_norm(x)
        left = a @ T(x) - T(x) @ a
        right = T(a @ x - x @ a)
        exact_commutator = exact @ x - x @ exact
        discrete_commutator = discrete @ x - x @ discrete
        worst = np.maximum(worst, np.array([
            spectral_norm(exact_commutator - left), spectral_norm(exact_commutator - right),
            spectral_norm(discrete_commutator - left), spectral_norm(discrete_commutator - right),
        ]) / norm_x)

    return IntertwineResiduals(res1=float(worst[0]), res2=float(worst[1]),
                               discrete_res1=float(worst[2]), discrete_res2=float(worst[3]),
                               oracle=oracle)


def sesquilinear_bound_check(T: IntertwiningMap, kappa: float, samples: int = DEFAULT_SAMPLES,
                             seed: int = DEFAULT_SEED, quadrature_error: float = 0.0
                             ) -> SesquilinearCheck:
    """||T(x)|| <= (2/pi) kappa ||x|| on sampled x."""
    n = T.function_value.shape[0]
    worst = 0.0
    for x in _test_matrices(n, samples, seed):
        worst = max(worst, spectral_norm(T(x)) / spectral_norm(x))
    bound = 2.0 * kappa / np.pi
    return SesquilinearCheck(worst_ratio=worst, bound=bound, holds=worst <= bound + quadrature_error)


# ============================================================================
# REGULARITY DIAGNOSTICS
# ============================================================================

def besov_criterion(f: CompactRealFunction, n_h: int = 64) -> BesovDiagnostic:
    """
    integral of ||f'(. - h) - f'||_inf / h over [step, 1] on a log grid.

    tail_slope is the log-log slope of the sup norm over the smallest
    third of h (at least four grid steps); a slope near 0 means the
    integral diverges as the lower limit goes to 0.
    """
    h_values = np.logspace(np.log10(f.step), 0.0, n_h)
    x = np.concatenate([f.sample_grid, f.sample_grid + 0.5 * f.step])
    base = f.fprime(x)
    deltas = np.array([float(np.max(np.abs(f.fprime(x - h) - base))) for h in h_values])
    value = float(trapezoid(deltas, np.log(h_values)))

    slope = None
    candidates = np.nonzero((h_values >= 4 * f.step) & (deltas > 0))[0]
    tail = candidates[:max(3, candidates.size // 3)]
    if tail.size >= 3:
        slope = float(np.polyfit(np.log(h_values[tail]), np.log(deltas[tail]), 1)[0])
    diverges = slope is not None and slope <= 0.05
    return BesovDiagnostic(value=value, tail_slope=slope, diverges=diverges,
                           h_values=h_values, deltas=deltas)


def _pair_indices(n: int, budget: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """All pairs when affordable, else dyadic offsets plus random pairs."""
    if n * (n - 1) // 2 <= budget:
        i, j = np.triu_indices(n, k=1)
        return i, j
    firsts, seconds = [], []
    offset = 1
    while offset < n:
        start = np.arange(n - offset)
        firsts.append(start)
        seconds.append(start + offset)
        offset *= 2
    used = sum(len(s) for s in firsts)
    extra = max(budget - used, 0)
    if extra:
        i = rng.integers(0, n, extra)
        j = rng.integers(0, n, extra)
        distinct = i != j
        firsts.append(i[distinct])
        seconds.append(j[distinct])
    return np.concatenate(firsts), np.concatenate(seconds)


def _class_constants(xs: np.ndarray, values: np.ndarray, derivative: np.ndarray, alpha: float,
                     budget: int, rng: np.random.Generator) -> Tuple[float, float, Tuple[int, int], int]:
    i, j = _pair_indices(xs.size, budget, rng)
    gap = np.abs(xs[j] - xs[i])
    forward = np.abs(values[j] - values[i] - derivative[i] * (xs[j] - xs[i]))
    backward = np.abs(values[i] - values[j] - derivative[j] * (xs[i] - xs[j]))
    taylor = np.maximum(forward, backward) / gap ** (1.0 + alpha)
    holder = np.abs(derivative[j] - derivative[i]) / gap ** alpha

    taylor_index = int(np.argmax(taylor))
    holder_index = int(np.argmax(holder))
    if taylor[taylor_index] >= holder[holder_index]:
        pair = (int(i[taylor_index]), int(j[taylor_index]))
    else:
        pair = (int(i[holder_index]), int(j[holder_index]))
    return float(taylor[taylor_index]), float(holder[holder_index]), pair, int(i.size)


def class_membership(function: Callable, alpha: float, interval: Tuple[float, float] = (-1.0, 1.0),
                     step: float = 1e-3, pair_budget: int = 200000,
                     seed: int = DEFAULT_SEED) -> FunctionClassSpec:
    """
    Smallest constants with

        |f(z) - f(z0) - f'(z0)(z - z0)| <= kappa |z - z0|^(1 + alpha)
        |f'(z) - f'(z0)| <= kappa |z - z0|^alpha

    over sampled pairs of an interval. f' comes from second-order central
    differences on the sample grid. diverges is set when halving the grid
    step raises the constant by more than 30 %, which is how an exponent
    that is too large shows up on a finite grid.

    Raises:
        DerivativeError: forward and central difference quotients disagree
            beyond 10 * max(1, max|f|) * sqrt(step)
    """
    if not 0.0 < alpha <= 1.0:
        raise InputError(f"alpha must lie in (0, 1], got {alpha}")
    lo, hi = interval
    count = int(round((hi - lo) / step)) + 1
    if count < 5:
        raise InputError(f"Interval {interval} has too few samples at step {step}")
    xs = np.linspace(lo, hi, count)
    values = np.asarray(function(xs.astype(complex)), dtype=complex)
    if not np.all(np.isfinite(values)):
        raise DerivativeError("f produced non-finite samples")

    derivative = np.gradient(values, xs, edge_order=2)
    forward = np.diff(values) / np.diff(xs)
    oscillation = float(np.max(np.abs(forward - derivative[:-1])))
    limit = 10.0 * max(1.0, float(np.max(np.abs(values)))) * np.sqrt(step)
    if oscillation > limit:
        raise DerivativeError(f"Difference quotients of f are unstable (oscillation {oscillation:.3e})",
                              {'oscillation': oscillation, 'limit': limit, 'step': step})

    rng = np.random.default_rng(seed)
    taylor, holder, pair, checked = _class_constants(xs, values, derivative, alpha, pair_budget, rng)
    coarse_taylor, coarse_holder, _, _ = _class_constants(xs[::2], values[::2], derivative[::2], alpha,
                                                       pair_budget, rng)
    kappa = max(taylor, holder)
    coarse = max(coarse_taylor, coarse_holder)
    diverges = kappa > 1.3 * coarse and kappa > 1e-8
    if diverges:
        logger.info(f"Class constant grows under refinement ({coarse:.4g} -> {kappa:.4g}) "
                    f"near ({xs[pair[0]]:.4g}, {xs[pair[1]]:.4g})")
    return FunctionClassSpec(alpha=alpha, kappa_const=kappa, kappa_taylor=taylor,
                             kappa_derivative=holder,
                             binding_pair=(float(xs[pair[0]]), float(xs[pair[1]])),
                             verified_pairs=checked,
                             diverges=diverges)


# ============================================================================
# DISC CONTOUR
# ============================================================================

def coefficients_from_samples(samples: np.ndarray) -> np.ndarray:
    """Taylor coefficients from equispaced values on the unit circle; negative frequencies dropped."""
    samples = np.asarray(samples, dtype=complex).ravel()
    if samples.size < 2:
        raise InputError("Need at least two boundary samples")
    return np.fft.fft(samples)[: samples.size // 2] / samples.size


def horner_matrix(coefficients: np.ndarray, a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    result = np.zeros((n, n), dtype=complex)
    for c in coefficients[::-1]:
        result = result @ a + c * np.eye(n)
    return result


def disc_contour_T(a, coefficients: Optional[Sequence[complex]] = None,
                   boundary_samples: Optional[Sequence[complex]] = None, r: float = 0.5,
                   nodes: int = CONTOUR_NODES) -> IntertwiningMap:
    """
    Trapezoidal rule on |zeta| = (1 + rho) / 2 for the map

        x -> (1/2 pi i) integral f(r zeta) (zeta - a)^{-1} x (zeta - a)^{-1} dzeta

    where rho is the spectral radius of a.

    Raises:
        SpectrumError: rho >= 1
        InputError: neither or both of coefficients and boundary_samples, r outside (0, 1)
    """
    a = as_matrix(a, 'a', square=True)
    if (coefficients is None) == (boundary_samples is None):
        raise InputError("Give exactly one of coefficients and boundary_samples")
    if not 0.0 < r < 1.0:
        raise InputError(f"r must lie in (0, 1), got {r}")
    if nodes < 1:
        raise InputError(f"nodes must be positive, got {nodes}")
    series = (np.asarray(coefficients, dtype=complex) if coefficients is not None
              else coefficients_from_samples(boundary_samples))

    rho = float(np.max(np.abs(np.linalg.eigvals(a))))
    if rho >= 1.0 - 1e-12:
        raise SpectrumError(f"Spectral radius {rho:.6f} reaches the unit circle", {'rho': rho})
    radius = 0.5 * (1.0 + rho)

    n = a.shape[0]
    zetas = radius * np.exp(2j * np.pi * np.arange(nodes) / nodes)
    weights = np.polynomial.polynomial.polyval(r * zetas, series) * zetas
    resolvents = batched_resolvents(a, zetas)
    flat = resolvents.reshape(nodes, n * n)
    kernel = ((weights[:, None] * flat).T @ flat).reshape(n, n, n, n)
    function_value = np.einsum('k,kij->ij', weights, resolvents) / nodes
    return IntertwiningMap(kernel=kernel, function_value=function_value, scale=1.0 / nodes,
                           label='disc-contour', cells=nodes, radius=radius)


def contour_residual(a: np.ndarray, T: IntertwiningMap, coefficients: np.ndarray, r: float,
                     samples: int = 10, seed: int = DEFAULT_SEED) -> float:
    """max ||[f_r(a), x] - [a, T(x)]|| / ||x|| with f_r(a) from Horner's rule."""
    scaled = np.asarray(coefficients, dtype=complex) * r ** np.arange(len(coefficients))
    exact = horner_matrix(scaled, a)
    worst = 0.0
    for x in _test_matrices(a.shape[0], samples, seed):
        left = a @ T(x) - T(x) @ a
        worst = max(worst, spectral_norm(exact @ x - x @ exact - left) / spectral_norm(x))
    return worst


def contour_node_study(a, coefficients: Sequence[complex], r: float = 0.5,
                       node_counts: Sequence[int] = (4, 8, 16, 32, 64, 128),
                       samples: int = 10, seed: int = DEFAULT_SEED) -> List[ContourPoint]:
    a = as_matrix(a, 'a', square=True)
    series = np.asarray(coefficients, dtype=complex)
    study = []
    for nodes in node_counts:
        T = disc_contour_T(a, coefficients=series, r=r, nodes=nodes)
        study.append(ContourPoint(nodes=nodes, residual=contour_residual(a, T, series, r, samples, seed)))
    return study


def contour_schur_crosscheck(a, coefficients: Sequence[complex], r: float = 0.5,
                             nodes: int = CONTOUR_NODES, seed: int = DEFAULT_SEED) -> float:
    """
    For diagonal a, T(x) is the Schur product of x with the divided
    differences of f_r (derivatives on the diagonal). Returns the max
    entrywise discrepancy on a random x.
    """
    a = as_matrix(a, 'a', square=True)
    if np.any(np.abs(a - np.diag(np.diag(a))) > 0):
        raise InputError("contour_schur_crosscheck needs a diagonal matrix")
    series = np.asarray(coefficients, dtype=complex) * r ** np.arange(len(coefficients))
    points = np.diag(a)
    values = np.polynomial.polynomial.polyval(points, series)
    derivative = np.polynomial.polynomial.polyval(points, np.polynomial.polynomial.polyder(series))

    divided = divided_difference_from_values(points, values).entries
    coincide = points[:, None] == points[None, :]
    divided = np.where(coincide, derivative[:, None] * np.ones_like(divided), divided)

    x = random_gaussian(a.shape, spawn_rngs(seed, 1)[0])
    T = disc_contour_T(a, coefficients=coefficients, r=r, nodes=nodes)
    return float(np.max(np.abs(T(x) - divided * x)))


# ============================================================================
# JSON BUNDLES
# ============================================================================

def save_extension_bundle(ext: ExtensionFunction, path: str, function_spec: Optional[str] = None,
                          alpha: Optional[float] = None, radius: Optional[float] = None) -> str:
    """Write grid, g, dbar g and the parameters that rebuild the extension."""
    if ext.K[0] == 'interval':
        K = {'kind': 'interval', 'lo': float(ext.K[1]), 'hi': float(ext.K[2])}
    else:
        K = {'kind': 'points', 'points': [complex_to_pair(z) for z in np.ravel(ext.K[1])]}
    bundle = {
        'function': function_spec,
        'synthetic': {'alpha': alpha, 'radius': radius} if ext.synthetic else None,
        'config': None if ext.config is None else {'delta': ext.config.delta,
                                                   'nodes': int(ext.config.nodes.size)},
        'grid': {'box': list(ext.grid.box), 'step': ext.grid.step, 'shape': list(ext.grid.shape),
                 'exclusion_margin': ext.grid.exclusion_margin},
        'K': K,
        'g': [complex_to_pair(z) for z in ext.g_values],
        'dbar': [complex_to_pair(z) for z in ext.dbar_values],
        'fd_discrepancy': ext.fd_discrepancy,
    }
    return write_json_atomic(path, bundle)


def load_extension_bundle(path: str, atol: float = 1e-9) -> ExtensionFunction:
    """
    Rebuild an extension from a bundle and check it against the stored samples.

    Raises:
        InputError: unreadable bundle, or stored samples that do not match the rebuild
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            bundle = json.load(f)
        step = float(bundle['grid']['step'])
        K_data = bundle['K']
        if K_data['kind'] == 'interval':
            K = ('interval', float(K_data['lo']), float(K_data['hi']))
        else:
            K = ('points', np.array([pair_to_complex(p) for p in K_data['points']]))
        stored = np.array([pair_to_complex(p) for p in bundle['dbar']])
    except (OSError, KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
        raise InputError(f"Could not read extension bundle {path}: {e}")

    if bundle.get('synthetic'):
        params = bundle['synthetic']
        ext = synthetic_extension(K, float(params['alpha']), float(params['radius']), step)
    elif bundle.get('function'):
        config = bundle.get('config') or {}
        cfg = build_mollifier(float(config.get('delta', CUTOFF_DELTA)),
                              int(config.get('nodes', MOLLIFIER_NODES)))
        source = compact_function_from_scalar(parse_function_spec(bundle['function']), step)
        ext = mollifier_extension(source, cfg, step)
    else:
        raise InputError(f"Bundle {path} names neither a function nor a synthetic extension")

    if stored.shape != ext.dbar_values.shape:
        raise InputError("Bundle grid does not match the rebuilt extension")
    mismatch = float(np.max(np.abs(stored - ext.dbar_values))) if stored.size else 0.0
    if mismatch > atol * max(1.0, float(np.max(np.abs(stored))) if stored.size else 1.0):
        raise InputError(f"Bundle samples differ from the rebuilt extension by {mismatch:.3e}")
    return ext
