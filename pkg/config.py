"""
Configuration Module for the Operator Lab

This module centralizes all configuration values:
- Numerical tolerances and iteration caps
- Seeds and restart counts for randomized searches
- Planar quadrature and contour defaults
- Report output location

Every value can be overridden through environment variables (or a .env file).
The CLI layers its --config file and flags on top of these defaults.
"""

import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


# ============================================================================
# ALGEBRAIC TOLERANCES
# ============================================================================

# Default relative tolerance for algebraic checks (normality, residuals, fits)
DEFAULT_TOLERANCE: float = float(os.getenv('OPLAB_TOLERANCE', '1e-9'))

# Width the Schur-norm bracket should close to before the solver gives up
SCHUR_BRACKET_TOLERANCE: float = float(os.getenv('OPLAB_SCHUR_TOLERANCE', '1e-3'))

# Tolerance for "norm equality" in commutator structure recovery
EQUALITY_TOLERANCE: float = float(os.getenv('OPLAB_EQUALITY_TOLERANCE', '1e-3'))


# ============================================================================
# RANDOMIZED SEARCH
# ============================================================================

DEFAULT_SEED: int = int(os.getenv('OPLAB_SEED', '0'))

# Seeded restarts for witness and ratio ascents
DEFAULT_RESTARTS: int = int(os.getenv('OPLAB_RESTARTS', '20'))

# Restarts used when testing norm equality of two derivations
EQUALITY_RESTARTS: int = int(os.getenv('OPLAB_EQUALITY_RESTARTS', '50'))

# Unit vectors sampled when checking variance identities
DEFAULT_SAMPLES: int = int(os.getenv('OPLAB_SAMPLES', '200'))


# ============================================================================
# SCHUR MULTIPLIER SOLVER
# ============================================================================

# Dykstra iteration cap per feasibility solve
SCHUR_MAX_ITER: int = int(os.getenv('OPLAB_SCHUR_MAX_ITER', '10000'))

# Bisection depth on the factorization bound t
BISECTION_DEPTH: int = int(os.getenv('OPLAB_BISECTION_DEPTH', '30'))

# Largest matrix the PSD certification accepts
SCHUR_MAX_DIM: int = int(os.getenv('OPLAB_SCHUR_MAX_DIM', '64'))

# Largest amplified dimension n*dim accepted by the amplification check
AMPLIFY_MAX_DIM: int = int(os.getenv('OPLAB_AMPLIFY_MAX_DIM', '256'))


# ============================================================================
# PLANAR QUADRATURE (CAUCHY-GREEN CALCULUS)
# ============================================================================

DEFAULT_GRID_STEP: float = float(os.getenv('OPLAB_GRID_STEP', '1e-2'))

# Dyadic subdivision levels near singular points
REFINEMENT_LEVELS: int = int(os.getenv('OPLAB_REFINEMENT_LEVELS', '4'))

# Half-width of the strip on which the cutoff equals 1
CUTOFF_DELTA: float = float(os.getenv('OPLAB_CUTOFF_DELTA', '0.25'))

# Gauss-Legendre nodes for the mollifier integral over [-1, 1]
MOLLIFIER_NODES: int = int(os.getenv('OPLAB_S_NODES', '64'))

# Cells evaluated per vectorized batch
QUADRATURE_CHUNK: int = int(os.getenv('OPLAB_QUADRATURE_CHUNK', '20000'))

# Trapezoid nodes on the disc contour
CONTOUR_NODES: int = int(os.getenv('OPLAB_CONTOUR_NODES', '128'))


# ============================================================================
# REPORT CONFIGURATION
# ============================================================================

# Default directory for saving reports
DEFAULT_OUTPUT_DIR: str = os.getenv('OPLAB_OUTPUT_DIR', './oplab_reports')

LOG_LEVEL: str = os.getenv('OPLAB_LOG_LEVEL', 'INFO')


# Validation: fail fast on values no computation can use
if DEFAULT_TOLERANCE <= 0 or SCHUR_BRACKET_TOLERANCE <= 0 or EQUALITY_TOLERANCE <= 0:
    raise ValueError(
        "Tolerances must be positive! Check OPLAB_TOLERANCE, "
        "OPLAB_SCHUR_TOLERANCE and OPLAB_EQUALITY_TOLERANCE in .env file"
    )

if not 0.0 < CUTOFF_DELTA < 1.0:
    raise ValueError(f"OPLAB_CUTOFF_DELTA must lie in (0, 1), got {CUTOFF_DELTA}")

if DEFAULT_GRID_STEP <= 0:
    raise ValueError(f"OPLAB_GRID_STEP must be positive, got {DEFAULT_GRID_STEP}")
