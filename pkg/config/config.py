"""
Default settings for slipflow runs.

Every value here can be overridden from a config file section of the same
name (see config/loader.py).
"""
import os

# Base directory of the project
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# Output settings
RUNS_DIR = os.environ.get("SLIPFLOW_OUT", os.path.join(BASE_DIR, "runs"))
ENV_PREFIX = "SLIPFLOW_"

# Geometry defaults
DEFAULT_RADIUS = 1.0
DEFAULT_THETA_MAX = 1.5707963267948966
DEFAULT_HEIGHT = 1.0
DEFAULT_RESOLUTION = 32
MIN_RESOLUTION = 8

# Physics defaults
DEFAULT_MU = 1.0
DEFAULT_ALPHA = 0.0

# Solver tolerances
PROJECTION_TOL = 1e-9
POISSON_TOL = 1e-10
POISSON_MAX_ITER = 20000
POISSON_METHOD = "cg"  # Options: cg, direct
RESOLVENT_TOL = 1e-10
RESOLVENT_MAX_ITER = 5000
RESOLVENT_METHOD = "direct"  # Options: direct, cg
EIGEN_TOL = 1e-8
EIGEN_MAX_ITER = 400
EIGEN_SHIFT_FACTOR = 1e-4  # shift = factor * mu / area
KERNEL_TOL = 1e-6  # eigenvalue <= KERNEL_TOL * next eigenvalue marks the kernel
COMPAT_TOL = 1e-8
ASSEMBLY_LIMIT = 40000  # largest unknown count for explicit sparse assembly
LINEARIZATION_DEFECT_TOL = 1e-6

# Time integration
CFL = 0.5
DEFAULT_DT = 0.01
DEFAULT_T_END = 5.0
OUTPUT_EVERY = 1
SNAPSHOT_EVERY = 0
STOP_THRESHOLD = 0.0
ENERGY_SLACK = 1e-10
ENERGY_IDENTITY_TOL = 0.1  # relative residual of dE/dt + a(u, u) along a run
FIT_WINDOW = 0.5  # trailing fraction of samples used for decay fits
DEGENERATE_NORM = 1e-12

# Random initial data (numpy PCG64)
DEFAULT_SEED = 0
DEFAULT_AMPLITUDE = 1.0
RANDOM_MODES = 4

# Analysis tasks
EIGEN_COUNT = 10
IDENTITY_SAMPLES = 20
IDENTITY_ORDER_BAND = (1.7, 2.3)
IDENTITY_MARGIN = 0.2  # fraction of the chart excluded near poles and edges
EXACT_RESIDUAL = 1e-12
KORN_VARIATION = 0.05
HELMHOLTZ_CHECK_TOL = 1e-8  # idempotency, annihilation, symmetry and divergence checks
LINEARIZED_KERNEL_TOL = 1e-6
SPECTRUM_FLOOR = 1e-8  # eigenvalues below -SPECTRUM_FLOOR * largest |eigenvalue| fail
KERNEL_ANGLE_TOL = 1e-3
SMOOTHNESS_TOL = 1e-6
CONSERVATION_TOL = 1e-6  # Killing drift per unit time relative to the initial norm
