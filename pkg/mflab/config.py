from os import getenv
from dotenv import load_dotenv

# Load environment variables from .env file or set default values
load_dotenv()

# Lattice limits
MODE_CAP = int(getenv('MFLAB_MODE_CAP', 14))
BETA_CAP = float(getenv('MFLAB_BETA_CAP', 200))

# Numerical tolerances
HERMITIAN_TOLERANCE = float(getenv('MFLAB_HERMITIAN_TOLERANCE', 1e-10))
FAITHFUL_TOLERANCE = float(getenv('MFLAB_FAITHFUL_TOLERANCE', 1e-14))
STATE_TOLERANCE = float(getenv('MFLAB_STATE_TOLERANCE', 1e-12))
GENERATOR_TOLERANCE = float(getenv('MFLAB_GENERATOR_TOLERANCE', 1e-8))
POSITIVITY_FLOOR = float(getenv('MFLAB_POSITIVITY_FLOOR', 1e-10))
POSITIVITY_LIMIT = float(getenv('MFLAB_POSITIVITY_LIMIT', 1e-6))
UNITARITY_TOLERANCE = float(getenv('MFLAB_UNITARITY_TOLERANCE', 1e-8))
TRACE_DRIFT_TOLERANCE = float(getenv('MFLAB_TRACE_DRIFT_TOLERANCE', 1e-10))
DENSE_MODULAR_LIMIT = int(getenv('MFLAB_DENSE_MODULAR_LIMIT', 16))

# Solver defaults
DAMPING = float(getenv('MFLAB_DAMPING', 0.5))
RESTARTS = int(getenv('MFLAB_RESTARTS', 8))
FIXED_POINT_TOLERANCE = float(getenv('MFLAB_FIXED_POINT_TOLERANCE', 1e-12))
MAX_ITERATIONS = int(getenv('MFLAB_MAX_ITERATIONS', 500))
CLUSTER_DISTANCE = float(getenv('MFLAB_CLUSTER_DISTANCE', 1e-6))
CONSERVATIVE_TOLERANCE = float(getenv('MFLAB_CONSERVATIVE_TOLERANCE', 1e-6))
MAXIMALITY_SAMPLES = int(getenv('MFLAB_MAXIMALITY_SAMPLES', 8))
VARIATIONAL_SAMPLES = int(getenv('MFLAB_VARIATIONAL_SAMPLES', 50))
MAX_HALVINGS = int(getenv('MFLAB_MAX_HALVINGS', 6))

# Grid caps
GRID_CELL_CAP = int(getenv('MFLAB_GRID_CELL_CAP', 250000))
SWEEP_CELL_CAP = int(getenv('MFLAB_SWEEP_CELL_CAP', 64))

# Worker pool
WORKER_POLL_SECONDS = float(getenv('MFLAB_WORKER_POLL_SECONDS', 5))

# Application settings
OUTPUT_PATH = getenv('OUTPUT_PATH', 'mflab-out')
WORKERS = int(getenv('WORKERS', 1))
