from pathlib import Path


RANDOM_SEED = 16

# Location of the built-in topology documents, addressed by file stem
PRESETS_PATH = Path(__file__).parent / 'presets'

# --- Simulation defaults (IEEE 14-bus experiment) ---

# LMS step size shared by all buses
STEP_SIZE = 0.018

# Reweighted zero attraction: shrinkage intensity and magnitude
SHRINKAGE_INTENSITY = 0.07
SHRINKAGE_MAGNITUDE = 10.0

NUM_RUNS = 100
NUM_ITERATIONS = 1000

# Bus whose phase angle gap is reported by default
GAP_BUS = 5

# Standard deviation of the i.i.d. entries of random-gaussian regressors
REGRESSOR_STD = 1.0

# Normal draws, summed over all bus streams, fetched at once when generating measurements
MEASUREMENT_BLOCK = 2 ** 16

ALGORITHMS = ['atc', 'mcse', 'desta', 'dsita']
COMBINERS = ['hastings', 'metropolis']
REGRESSOR_SCHEMES = ['random-gaussian', 'dc-jacobian']
GAP_DEFINITIONS = ['own', 'l1']

# Tolerance used when validating that weight rows sum to one
WEIGHT_TOLERANCE = 1e-12

# Float format of every exported CSV
CSV_FLOAT_FORMAT = '%.12e'
