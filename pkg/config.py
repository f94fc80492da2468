# Configuration file for LossRank

# Gamma loss distribution
K_MAX = 32  # Largest supported integer shape for the closed forms
DEFAULT_SHAPE = 4
DEFAULT_SCALE = 0.066  # Scale fitted to the pose-estimation loss histogram

# Signed series
CANCELLATION_ULPS = 64  # Ulps of headroom on signed-series rounding estimates

# Margin probability table
REFERENCE_TABLE_SCALE = 0.0665  # Unrounded scale behind the reference margin table (0.066 is its rounding)
MARGIN_DELTAS = [0.02, 0.04, 0.06, 0.08, 0.1, 0.125, 0.15]
MARGIN_CLOSED_QUAD_TOL = 1e-8
MARGIN_CANCELLATION_TOL = 1e-9  # Closed forms raise when their rounding estimate exceeds this

# Expected gradient table
PHI_DELTAS = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
PHI_CLOSED_QUAD_TOL = 1e-4
PHI_EPSILON_REL = 1e-4  # delta_1 = delta_2 * (1 - eps); Richardson also uses eps / 2
PHI_INSTABILITY_TOL = 1e-4  # Max disagreement between the two eps evaluations
PHI_MC_BAND = 0.005  # Rejection band width around delta_2

# Monte Carlo
MC_SAMPLES = 10_000_000
MC_SHARD_SIZE = 1_000_000  # Draws per independently seeded shard
MC_SIGMA_GATE = 4.0  # Agreement gate in standard errors
MC_MIN_ACCEPTED = 1000

# Quadrature
QUAD_TAIL_SIGMAS = 40.0  # Upper limit k*theta + 40*sqrt(k)*theta
QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12
QUAD_LIMIT = 400

# Gradient check
GRADCHECK_TRIALS = 1000
GRADCHECK_STEP = 1e-6
GRADCHECK_TOL = 1e-5
GRADCHECK_DIM = 4

# Gamma fit
FIT_MIN_SAMPLES = 100
FIT_ZERO_CLIP = 1e-12

# Active learning simulator
SIM_SEED = 0
SIM_STRATEGIES = ["random", "hinge_ll", "llpp"]
SIM_CYCLES = 5
SIM_POOL_SIZE = 1000
SIM_HOLDOUT_SIZE = 500
SIM_INIT_LABELED = 100
SIM_BATCH = 50
SIM_REPEATS = 1

TASK_INPUT_DIM = 1
TASK_TARGET = "sin"  # sin, linear or constant
TASK_FREQUENCY = 3.0
TASK_SLOPE = 0.5
TASK_CONSTANT = 1.0
TASK_NOISE_LOW = 0.02
TASK_NOISE_HIGH = 0.3
TASK_NOISE_BOUNDARY = 0.0  # High noise where x[0] >= boundary

MODEL_HIDDEN = 32
MODEL_INIT_SCALE = 2.0  # Std of first-layer weights

TRAIN_EPOCHS = 500
TRAIN_MINIBATCH = 32
TRAIN_STEP = 0.05
TRAIN_LOSS_STEP = 0.05
TRAIN_RANK_WEIGHT = 1.0
TRAIN_BACKFLOW = 0.0  # Scale of the loss-head gradient into the trunk
TRAIN_HINGE_MARGIN = 0.1

# Output
CSV_SIGNIFICANT_DIGITS = 6

# Logging
LOG_LEVEL = "INFO"  # DEBUG, INFO, WARNING, ERROR
LOG_FILE = "lossrank.log"
LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
