""" Constants used in the gemmesh package """
import math

# Physical constants (CGS unless noted)
BLOOD_VISCOSITY = 0.04  # g/(cm s)
OUTLET_PRESSURE_KPA = 13.332  # 100 mmHg
DYN_PER_CM2_TO_PA = 0.1
DYN_PER_CM2_TO_KPA = 1e-4
MM_PER_CM = 10.0

# Boundary conditions (ml/s)
TRAIN_FLOW_RANGE = (1.87, 4.36)
FLOW_LIMITS = (0.63, 5.61)

# Single artery generator
SINGLE_RADIUS_RANGE = (1.25, 2.0)  # mm
SINGLE_CONTROL_POINTS = 11
SINGLE_CONTROL_SPACING = 4.0  # mm
SINGLE_VERTICAL_STEP = 1.5  # mm, max |dy| between control points
SINGLE_MAX_STENOSES = 2
SINGLE_MAX_SEVERITY = 0.5
FLOW_EXTENSION_DIAMETERS = 5.0

# Bifurcating artery generator (angles in degrees, radii in mm)
BIFURCATION_CONTROL_POINTS = 7
BIFURCATION_BRANCH_POINT = 4
BIFURCATION_CONTROL_SPACING = 4.0
BETA = (78.9, 23.1)
BETA_PRIME = (61.5, 21.5)
GAMMA = (9.5, 21.5)
RADIUS_PMV = (1.75, 0.4)
RADIUS_DMV = (1.6, 0.35)
RADIUS_SB = (1.5, 0.35)
BIFURCATION_EXPONENT = 2.4
BIFURCATION_TOLERANCE = 0.165  # diameters in cm
MAX_ANGLE = 90.0
ELLIPSE_NOISE = 0.05
TAPER = 0.875
REJECTION_BUDGET = 10_000
MIN_RADIUS = 0.5  # mm

# Meshing
DEFAULT_SEGMENTS = 32
MAX_SUBSEED_ATTEMPTS = 100

# Branch ids carried by ring tables
MAIN = 0
DMV = 1
SB = 2
BRANCH_NAMES = {MAIN: "main", DMV: "dmv", SB: "sb"}

# Numerical tolerances
KERNEL_SVD_TOL = 1e-10
NORM_EPS = 1e-5
TWO_PI = 2.0 * math.pi

# Network defaults
DEFAULT_POOL_RATIOS = (1.0, 0.25, 0.0625)
DEFAULT_RADIUS_FACTORS = (1.0, 2.0, 4.0)
DEFAULT_RADIUS_EDGE_FACTOR = 1.5
DEFAULT_DISTANCE_SCALE = 10.0  # mm
DEFAULT_NONLINEARITY_SAMPLES = 64
FULL_SCALE_WIDTHS = (32, 48, 64)  # about 1M parameters for the gem model

# Training defaults
DEFAULT_BATCH_SIZE = 12
DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_SPLIT = (0.8, 0.1, 0.1)
TRAIN = "train"
VALIDATION = "val"
TEST = "test"

# Verification tolerances
LINEAR_TOLERANCE = 1e-9
FULL_TOLERANCE = 5e-3
TRANSLATION_TOLERANCE = 1e-10
RECEPTIVE_FIELD_RATIO = 4.0

# Exit codes
EXIT_USAGE = 1
EXIT_VERIFICATION = 2
EXIT_NUMERIC = 3

# File names
CONFIG_VERSION = 1
CHECKPOINT_VERSION = 1
CHECKPOINT_MAGIC = b"GEMMESH\x00"
CHECKPOINT_NAME = "checkpoint.gem"
HISTORY_NAME = "history.csv"
MANIFEST_NAME = "manifest.json"
SUMMARY_NAME = "summary.json"
SEED_ENV = "GEMMESH_SEED"
