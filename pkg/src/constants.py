# QUADRATURE
QUAD_TOL = 1e-10
QUAD_MAX_SUBDIVISIONS = 1_000_000
BISECT_XTOL = 1e-12
BISECT_MAX_ITER = 200
BRACKET_MAX_DOUBLINGS = 60
GL_NODES = 16
GL_PARTIAL_NODES = 64

# DENSITIES
BAND_CUTOFF = 1e-14  # bands below BAND_CUTOFF * a1 collapse into one sliver
CDF_TABLE_SIZE = 2**16
CDF_TABLE_GEOMETRIC = 2**10
CDF_TABLE_FLOOR = 1e-12
PERIODIC_MAX_PERIODS = 2**18
PERIODIC_EVAL_BUDGET = 2**24
PERIODIC_BLOCK = 2**14
PERIODIC_X_CAP = 2.0**10
TAIL_RATE = 1.0  # f0(x) = m * exp(-TAIL_RATE * (x - 1)) on (1, inf)
PDF_TOL = 1e-12
KS_DRAWS = 5000
LIL_SEEDS = 100

# CONDITIONS
N_LAMBDA = 200
N_MU = 101
LAMBDA_MIN = 1e-6
N_S_BINS = 256
N_SUP_SEEDS = 256
N_DYADIC_WINDOWS = 40
DEFAULT_LAMBDA0 = 1e-2
# bounds needs s g(s) to reach sqrt(2/pi) sqrt(t) on the frontier grid
BOUNDS_LAMBDA0 = 0.25
POINTWISE_X_MAX = 0.25
N_WORST_PSI = 10
SUP_PSI_XTOL = 1e-10

# SOLVER
CHUNK_SIZE = 8192
JUMP_MIN_PARTICLES = 5
JUMP_SQRT_DT_FACTOR = 10.0
PICARD_PATHS = 100_000
PICARD_MAX_ITERS = 50
PICARD_TOL = 1e-3

# BOUNDS
DEFAULT_T = 0.25
G_BAND_CAP = 30
N_SE = 3.0
U_STEPS = 2000
N_T_CHECKS = 10
N_H_CHECKS = 40
H_MIN_FRACTION = 1e-4
BOUNDS_PATHS = 100_000
BRUTEFORCE_GRID = 1000

# STREAM KINDS (for counter-based generators)
STREAM_PARTICLES = 1
STREAM_BRIDGE = 2
STREAM_PATHS = 3
STREAM_FBM = 4
STREAM_BOUNDS = 5
STREAM_U = 6
