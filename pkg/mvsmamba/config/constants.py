"""
Application Constants
"""

# Cascade schedule, coarse to fine
NUM_HYPOTHESES = (32, 16, 8, 4)
INTERVAL_SCALES = (2.0, 1.0, 1.0, 0.5)
GROUPS = (4, 4, 4, 4)
NUM_SCALES = 4

# FPN channel schedule, coarse to fine
CHANNELS = (64, 32, 16, 8)

# Resolutions must survive three halvings with even extents
RESOLUTION_MULTIPLE = 16

# Selective SSM block defaults
D_STATE = 8
EXPAND = 2
CONV_KERNEL = 3
DELTA_MIN = 0.001
DELTA_MAX = 0.1

# Numerics
LAYER_NORM_EPS = 1e-5
FUSION_EPS = 1e-6
LOG_CLAMP = 1e-12

# Adam
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

# Base start offsets (h0, w0) indexed by j = (d - 1 + k - 1) mod 4
START_TABLE = ((1, 0), (0, 0), (0, 1), (1, 1))

# Arrangement kinds paired with scan directions, direction index d = 1..4
ARRANGEMENT_KINDS = ('HR', 'HL', 'VB', 'VT')
DIRECTIONS = ('N', 'iN', 'Z', 'iZ')

# Evaluation thresholds in scene units
EVAL_THRESHOLDS = (1.0, 2.0, 4.0)

# Error Messages
ERROR_MESSAGES = {
    'EMPTY_TENSOR': 'Tensor has no elements',
    'NON_SCALAR_LOSS': 'Loss node must be a scalar',
    'SHAPE_MISMATCH': 'Tensor shapes do not match',
    'ODD_EXTENT': 'Spatial extents must be even',
    'NO_SOURCES': 'At least one source view is required',
    'BAD_DIRECTION': 'Direction index must be in 1..4',
    'NONPOSITIVE_DELTA': 'Step sizes must be strictly positive',
    'TIME_VARYING': 'Kernel form requires time-invariant parameters',
    'EMPTY_SEQUENCE': 'Sequence length must be at least 1',
    'PARITY_COLLISION': 'Scan layouts share a parity class',
    'BAD_RESOLUTION': 'Image extents must be divisible by 16',
    'MISSING_PREV_DEPTH': 'Finer scales need the previous depth map',
    'MISSING_GT': 'Scene has no ground-truth depth',
    'EXTENT_MISMATCH': 'Image extents do not match',
    'SINGULAR_INTRINSICS': 'Intrinsic matrix is not invertible',
    'NON_FINITE_SAMPLE': 'Function is not finite at a sample point',
}
