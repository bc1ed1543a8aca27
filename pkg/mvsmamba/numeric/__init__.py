"""
Numeric Module
Dense tensors, tape-based reverse-mode differentiation and the primitives built on it
"""

from mvsmamba.numeric.tensor import (
    Function,
    Tape,
    Tensor,
    as_tensor,
    backward,
    current_tape,
    get_default_dtype,
    no_tape,
    set_default_dtype,
)
from mvsmamba.numeric.ops import layer_norm, softmax, softmax_lastdim
from mvsmamba.numeric.conv import conv2d, conv3d, depthwise_causal_conv1d, upsample_nearest
from mvsmamba.numeric.sampling import bilinear_sample
from mvsmamba.numeric.gradcheck import check_parameters, finite_diff_check
from mvsmamba.numeric.optim import Adam

__all__ = [
    'Adam',
    'Function',
    'Tape',
    'Tensor',
    'as_tensor',
    'backward',
    'bilinear_sample',
    'check_parameters',
    'conv2d',
    'conv3d',
    'current_tape',
    'depthwise_causal_conv1d',
    'finite_diff_check',
    'get_default_dtype',
    'layer_norm',
    'no_tape',
    'set_default_dtype',
    'softmax',
    'softmax_lastdim',
    'upsample_nearest',
]
