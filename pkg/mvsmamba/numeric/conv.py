"""
Convolutions
Dense N-d convolution (2D and 3D) via shifted-slice im2col, depthwise causal 1D
convolution for the SSM block, and nearest-neighbour upsampling
"""

import itertools
from typing import Sequence, Tuple

import numpy as np

from mvsmamba.numeric.tensor import Function, Tensor
from mvsmamba.utils.exceptions import ArgumentError


def _window_slices(offsets: Sequence[int], out_size: Sequence[int], stride: int) -> Tuple[slice, ...]:
    return (slice(None),) + tuple(
        slice(o, o + stride * (n - 1) + 1, stride) for o, n in zip(offsets, out_size)
    )


class ConvNd(Function):
    """
    x: [C_in, *S], w: [C_out, C_in, *K], b: [C_out] -> [C_out, *S_out]
    Spatial rank is taken from the kernel; batch size is always one.
    """

    def forward(self, x, w, b, stride=1, padding=0):
        nd = w.ndim - 2
        kernel = w.shape[2:]
        c_in = x.shape[0]
        xp = np.pad(x, [(0, 0)] + [(padding, padding)] * nd)
        out_size = tuple((s - k) // stride + 1 for s, k in zip(xp.shape[1:], kernel))

        offsets = list(itertools.product(*[range(k) for k in kernel]))
        cols = np.empty((c_in, len(offsets)) + out_size, dtype=x.dtype)
        for i, off in enumerate(offsets):
            cols[:, i] = xp[_window_slices(off, out_size, stride)]
        cols2 = cols.reshape(c_in * len(offsets), -1)

        w2 = w.reshape(w.shape[0], -1)
        out = w2 @ cols2 + b[:, None]

        self.save_for_backward(cols2, w2, w.shape, xp.shape, out_size, offsets, stride, padding)
        return out.reshape((w.shape[0],) + out_size)

    def backward(self, grad):
        cols2, w2, w_shape, xp_shape, out_size, offsets, stride, padding = self.saved
        g2 = grad.reshape(grad.shape[0], -1)

        dw = (g2 @ cols2.T).reshape(w_shape)
        db = g2.sum(axis=1)

        dcols = (w2.T @ g2).reshape((xp_shape[0], len(offsets)) + tuple(out_size))
        dxp = np.zeros(xp_shape, dtype=grad.dtype)
        for i, off in enumerate(offsets):
            dxp[_window_slices(off, out_size, stride)] += dcols[:, i]

        if padding:
            crop = (slice(None),) + tuple(slice(padding, n - padding) for n in xp_shape[1:])
            dxp = dxp[crop]
        return dxp, dw, db


def conv2d(x, w, b, stride: int = 1, padding: int = 0) -> Tensor:
    if len(w.shape) != 4 or len(x.shape) != 3:
        raise ArgumentError("conv2d expects x[C,H,W] and w[O,C,kh,kw]",
                            details={"x": list(x.shape), "w": list(w.shape)})
    return ConvNd.apply(x, w, b, stride=stride, padding=padding)


def conv3d(x, w, b, stride: int = 1, padding: int = 0) -> Tensor:
    if len(w.shape) != 5 or len(x.shape) != 4:
        raise ArgumentError("conv3d expects x[C,D,H,W] and w[O,C,kd,kh,kw]",
                            details={"x": list(x.shape), "w": list(w.shape)})
    return ConvNd.apply(x, w, b, stride=stride, padding=padding)


class DepthwiseCausalConv1d(Function):
    """x: [L, C], w: [C, k], b: [C]; y[t] = sum_j w[:, j] * x[t - k + 1 + j] + b"""

    def forward(self, x, w, b):
        k = w.shape[1]
        xp = np.concatenate([np.zeros((k - 1, x.shape[1]), dtype=x.dtype), x], axis=0)
        length = x.shape[0]
        out = np.broadcast_to(b, x.shape).copy()
        for j in range(k):
            out += xp[j:j + length] * w[:, j]
        self.save_for_backward(xp, w, length)
        return out

    def backward(self, grad):
        xp, w, length = self.saved
        k = w.shape[1]
        dw = np.empty_like(w)
        dxp = np.zeros_like(xp)
        for j in range(k):
            dw[:, j] = (grad * xp[j:j + length]).sum(axis=0)
            dxp[j:j + length] += grad * w[:, j]
        return dxp[k - 1:], dw, grad.sum(axis=0)


def depthwise_causal_conv1d(x, w, b) -> Tensor:
    return DepthwiseCausalConv1d.apply(x, w, b)


class UpsampleNearest(Function):
    """Repeat every spatial axis (all but the first) by an integer factor"""

    def forward(self, x, factor=2):
        out = x
        for axis in range(1, x.ndim):
            out = np.repeat(out, factor, axis=axis)
        self.save_for_backward(x.shape, factor)
        return out

    def backward(self, grad):
        shape, factor = self.saved
        split = [shape[0]]
        for n in shape[1:]:
            split.extend([n, factor])
        g = grad.reshape(split)
        return g.sum(axis=tuple(range(2, len(split), 2)))


def upsample_nearest(x, factor: int = 2) -> Tensor:
    return UpsampleNearest.apply(x, factor=factor)
