"""
Differentiable tensor operations
Elementwise math, reductions, matrix products, shape plumbing, softmax and layer norm
"""

from typing import Optional, Sequence, Tuple

import numpy as np

from mvsmamba.config.constants import ERROR_MESSAGES, LAYER_NORM_EPS
from mvsmamba.numeric.tensor import Function, Tensor, as_tensor, get_default_dtype
from mvsmamba.utils.exceptions import ArgumentError


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to an input shape"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ----------------------------------------------------------------------------
# Elementwise
# ----------------------------------------------------------------------------

class Add(Function):
    def forward(self, a, b):
        self.save_for_backward(a.shape, b.shape)
        return a + b

    def backward(self, grad):
        sa, sb = self.saved
        return _unbroadcast(grad, sa), _unbroadcast(grad, sb)


class Sub(Function):
    def forward(self, a, b):
        self.save_for_backward(a.shape, b.shape)
        return a - b

    def backward(self, grad):
        sa, sb = self.saved
        return _unbroadcast(grad, sa), _unbroadcast(-grad, sb)


class Mul(Function):
    def forward(self, a, b):
        self.save_for_backward(a, b)
        return a * b

    def backward(self, grad):
        a, b = self.saved
        return _unbroadcast(grad * b, a.shape), _unbroadcast(grad * a, b.shape)


class Div(Function):
    def forward(self, a, b):
        self.save_for_backward(a, b)
        return a / b

    def backward(self, grad):
        a, b = self.saved
        ga = _unbroadcast(grad / b, a.shape)
        gb = _unbroadcast(-grad * a / (b * b), b.shape)
        return ga, gb


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return -grad


class Power(Function):
    def forward(self, a, exponent: float = 2.0):
        self.save_for_backward(a, exponent)
        return a ** exponent

    def backward(self, grad):
        a, exponent = self.saved
        return grad * exponent * a ** (exponent - 1)


class Exp(Function):
    def forward(self, a):
        out = np.exp(a)
        self.save_for_backward(out)
        return out

    def backward(self, grad):
        out, = self.saved
        return grad * out


class Log(Function):
    def forward(self, a):
        self.save_for_backward(a)
        return np.log(a)

    def backward(self, grad):
        a, = self.saved
        return grad / a


class Sin(Function):
    def forward(self, a):
        self.save_for_backward(a)
        return np.sin(a)

    def backward(self, grad):
        a, = self.saved
        return grad * np.cos(a)


class Abs(Function):
    def forward(self, a):
        self.save_for_backward(a)
        return np.abs(a)

    def backward(self, grad):
        a, = self.saved
        return grad * np.sign(a)


class Sigmoid(Function):
    def forward(self, a):
        out = 0.5 * (1.0 + np.tanh(0.5 * a))
        self.save_for_backward(out)
        return out

    def backward(self, grad):
        out, = self.saved
        return grad * out * (1.0 - out)


class SiLU(Function):
    def forward(self, a):
        sig = 0.5 * (1.0 + np.tanh(0.5 * a))
        self.save_for_backward(a, sig)
        return a * sig

    def backward(self, grad):
        a, sig = self.saved
        return grad * (sig * (1.0 + a * (1.0 - sig)))


class Softplus(Function):
    def forward(self, a):
        self.save_for_backward(a)
        return np.logaddexp(0.0, a)

    def backward(self, grad):
        a, = self.saved
        return grad * 0.5 * (1.0 + np.tanh(0.5 * a))


class ReLU(Function):
    def forward(self, a):
        mask = a > 0
        self.save_for_backward(mask)
        return np.where(mask, a, 0.0).astype(a.dtype)

    def backward(self, grad):
        mask, = self.saved
        return grad * mask


class ClampMin(Function):
    def forward(self, a, floor: float = 0.0):
        mask = a >= floor
        self.save_for_backward(mask)
        return np.where(mask, a, floor).astype(a.dtype)

    def backward(self, grad):
        mask, = self.saved
        return grad * mask


def add(a, b) -> Tensor:
    return Add.apply(a, b)


def sub(a, b) -> Tensor:
    return Sub.apply(a, b)


def mul(a, b) -> Tensor:
    return Mul.apply(a, b)


def div(a, b) -> Tensor:
    return Div.apply(a, b)


def neg(a) -> Tensor:
    return Neg.apply(a)


def power(a, exponent: float) -> Tensor:
    return Power.apply(a, exponent=exponent)


def exp(a) -> Tensor:
    return Exp.apply(a)


def log(a) -> Tensor:
    return Log.apply(a)


def sin(a) -> Tensor:
    return Sin.apply(a)


def absolute(a) -> Tensor:
    return Abs.apply(a)


def sigmoid(a) -> Tensor:
    return Sigmoid.apply(a)


def silu(a) -> Tensor:
    return SiLU.apply(a)


def softplus(a) -> Tensor:
    return Softplus.apply(a)


def relu(a) -> Tensor:
    return ReLU.apply(a)


def clamp_min(a, floor: float) -> Tensor:
    return ClampMin.apply(a, floor=floor)


# ----------------------------------------------------------------------------
# Reductions
# ----------------------------------------------------------------------------

class Sum(Function):
    def forward(self, a, axis=None, keepdims=False):
        self.save_for_backward(a.shape, axis, keepdims)
        return np.asarray(a.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        shape, axis, keepdims = self.saved
        if axis is not None and not keepdims:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            axes = tuple(ax % len(shape) for ax in axes)
            grad = np.expand_dims(grad, tuple(sorted(axes)))
        return np.broadcast_to(grad, shape).copy()


class Max(Function):
    """Maximum along one axis; ties route the gradient to the first index"""

    def forward(self, a, axis=-1, keepdims=False):
        idx = np.argmax(a, axis=axis)
        self.save_for_backward(a.shape, axis, keepdims, idx)
        out = np.take_along_axis(a, np.expand_dims(idx, axis), axis=axis)
        return out if keepdims else np.squeeze(out, axis=axis)

    def backward(self, grad):
        shape, axis, keepdims, idx = self.saved
        if not keepdims:
            grad = np.expand_dims(grad, axis)
        out = np.zeros(shape, dtype=grad.dtype)
        np.put_along_axis(out, np.expand_dims(idx, axis), grad, axis=axis)
        return out


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(a, axis=axis, keepdims=keepdims)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(Sum.apply(a, axis=axis, keepdims=keepdims), 1.0 / count)


def max(a, axis: int = -1, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Max.apply(a, axis=axis, keepdims=keepdims)


# ----------------------------------------------------------------------------
# Linear algebra
# ----------------------------------------------------------------------------

class MatMul(Function):
    def forward(self, a, b):
        self.save_for_backward(a, b)
        return np.matmul(a, b)

    def backward(self, grad):
        a, b = self.saved
        if a.ndim == 1 or b.ndim == 1:
            a2 = a[None, :] if a.ndim == 1 else a
            b2 = b[:, None] if b.ndim == 1 else b
            g2 = grad.reshape(a2.shape[:-1] + b2.shape[-1:])
            ga = (g2 @ np.swapaxes(b2, -1, -2)).reshape(a.shape)
            gb = (np.swapaxes(a2, -1, -2) @ g2).reshape(b.shape)
            return ga, gb
        ga = _unbroadcast(grad @ np.swapaxes(b, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a, -1, -2) @ grad, b.shape)
        return ga, gb


def matmul(a, b) -> Tensor:
    return MatMul.apply(a, b)


# ----------------------------------------------------------------------------
# Shape plumbing
# ----------------------------------------------------------------------------

class Reshape(Function):
    def forward(self, a, shape=()):
        self.save_for_backward(a.shape)
        return a.reshape(shape)

    def backward(self, grad):
        shape, = self.saved
        return grad.reshape(shape)


class Transpose(Function):
    def forward(self, a, axes=None):
        if axes is None:
            axes = tuple(reversed(range(a.ndim)))
        self.save_for_backward(axes)
        return np.transpose(a, axes)

    def backward(self, grad):
        axes, = self.saved
        return np.transpose(grad, np.argsort(axes))


class Concat(Function):
    def forward(self, *arrays, axis=0):
        sizes = [a.shape[axis] for a in arrays]
        self.save_for_backward(axis, np.cumsum(sizes)[:-1])
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        axis, splits = self.saved
        return tuple(np.split(grad, splits, axis=axis))


class GetItem(Function):
    def forward(self, a, index=None):
        self.save_for_backward(a.shape, a.dtype, index)
        return np.array(a[index])

    def backward(self, grad):
        shape, dtype, index = self.saved
        out = np.zeros(shape, dtype=dtype)
        np.add.at(out, index, grad)
        return out


class Scatter(Function):
    """Write values into a zero tensor at an index (no repeats)"""

    def forward(self, values, index=None, shape=()):
        self.save_for_backward(index)
        out = np.zeros(shape, dtype=values.dtype)
        out[index] = values
        return out

    def backward(self, grad):
        index, = self.saved
        return np.array(grad[index])


class Pad(Function):
    def forward(self, a, pad_width=()):
        self.save_for_backward(a.shape, pad_width)
        return np.pad(a, pad_width)

    def backward(self, grad):
        shape, pad_width = self.saved
        index = tuple(slice(before, before + n) for (before, _), n in zip(pad_width, shape))
        return grad[index]


def reshape(a, shape) -> Tensor:
    return Reshape.apply(a, shape=tuple(shape))


def transpose(a, axes=None) -> Tensor:
    return Transpose.apply(a, axes=None if axes is None else tuple(axes))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    expanded = []
    for t in tensors:
        t = as_tensor(t)
        shape = list(t.shape)
        shape.insert(axis % (t.ndim + 1), 1)
        expanded.append(reshape(t, shape))
    return concat(expanded, axis=axis)


def getitem(a, index) -> Tensor:
    return GetItem.apply(a, index=index)


def scatter(values, index, shape) -> Tensor:
    return Scatter.apply(values, index=index, shape=tuple(shape))


def pad(a, pad_width) -> Tensor:
    return Pad.apply(a, pad_width=tuple(tuple(p) for p in pad_width))


# ----------------------------------------------------------------------------
# Normalisation
# ----------------------------------------------------------------------------

class Softmax(Function):
    def forward(self, a, axis=-1):
        shifted = a - a.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=axis, keepdims=True)
        self.save_for_backward(out, axis)
        return out

    def backward(self, grad):
        out, axis = self.saved
        return out * (grad - (grad * out).sum(axis=axis, keepdims=True))


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if x.size == 0 or x.ndim == 0:
        raise ArgumentError(ERROR_MESSAGES['EMPTY_TENSOR'], details={"shape": list(x.shape)})
    return Softmax.apply(x, axis=axis)


def softmax_lastdim(x) -> Tensor:
    """Max-stabilised softmax over the last axis"""
    return softmax(x, axis=-1)


class LayerNorm(Function):
    def forward(self, x, gamma, beta, axis=-1, eps=LAYER_NORM_EPS):
        mu = x.mean(axis=axis, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=axis, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        bshape = [1] * x.ndim
        bshape[axis] = x.shape[axis]
        g = gamma.reshape(bshape)
        self.save_for_backward(xhat, inv, g, axis)
        return xhat * g + beta.reshape(bshape)

    def backward(self, grad):
        xhat, inv, g, axis = self.saved
        reduce_axes = tuple(ax for ax in range(grad.ndim) if ax != axis % grad.ndim)
        dgamma = (grad * xhat).sum(axis=reduce_axes)
        dbeta = grad.sum(axis=reduce_axes)
        dxhat = grad * g
        n = xhat.shape[axis]
        dx = inv / n * (
            n * dxhat
            - dxhat.sum(axis=axis, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=axis, keepdims=True)
        )
        return dx, dgamma, dbeta


def layer_norm(x, gamma, beta, axis: int = -1, eps: float = LAYER_NORM_EPS) -> Tensor:
    """
    Normalise over the channel axis, then apply the per-channel affine

    Raises:
        ArgumentError: If the channel extent is zero or gamma/beta do not match it
    """
    x = as_tensor(x)
    channels = x.shape[axis] if x.ndim else 0
    if channels == 0:
        raise ArgumentError(ERROR_MESSAGES['EMPTY_TENSOR'], details={"shape": list(x.shape)})
    gamma, beta = as_tensor(gamma), as_tensor(beta)
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ArgumentError(
            ERROR_MESSAGES['SHAPE_MISMATCH'],
            details={"channels": channels, "gamma": list(gamma.shape), "beta": list(beta.shape)}
        )
    return LayerNorm.apply(x, gamma, beta, axis=axis, eps=eps)


def zeros(shape, dtype=None) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype or get_default_dtype()))


def ones(shape, dtype=None) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype or get_default_dtype()))


def full(shape, value: float, dtype=None) -> Tensor:
    return Tensor(np.full(shape, value, dtype=dtype or get_default_dtype()))


def scalar_like(value: float, like: Optional[Tensor] = None) -> Tensor:
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value), dtype=dtype)
