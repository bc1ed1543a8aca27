"""
Selective State-Space Core
Zero-order-hold discretisation, the selective scan recurrence, the time-invariant
convolution-kernel form, and the Mamba block built on them
"""

import logging
from typing import Optional, Tuple, Union

import numpy as np

from mvsmamba.config.constants import (
    CONV_KERNEL,
    D_STATE,
    DELTA_MAX,
    DELTA_MIN,
    ERROR_MESSAGES,
    EXPAND,
)
from mvsmamba.models.layers import Module, parameter, uniform_init
from mvsmamba.numeric import ops
from mvsmamba.numeric.conv import depthwise_causal_conv1d
from mvsmamba.numeric.tensor import Function, Tensor, as_tensor
from mvsmamba.utils.exceptions import ArgumentError

logger = logging.getLogger(__name__)

ArrayLike = Union[Tensor, np.ndarray]


class MambaParams(Module):
    """
    Parameter bundle of one selective-SSM block

    Shapes (C = d_model, E = expand * C, N = d_state, k = conv_kernel):
        W_in [C, 2E]   input projection (scan branch | gate branch)
        conv1d_w [E, k], conv1d_b [E]   depthwise causal convolution
        W_B, W_C [E, N]   input-dependent B_t, C_t
        W_delta [E, E], delta_bias [E]   step size, softplus keeps it positive
        A_log [E, N]   A = -exp(A_log) < 0
        D_skip [E]   direct passthrough
        W_out [E, C]   output projection
    """

    def __init__(self, rng: np.random.Generator, d_model: int, d_state: int = D_STATE,
                 expand: int = EXPAND, conv_kernel: int = CONV_KERNEL, zoh_input: bool = False):
        if d_model < 1 or d_state < 1:
            raise ArgumentError(
                "d_model and d_state must be at least 1",
                details={"d_model": d_model, "d_state": d_state}
            )
        self.d_model = d_model
        self.d_state = d_state
        self.d_inner = expand * d_model
        self.conv_kernel = conv_kernel
        self.zoh_input = zoh_input
        inner = self.d_inner

        self.W_in = uniform_init(rng, (d_model, 2 * inner), d_model)
        self.conv1d_w = uniform_init(rng, (inner, conv_kernel), conv_kernel)
        self.conv1d_b = parameter(np.zeros(inner))
        self.W_B = uniform_init(rng, (inner, d_state), inner)
        self.W_C = uniform_init(rng, (inner, d_state), inner)
        self.W_delta = uniform_init(rng, (inner, inner), inner)

        # Inverse softplus of a log-uniform target step in [DELTA_MIN, DELTA_MAX]
        dt = np.exp(rng.uniform(np.log(DELTA_MIN), np.log(DELTA_MAX), size=inner))
        self.delta_bias = parameter(dt + np.log(-np.expm1(-dt)))

        self.A_log = parameter(np.log(np.tile(np.arange(1, d_state + 1, dtype=float), (inner, 1))))
        self.D_skip = parameter(np.ones(inner))
        self.W_out = uniform_init(rng, (inner, d_model), inner)

    @property
    def A(self) -> Tensor:
        return ops.neg(ops.exp(self.A_log))

    def zero_output_(self) -> None:
        """Collapse the block to its residual path"""
        self.W_out.data[...] = 0.0


def _check_delta(delta: np.ndarray) -> None:
    if not np.all(delta > 0):
        raise ArgumentError(
            ERROR_MESSAGES['NONPOSITIVE_DELTA'],
            details={"min_delta": float(np.min(delta)) if delta.size else None}
        )


def discretize(delta: ArrayLike, A: ArrayLike, B: ArrayLike,
               zoh_input: bool = False) -> Tuple[Tensor, Tensor]:
    """
    Discretise a diagonal continuous system per step

    Args:
        delta: [L, C] positive step sizes
        A: [C, N] negative diagonal state matrix
        B: [L, N] per-step input matrix
        zoh_input: Use the exact zero-order-hold input path instead of the Euler rule

    Returns:
        (Abar, Bbar), each [L, C, N]

    Raises:
        ArgumentError: If any step size is not positive
    """
    delta, A, B = as_tensor(delta), as_tensor(A), as_tensor(B)
    _check_delta(delta.data)
    length, channels = delta.shape
    d3 = ops.reshape(delta, (length, channels, 1))
    a3 = ops.reshape(A, (1,) + A.shape)
    b3 = ops.reshape(B, (length, 1, B.shape[-1]))

    dA = d3 * a3
    Abar = ops.exp(dA)
    if zoh_input:
        Bbar = (Abar - 1.0) / a3 * b3
    else:
        Bbar = d3 * b3
    return Abar, Bbar


class ScanRecurrence(Function):
    """
    h_t = exp(delta_t A) * h_{t-1} + Bbar_t * x_t,  y_t = <C_t, h_t> + D * x_t

    x, delta: [L, E]; A: [E, N]; B, C: [L, N]; D: [E]
    """

    def forward(self, x, delta, A, B, C, D, zoh_input=False):
        length, inner = x.shape
        dA = delta[:, :, None] * A[None]
        Abar = np.exp(dA)
        if zoh_input:
            bfac = np.expm1(dA) / A[None]
        else:
            bfac = np.broadcast_to(delta[:, :, None], dA.shape)
        Bbar = bfac * B[:, None, :]

        hs = np.empty(dA.shape, dtype=x.dtype)
        h = np.zeros(A.shape, dtype=x.dtype)
        for t in range(length):
            h = Abar[t] * h + Bbar[t] * x[t][:, None]
            hs[t] = h

        y = np.einsum('len,ln->le', hs, C) + D * x
        self.states = hs
        self.save_for_backward(x, delta, A, B, C, D, dA, Abar, bfac, Bbar, hs, zoh_input)
        return y

    def backward(self, gy):
        x, delta, A, B, C, D, dA, Abar, bfac, Bbar, hs, zoh_input = self.saved
        length = x.shape[0]

        dC = np.einsum('le,len->ln', gy, hs)
        dD = (gy * x).sum(axis=0)
        dx = gy * D

        dh_y = gy[:, :, None] * C[:, None, :]
        dhs = np.empty_like(hs)
        carry = np.zeros(A.shape, dtype=gy.dtype)
        for t in range(length - 1, -1, -1):
            dh = dh_y[t] + carry
            dhs[t] = dh
            carry = dh * Abar[t]

        h_prev = np.concatenate([np.zeros((1,) + A.shape, dtype=hs.dtype), hs[:-1]], axis=0)
        dx = dx + (dhs * Bbar).sum(axis=2)
        dBbar = dhs * x[:, :, None]
        d_dA = dhs * h_prev * Abar

        ddelta = (d_dA * A[None]).sum(axis=2)
        dA_param = (d_dA * delta[:, :, None]).sum(axis=0)

        dB = (dBbar * bfac).sum(axis=1)
        if zoh_input:
            b3 = B[:, None, :]
            ddelta += (dBbar * b3 * Abar).sum(axis=2)
            dfdA = (delta[:, :, None] * A[None] * Abar - np.expm1(dA)) / (A[None] ** 2)
            dA_param += (dBbar * b3 * dfdA).sum(axis=0)
        else:
            ddelta += (dBbar * B[:, None, :]).sum(axis=2)

        return dx, ddelta, dA_param, dB, dC, dD


def scan_recurrence(x, delta, A, B, C, D, zoh_input: bool = False,
                    return_states: bool = False):
    """
    Run the sequential selective recurrence left to right in O(L*E*N)

    Raises:
        ArgumentError: On empty sequences or non-positive step sizes
    """
    x, delta = as_tensor(x), as_tensor(delta)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ArgumentError(ERROR_MESSAGES['EMPTY_SEQUENCE'], details={"shape": list(x.shape)})
    _check_delta(delta.data)
    y, fn = ScanRecurrence.apply_with_context(x, delta, A, B, C, D, zoh_input=zoh_input)
    if return_states:
        return y, fn.states
    return y


def selective_scan(x: Tensor, params: MambaParams, return_states: bool = False):
    """
    Selective scan of x [L, E] with B_t, C_t and delta_t projected from x

    Raises:
        ArgumentError: If the sequence is empty
    """
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ArgumentError(ERROR_MESSAGES['EMPTY_SEQUENCE'], details={"shape": list(x.shape)})
    B = ops.matmul(x, params.W_B)
    C = ops.matmul(x, params.W_C)
    delta = ops.softplus(ops.matmul(x, params.W_delta) + params.delta_bias)
    return scan_recurrence(x, delta, params.A, B, C, params.D_skip,
                           zoh_input=params.zoh_input, return_states=return_states)


def _constant_over_time(name: str, value: np.ndarray, per_step_ndim: int) -> np.ndarray:
    if value.ndim == per_step_ndim + 1:
        if not np.all(value == value[0]):
            raise ArgumentError(ERROR_MESSAGES['TIME_VARYING'], details={"parameter": name})
        return value[0]
    return value


def kernel_convolve(x: ArrayLike, Abar: ArrayLike, Bbar: ArrayLike, C_out: ArrayLike,
                    D_skip: Optional[ArrayLike] = None) -> Tensor:
    """
    Evaluate a time-invariant SSM as a causal convolution y = x * K + D x

    K_tau[c] = sum_n C[c, n] * Abar[c, n]**tau * Bbar[c, n]

    Args:
        x: [L, C]
        Abar, Bbar: [C, N] (or [L, C, N] if constant along L)
        C_out: [N] or [C, N] (or [L, C, N] if constant along L)
        D_skip: optional [C]

    Raises:
        ArgumentError: If any parameter varies over time
    """
    x = np.asarray(x.data if isinstance(x, Tensor) else x)
    length, channels = x.shape
    Abar = _constant_over_time('Abar', np.asarray(getattr(Abar, 'data', Abar)), 2)
    Bbar = _constant_over_time('Bbar', np.asarray(getattr(Bbar, 'data', Bbar)), 2)
    C_out = np.asarray(getattr(C_out, 'data', C_out))
    if C_out.ndim == 3:
        C_out = _constant_over_time('C_out', C_out, 2)
    C_out = np.broadcast_to(C_out, Abar.shape)

    taus = np.arange(length, dtype=x.dtype)[:, None, None]
    K = (C_out[None] * Abar[None] ** taus * Bbar[None]).sum(axis=2)

    y = np.empty_like(x)
    for c in range(channels):
        y[:, c] = np.convolve(x[:, c], K[:, c])[:length]
    if D_skip is not None:
        y = y + np.asarray(getattr(D_skip, 'data', D_skip)) * x
    return Tensor(y)


def mamba_block(seq: Tensor, params: MambaParams) -> Tensor:
    """
    Residual Mamba block over a sequence [L, C]

    in-projection -> depthwise causal conv + SiLU -> selective scan,
    gated by SiLU of a parallel projection, out-projection, plus the input.
    """
    seq = as_tensor(seq)
    inner = params.d_inner
    xz = ops.matmul(seq, params.W_in)
    x_branch = xz[:, :inner]
    gate = xz[:, inner:]

    u = ops.silu(depthwise_causal_conv1d(x_branch, params.conv1d_w, params.conv1d_b))
    y = selective_scan(u, params)
    y = y * ops.silu(gate)
    return seq + ops.matmul(y, params.W_out)
