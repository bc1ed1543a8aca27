"""
Finite-difference gradient oracle
"""

import logging
from typing import Callable, List, Optional, Sequence

import numpy as np

from mvsmamba.config.constants import ERROR_MESSAGES
from mvsmamba.numeric.tensor import Tape, Tensor, backward, no_tape
from mvsmamba.utils.exceptions import OracleError

logger = logging.getLogger(__name__)


def _analytic_gradients(loss_fn: Callable[[], Tensor], tensors: Sequence[Tensor]) -> List[np.ndarray]:
    saved = [(t.requires_grad, t.grad) for t in tensors]
    try:
        for t in tensors:
            t.requires_grad = True
            t.grad = None
        with Tape() as tape:
            loss = loss_fn()
        backward(tape, loss)
        return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    finally:
        for t, (flag, grad) in zip(tensors, saved):
            t.requires_grad = flag
            t.grad = grad


def _evaluate(loss_fn: Callable[[], Tensor]) -> float:
    with no_tape():
        value = loss_fn().item()
    if not np.isfinite(value):
        raise OracleError(ERROR_MESSAGES['NON_FINITE_SAMPLE'], details={"value": value})
    return value


def _relative_error(analytic: float, central: float) -> float:
    return abs(analytic - central) / max(abs(analytic), abs(central), 1e-8)


def _check(loss_fn: Callable[[], Tensor], tensors: Sequence[Tensor], eps: float,
           coords: Sequence[Sequence[int]]) -> float:
    analytic = _analytic_gradients(loss_fn, tensors)
    worst = 0.0
    for t, grad, flat_indices in zip(tensors, analytic, coords):
        if not t.data.flags["C_CONTIGUOUS"]:
            t.data = np.ascontiguousarray(t.data)
        flat = t.data.reshape(-1)
        g = grad.reshape(-1)
        for i in flat_indices:
            original = flat[i]
            flat[i] = original + eps
            plus = _evaluate(loss_fn)
            flat[i] = original - eps
            minus = _evaluate(loss_fn)
            flat[i] = original
            central = (plus - minus) / (2.0 * eps)
            worst = max(worst, _relative_error(float(g[i]), central))
    return worst


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-6,
                      max_coords: Optional[int] = None, seed: int = 0) -> float:
    """
    Compare the tape gradient of a scalar function with central differences

    Args:
        f: Scalar-valued function of x (may also close over x)
        x: Sample point, perturbed in place and restored
        eps: Central-difference step
        max_coords: Optional random subset size of coordinates to perturb

    Returns:
        max |analytic - central| / max(|analytic|, |central|, 1e-8)

    Raises:
        OracleError: If f is not finite at a sample point
    """
    indices = _coordinate_subset(x.size, max_coords, np.random.default_rng(seed))
    error = _check(lambda: f(x), [x], eps, [indices])
    logger.debug(f"finite_diff_check: {len(indices)} coords, max rel error {error:.3e}")
    return error


def check_parameters(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-6,
                     max_coords: Optional[int] = None, seed: int = 0) -> float:
    """Finite-difference check over several tensors a closure reads"""
    rng = np.random.default_rng(seed)
    coords = [_coordinate_subset(p.size, max_coords, rng) for p in params]
    error = _check(loss_fn, list(params), eps, coords)
    logger.debug(f"check_parameters: {sum(len(c) for c in coords)} coords, max rel error {error:.3e}")
    return error


def _coordinate_subset(size: int, max_coords: Optional[int], rng: np.random.Generator) -> List[int]:
    if max_coords is None or max_coords >= size:
        return list(range(size))
    return sorted(rng.choice(size, size=max_coords, replace=False).tolist())
