"""
Tensor and Tape
Dense numpy-backed tensors with tape-based reverse-mode differentiation
"""

import contextlib
import logging
import threading
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from mvsmamba.config.constants import ERROR_MESSAGES
from mvsmamba.utils.exceptions import ArgumentError

logger = logging.getLogger(__name__)

_DTYPES = {'float64': np.float64, 'float32': np.float32}
_default_dtype = np.float64

# Active tapes are confined to the thread that opened them
_local = threading.local()


def set_default_dtype(name: str) -> None:
    """Select the precision used for new tensors ('float64' or 'float32')"""
    global _default_dtype
    if name not in _DTYPES:
        raise ArgumentError(
            "Unsupported dtype",
            details={"dtype": name, "supported": sorted(_DTYPES)}
        )
    _default_dtype = _DTYPES[name]
    logger.debug(f"Default tensor dtype set to {name}")


def get_default_dtype():
    return _default_dtype


class Tensor:
    """Dense array of real scalars, optionally tracked by the active tape"""

    __slots__ = ('data', 'requires_grad', 'grad', 'node_id')

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
                dtype = data.dtype
            else:
                dtype = _default_dtype
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node_id: Optional[int] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def T(self) -> 'Tensor':
        return self.transpose()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> 'Tensor':
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    # Operator sugar; implementations live in ops
    def __add__(self, other):
        return _ops().add(self, other)

    def __radd__(self, other):
        return _ops().add(other, self)

    def __sub__(self, other):
        return _ops().sub(self, other)

    def __rsub__(self, other):
        return _ops().sub(other, self)

    def __mul__(self, other):
        return _ops().mul(self, other)

    def __rmul__(self, other):
        return _ops().mul(other, self)

    def __truediv__(self, other):
        return _ops().div(self, other)

    def __rtruediv__(self, other):
        return _ops().div(other, self)

    def __neg__(self):
        return _ops().neg(self)

    def __pow__(self, exponent: float):
        return _ops().power(self, exponent)

    def __matmul__(self, other):
        return _ops().matmul(self, other)

    def __getitem__(self, index):
        return _ops().getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> 'Tensor':
        return _ops().sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> 'Tensor':
        return _ops().mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> 'Tensor':
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops().reshape(self, shape)

    def transpose(self, *axes) -> 'Tensor':
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return _ops().transpose(self, axes or None)


def _ops():
    from mvsmamba.numeric import ops
    return ops


def as_tensor(value) -> Tensor:
    """Wrap constants so they can enter an operation"""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


@dataclass
class TapeRecord:
    """One recorded operation"""
    function: 'Function'
    inputs: Tuple[Tensor, ...]
    input_ids: Tuple[int, ...]
    output_id: int


class Tape:
    """
    Ordered log of differentiable operations

    Usage:
        with Tape() as tape:
            loss = model(x)
        backward(tape, loss)
    """

    def __init__(self):
        self.records: List[TapeRecord] = []
        self._ids: Dict[int, int] = {}
        self._tensors: Dict[int, Tensor] = {}
        self._produced: set = set()

    def __len__(self):
        return len(self.records)

    def __enter__(self) -> 'Tape':
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _stack().pop()
        return False

    def node(self, tensor: Tensor) -> int:
        """Node id of a tensor on this tape, assigned on first sight"""
        key = id(tensor)
        if key not in self._ids:
            node_id = len(self._ids)
            self._ids[key] = node_id
            self._tensors[node_id] = tensor
            tensor.node_id = node_id
        return self._ids[key]

    def contains(self, tensor: Tensor) -> bool:
        return id(tensor) in self._ids

    def tensor(self, node_id: int) -> Tensor:
        return self._tensors[node_id]

    def is_leaf(self, node_id: int) -> bool:
        return node_id not in self._produced

    def record(self, function: 'Function', inputs: Sequence[Tensor], output: Tensor) -> None:
        input_ids = tuple(self.node(t) for t in inputs)
        output_id = self.node(output)
        self._produced.add(output_id)
        self.records.append(TapeRecord(function, tuple(inputs), input_ids, output_id))


def _stack() -> list:
    if not hasattr(_local, 'tapes'):
        _local.tapes = []
    return _local.tapes


def current_tape() -> Optional[Tape]:
    stack = _stack()
    return stack[-1] if stack else None


@contextlib.contextmanager
def no_tape() -> Iterator[None]:
    """Suspend recording inside the block"""
    stack = _stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


class Function:
    """
    Base class for recorded operations

    Subclasses implement forward() on raw arrays and backward() returning one
    gradient (or None) per input.
    """

    def __init__(self):
        self.saved: tuple = ()
        self.needs_grad: Tuple[bool, ...] = ()

    def save_for_backward(self, *values) -> None:
        self.saved = values

    def forward(self, *arrays, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray):
        raise NotImplementedError

    @classmethod
    def apply_with_context(cls, *inputs, **kwargs) -> Tuple[Tensor, 'Function']:
        tensors = tuple(as_tensor(x) for x in inputs)
        fn = cls()
        fn.needs_grad = tuple(t.requires_grad for t in tensors)
        out_data = fn.forward(*[t.data for t in tensors], **kwargs)

        tape = current_tape()
        track = tape is not None and any(fn.needs_grad)
        out = Tensor(out_data, requires_grad=track, dtype=np.asarray(out_data).dtype)
        if track:
            tape.record(fn, tensors, out)
        return out, fn

    @classmethod
    def apply(cls, *inputs, **kwargs) -> Tensor:
        return cls.apply_with_context(*inputs, **kwargs)[0]


def backward(tape: Tape, loss: Tensor) -> None:
    """
    Populate .grad of every leaf reachable from a scalar loss

    Raises:
        ArgumentError: If the loss is not a scalar
    """
    if loss.size != 1:
        raise ArgumentError(
            ERROR_MESSAGES['NON_SCALAR_LOSS'],
            details={"shape": list(loss.shape)}
        )

    if not tape.contains(loss):
        if loss.requires_grad:
            _accumulate(loss, np.ones_like(loss.data))
        return

    grads: Dict[int, np.ndarray] = {tape.node(loss): np.ones_like(loss.data)}

    for rec in reversed(tape.records):
        grad_out = grads.pop(rec.output_id, None)
        if grad_out is None:
            continue

        input_grads = rec.function.backward(grad_out)
        if not isinstance(input_grads, tuple):
            input_grads = (input_grads,)

        for tensor, node_id, g in zip(rec.inputs, rec.input_ids, input_grads):
            if g is None or not tensor.requires_grad:
                continue
            g = np.asarray(g, dtype=tensor.dtype).reshape(tensor.shape)
            if node_id in grads:
                grads[node_id] = grads[node_id] + g
            else:
                grads[node_id] = g

    for node_id, g in grads.items():
        if tape.is_leaf(node_id):
            _accumulate(tape.tensor(node_id), g)


def _accumulate(tensor: Tensor, grad: np.ndarray) -> None:
    if tensor.grad is None:
        tensor.grad = np.array(grad, dtype=tensor.dtype)
    else:
        tensor.grad = tensor.grad + grad
