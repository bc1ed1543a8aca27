"""
Layer building blocks
Parameter containers and the small layers the network is assembled from
"""

import math
from typing import Dict, Iterator, Tuple

import numpy as np

from mvsmamba.numeric import ops
from mvsmamba.numeric.conv import conv2d, conv3d
from mvsmamba.numeric.tensor import Tensor, get_default_dtype
from mvsmamba.utils.exceptions import ArgumentError


def parameter(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=get_default_dtype()), requires_grad=True)


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return parameter(rng.uniform(-bound, bound, size=shape))


class Module:
    """Minimal parameter container; attributes that are parameters or modules are walked"""

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def _children(self) -> Iterator[Tuple[str, object]]:
        for name, value in vars(self).items():
            if isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    yield f"{name}.{i}", item
            else:
                yield name, value

    def named_parameters(self, prefix: str = '', _seen=None) -> Iterator[Tuple[str, Tensor]]:
        seen = set() if _seen is None else _seen
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                if id(value) not in seen:
                    seen.add(id(value))
                    yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix=f"{full}.", _seen=seen)

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise ArgumentError(
                "State does not match the model",
                details={"missing": missing, "unexpected": unexpected}
            )
        for name, p in own.items():
            if p.shape != state[name].shape:
                raise ArgumentError(
                    "Parameter shape mismatch",
                    details={"name": name, "expected": list(p.shape), "got": list(state[name].shape)}
                )
            p.data = np.array(state[name], dtype=p.dtype)


class Linear(Module):
    """x[..., in] @ W[in, out] + b"""

    def __init__(self, rng: np.random.Generator, in_features: int, out_features: int, bias: bool = True):
        self.weight = uniform_init(rng, (in_features, out_features), in_features)
        self.bias = parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        out = ops.matmul(x, self.weight)
        return out if self.bias is None else out + self.bias


class LayerNorm(Module):
    def __init__(self, channels: int, axis: int = -1):
        self.gamma = parameter(np.ones(channels))
        self.beta = parameter(np.zeros(channels))
        self.axis = axis

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, axis=self.axis)


class Conv2d(Module):
    def __init__(self, rng: np.random.Generator, in_channels: int, out_channels: int,
                 kernel_size: int = 3, stride: int = 1, padding: int = None):
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = uniform_init(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in)
        self.bias = parameter(np.zeros(out_channels))
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class Conv3d(Module):
    def __init__(self, rng: np.random.Generator, in_channels: int, out_channels: int,
                 kernel_size: int = 3, stride: int = 1, padding: int = None):
        fan_in = in_channels * kernel_size ** 3
        self.weight = uniform_init(rng, (out_channels, in_channels) + (kernel_size,) * 3, fan_in)
        self.bias = parameter(np.zeros(out_channels))
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding

    def forward(self, x: Tensor) -> Tensor:
        return conv3d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def zero_(self) -> None:
        self.weight.data[...] = 0.0
        self.bias.data[...] = 0.0


class MLP(Module):
    """Two-layer perceptron over the last axis with a SiLU hidden activation"""

    def __init__(self, rng: np.random.Generator, channels: int, ratio: int = 2):
        self.fc1 = Linear(rng, channels, channels * ratio)
        self.fc2 = Linear(rng, channels * ratio, channels)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(ops.silu(self.fc1(x)))

    def zero_output_(self) -> None:
        self.fc2.weight.data[...] = 0.0
        self.fc2.bias.data[...] = 0.0
