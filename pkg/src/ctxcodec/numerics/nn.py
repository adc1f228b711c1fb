"""Parameter containers and the few layer types the codec networks need."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import ops
from .tensor import DEFAULT_DTYPE, Tensor


class Module:
    """Tree of named parameters; children are discovered from attributes."""

    training = True

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))
            if missing or unexpected:
                raise KeyError(f"state mismatch: missing={missing} unexpected={unexpected}")
        for name, p in own.items():
            if name not in state:
                continue
            value = np.asarray(state[name], dtype=p.dtype)
            if value.shape != p.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.copy()

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(np.ascontiguousarray(data, dtype=DEFAULT_DTYPE), requires_grad=True)


class Conv2d(Module):
    """3x3 (or kxk) convolution, Kaiming-uniform init unless ``zero_init``."""

    def __init__(self, rng: np.random.Generator, cin: int, cout: int, k: int = 3, stride: int = 1,
                 zero_init: bool = False, bias: bool = True):
        self.stride = stride
        if zero_init:
            w = np.zeros((cout, cin, k, k))
        else:
            fan_in = cin * k * k
            bound = math.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(cout, cin, k, k))
        self.weight = parameter(w)
        self.bias = parameter(np.zeros(cout)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride)


class Sequential(Module):
    """Convs separated by leaky ReLU (none after the last layer)."""

    def __init__(self, *layers: Module):
        self.layers = list(layers)

    def forward(self, x: Tensor) -> Tensor:
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i != last:
                x = ops.leaky_relu(x)
        return x


def conv_stack(rng: np.random.Generator, cin: int, hidden: int, cout: int, depth: int = 2,
               zero_last: bool = False) -> Sequential:
    chans = [cin] + [hidden] * (depth - 1) + [cout]
    layers = [Conv2d(rng, a, b) for a, b in zip(chans[:-2], chans[1:-1])]
    layers.append(Conv2d(rng, chans[-2], chans[-1], zero_init=zero_last))
    return Sequential(*layers)


class ChannelAttention(Module):
    """Squeeze-excitation style gating from globally pooled statistics."""

    def __init__(self, rng: np.random.Generator, channels: int, reduction: int = 2):
        hidden = max(1, channels // reduction)
        self.fc1 = Conv2d(rng, channels, hidden, k=1)
        self.fc2 = Conv2d(rng, hidden, channels, k=1)

    def forward(self, x: Tensor) -> Tensor:
        s = ops.mean(x, axis=(2, 3), keepdims=True)
        gate = ops.sigmoid(self.fc2(ops.leaky_relu(self.fc1(s))))
        return x * gate
