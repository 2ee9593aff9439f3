"""
Minimal module system on top of the tensor substrate.

A ``Module`` owns parameter tensors and sub-modules as plain attributes;
``named_parameters`` walks them in attribute order with dotted names.
"""

from __future__ import annotations

import math
from typing import Any, Iterator, Optional

import numpy as np

from app.tensor import ops
from app.tensor.tensor import Tensor, get_default_dtype


def parameter(values: np.ndarray, name: Optional[str] = None) -> Tensor:
    return Tensor(values, requires_grad=True, name=name, dtype=get_default_dtype())


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))"""
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Base class for model blocks."""

    training: bool = True

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    def _children(self) -> Iterator[tuple[str, Any]]:
        for name, value in vars(self).items():
            if isinstance(value, (Tensor, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Tensor, Module)):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Module):
                params.update(value.named_parameters(prefix=f"{full}."))
            elif value.requires_grad:
                params[full] = value
        return params

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.named_parameters().values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.numpy() for name, p in self.named_parameters().items()}


class Linear(Module):
    """Affine map over the last axis; weight shaped (in, out)."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = parameter(uniform_init(rng, (in_features, out_features), in_features))
        self.bias = parameter(uniform_init(rng, (out_features,), in_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, width: int):
        self.gain = parameter(np.ones(width))
        self.bias = parameter(np.zeros(width))

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gain, self.bias)


class FeedForward(Module):
    """width -> mult*width (ReLU) -> width"""

    def __init__(
        self,
        width: int,
        mult: int,
        rng: np.random.Generator,
        dropout: float = 0.0,
        dropout_rng: Optional[np.random.Generator] = None,
    ):
        self.fc1 = Linear(width, mult * width, rng)
        self.fc2 = Linear(mult * width, width, rng)
        self.dropout = dropout
        self.dropout_rng = dropout_rng

    def forward(self, x: Tensor) -> Tensor:
        hidden = ops.relu(self.fc1(x))
        if self.training and self.dropout > 0 and self.dropout_rng is not None:
            hidden = ops.dropout(hidden, self.dropout, self.dropout_rng)
        return self.fc2(hidden)
