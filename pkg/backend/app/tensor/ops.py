"""
Differentiable op set.

Every op computes its forward value with numpy and registers a gradient rule
on the active tape. Ops never mutate their inputs. Broadcasting follows numpy
rules; gradients are summed back to each operand's shape.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import special

from app.core.exceptions import DataValidationError, NonFiniteError, ShapeMismatchError
from app.tensor.tensor import GradientRule, Tensor, current_tape

Operand = Union[Tensor, float, int, np.ndarray]
Axis = Optional[Union[int, tuple[int, ...]]]

LAYER_NORM_EPS = 1e-5
_SQRT_2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# op name -> public function; every entry has a gradient rule
REGISTERED_OPS: dict[str, Callable[..., Tensor]] = {}


def _register(name: str) -> Callable[[Callable[..., Tensor]], Callable[..., Tensor]]:
    def decorator(fn: Callable[..., Tensor]) -> Callable[..., Tensor]:
        REGISTERED_OPS[name] = fn
        return fn
    return decorator


def _emit(op: str, value: np.ndarray, inputs: Sequence[Tensor], backward: GradientRule) -> Tensor:
    out = Tensor.from_op(value, requires_grad=any(t.requires_grad for t in inputs))
    tape = current_tape()
    if tape is not None and out.requires_grad:
        tape.record(op, inputs, out, backward)
    return out


def as_tensor(value: Operand, like: Optional[Tensor] = None) -> Tensor:
    """Wrap constants as non-trainable tensors in the dtype of ``like``."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(value, dtype=dtype)


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, axis in enumerate(shape) if axis == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return grad.reshape(shape)


def _normalize_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise ShapeMismatchError(f"axis {axis} out of range for {ndim}-d tensor")
    return axis % ndim


# elementwise arithmetic

@_register("add")
def add(a: Operand, b: Operand) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    try:
        value = a.data + b.data
    except ValueError as exc:
        raise ShapeMismatchError(f"add: cannot broadcast {a.shape} and {b.shape}") from exc
    return _emit("add", value, (a, b), lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


@_register("sub")
def sub(a: Operand, b: Operand) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    try:
        value = a.data - b.data
    except ValueError as exc:
        raise ShapeMismatchError(f"sub: cannot broadcast {a.shape} and {b.shape}") from exc
    return _emit("sub", value, (a, b), lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


@_register("multiply")
def multiply(a: Operand, b: Operand) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    try:
        value = a.data * b.data
    except ValueError as exc:
        raise ShapeMismatchError(f"multiply: cannot broadcast {a.shape} and {b.shape}") from exc
    return _emit(
        "multiply",
        value,
        (a, b),
        lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)),
    )


@_register("scale")
def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a Python scalar constant."""
    c = x.dtype.type(factor)
    return _emit("scale", x.data * c, (x,), lambda g: (g * c,))


@_register("neg")
def neg(x: Tensor) -> Tensor:
    return _emit("neg", -x.data, (x,), lambda g: (-g,))


@_register("absolute")
def absolute(x: Tensor) -> Tensor:
    return _emit("absolute", np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


@_register("relu")
def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _emit("relu", np.where(mask, x.data, 0).astype(x.dtype, copy=False), (x,), lambda g: (g * mask,))


@_register("gelu")
def gelu(x: Tensor) -> Tensor:
    """Exact GeLU, x·Φ(x)."""
    cdf = 0.5 * (1.0 + special.erf(x.data / _SQRT_2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
    value = (x.data * cdf).astype(x.dtype, copy=False)
    local = (cdf + x.data * pdf).astype(x.dtype, copy=False)
    return _emit("gelu", value, (x,), lambda g: (g * local,))


# linear algebra and movement

@_register("matmul")
def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes; leading axes broadcast."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatchError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError(f"matmul: inner axes differ, {a.shape} @ {b.shape}")
    try:
        value = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeMismatchError(f"matmul: cannot broadcast {a.shape} @ {b.shape}") from exc

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_a = np.matmul(g, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return unbroadcast(grad_a, a.shape), unbroadcast(grad_b, b.shape)

    return _emit("matmul", value, (a, b), rule)


@_register("permute")
def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(_normalize_axis(a, x.ndim) for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeMismatchError(f"permute: {axes} is not a permutation of {x.ndim} axes")
    inverse = tuple(int(i) for i in np.argsort(axes))
    return _emit("permute", np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def transpose(x: Tensor, axis1: int = -2, axis2: int = -1) -> Tensor:
    axes = list(range(x.ndim))
    i, j = _normalize_axis(axis1, x.ndim), _normalize_axis(axis2, x.ndim)
    axes[i], axes[j] = axes[j], axes[i]
    return permute(x, axes)


@_register("reshape")
def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        value = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeMismatchError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from exc
    return _emit("reshape", value, (x,), lambda g: (g.reshape(x.shape),))


@_register("broadcast_to")
def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        value = np.broadcast_to(x.data, shape)
    except ValueError as exc:
        raise ShapeMismatchError(f"broadcast_to: cannot broadcast {x.shape} to {shape}") from exc
    return _emit("broadcast_to", value, (x,), lambda g: (unbroadcast(g, x.shape),))


@_register("concatenate")
def concatenate(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeMismatchError("concatenate needs at least one tensor")
    axis = _normalize_axis(axis, tensors[0].ndim)
    try:
        value = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = [t.shape for t in tensors]
        raise ShapeMismatchError(f"concatenate: incompatible shapes {shapes} on axis {axis}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _emit("concatenate", value, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


@_register("slice_axis")
def slice_axis(x: Tensor, start: int, stop: int, axis: int = -1) -> Tensor:
    axis = _normalize_axis(axis, x.ndim)
    if not 0 <= start < stop <= x.shape[axis]:
        raise ShapeMismatchError(f"slice [{start}:{stop}) out of range for axis {axis} of {x.shape}")
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros(x.shape, dtype=g.dtype)
        full[index] = g
        return (full,)

    return _emit("slice_axis", x.data[index], (x,), rule)


def split(x: Tensor, sizes: Sequence[int], axis: int = -1) -> list[Tensor]:
    """Split into consecutive pieces of the given sizes along ``axis``."""
    axis = _normalize_axis(axis, x.ndim)
    if int(np.sum(sizes)) != x.shape[axis]:
        raise ShapeMismatchError(f"split sizes {list(sizes)} do not cover axis {axis} of {x.shape}")
    pieces, start = [], 0
    for size in sizes:
        pieces.append(slice_axis(x, start, start + size, axis))
        start += size
    return pieces


# reductions

@_register("sum")
def sum(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    value = np.sum(x.data, axis=axis, keepdims=keepdims)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _emit("sum", np.asarray(value, dtype=x.dtype), (x,), rule)


@_register("mean")
def mean(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    value = np.mean(x.data, axis=axis, keepdims=keepdims)
    axes = range(x.ndim) if axis is None else ((axis,) if isinstance(axis, int) else axis)
    count = int(np.prod([x.shape[a] for a in axes]))

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((np.broadcast_to(g, x.shape) / x.dtype.type(count)).astype(x.dtype, copy=False),)

    return _emit("mean", np.asarray(value, dtype=x.dtype), (x,), rule)


# normalization and attention helpers

@_register("softmax")
def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along ``axis``; the per-slice max is subtracted before exponentiation."""
    axis = _normalize_axis(axis, x.ndim)
    if not np.all(np.isfinite(x.data)):
        raise NonFiniteError("non-finite logits")
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    exp = np.exp(shifted)
    y = exp / np.sum(exp, axis=axis, keepdims=True)

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _emit("softmax", y, (x,), rule)


@_register("layer_norm")
def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize each last-axis slice to zero mean / unit variance, then apply gain and bias."""
    width = x.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise ShapeMismatchError(
            f"layer_norm: gain {gain.shape} / bias {bias.shape} must match last axis {width}"
        )
    mu = np.mean(x.data, axis=-1, keepdims=True)
    centered = x.data - mu
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + x.dtype.type(eps))
    x_hat = centered * inv_std
    value = x_hat * gain.data + bias.data
    lead = tuple(range(x.ndim - 1))

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        d_hat = g * gain.data
        grad_x = inv_std * (
            d_hat
            - np.mean(d_hat, axis=-1, keepdims=True)
            - x_hat * np.mean(d_hat * x_hat, axis=-1, keepdims=True)
        )
        return grad_x, np.sum(g * x_hat, axis=lead), np.sum(g, axis=lead)

    return _emit("layer_norm", value, (x, gain, bias), rule)


@_register("embedding")
def embedding(table: Tensor, indices: np.ndarray) -> Tensor:
    """Row lookup ``table[indices]``; output shape is ``indices.shape + (width,)``."""
    indices = np.asarray(indices)
    if not np.issubdtype(indices.dtype, np.integer):
        raise DataValidationError(f"embedding indices must be integers, got {indices.dtype}")
    rows = table.shape[0]
    if indices.size and (indices.min() < 0 or indices.max() >= rows):
        raise DataValidationError(
            f"embedding index out of table range [0, {rows}): min {indices.min()}, max {indices.max()}"
        )

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros(table.shape, dtype=g.dtype)
        np.add.at(grad, indices, g)
        return (grad,)

    return _emit("embedding", table.data[indices], (table,), rule)


@_register("dropout")
def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when ``rate`` is 0."""
    if rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return _emit("dropout", x.data * keep, (x,), lambda g: (g * keep,))


# composites

def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Affine map over the last axis: ``x @ weight (+ bias)``."""
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def mae(prediction: Tensor, target: Operand) -> Tensor:
    """Mean absolute error over every element."""
    target = as_tensor(target, prediction)
    if prediction.shape != target.shape:
        raise ShapeMismatchError(f"mae: prediction {prediction.shape} vs target {target.shape}")
    return mean(absolute(sub(prediction, target)))


# operator sugar
Tensor.__add__ = lambda self, other: add(self, other)  # type: ignore[method-assign]
Tensor.__radd__ = lambda self, other: add(other, self)  # type: ignore[attr-defined]
Tensor.__sub__ = lambda self, other: sub(self, other)  # type: ignore[attr-defined]
Tensor.__rsub__ = lambda self, other: sub(other, self)  # type: ignore[attr-defined]
Tensor.__mul__ = lambda self, other: multiply(self, other)  # type: ignore[attr-defined]
Tensor.__rmul__ = lambda self, other: multiply(other, self)  # type: ignore[attr-defined]
Tensor.__neg__ = lambda self: neg(self)  # type: ignore[attr-defined]
Tensor.__matmul__ = lambda self, other: matmul(self, other)  # type: ignore[attr-defined]
Tensor.reshape = lambda self, *shape: reshape(self, shape[0] if len(shape) == 1 and not isinstance(shape[0], int) else shape)  # type: ignore[attr-defined]  # noqa: E501
Tensor.permute = lambda self, *axes: permute(self, axes[0] if len(axes) == 1 and not isinstance(axes[0], int) else axes)  # type: ignore[attr-defined]  # noqa: E501
