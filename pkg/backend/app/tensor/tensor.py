"""
Dense tensors and the reverse-mode tape.

A ``Tensor`` wraps a read-only, row-major numpy array. Ops in ``app.tensor.ops``
produce new tensors and, while a ``Tape`` is active, append an ``OpRecord``
holding the inputs, the output and a gradient rule. ``Tape.backward`` walks
the records once, newest first, and accumulates gradients per node id.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from contextvars import ContextVar, Token
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Optional, Sequence, Union

import numpy as np

from app.core.exceptions import NonFiniteGradientError, ShapeMismatchError

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
GradientRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_default_dtype: ContextVar[np.dtype] = ContextVar("dtr_default_dtype", default=np.dtype(np.float32))
_active_tape: ContextVar[Optional["Tape"]] = ContextVar("dtr_active_tape", default=None)
_node_ids = itertools.count()


def get_default_dtype() -> np.dtype:
    """Float width new tensors are created with (float32 unless overridden)."""
    return _default_dtype.get()


@contextmanager
def precision(dtype: Union[str, type, np.dtype]) -> Iterator[np.dtype]:
    """Temporarily switch the default float width, e.g. ``precision("float64")`` for gradient checks."""
    resolved = np.dtype(dtype)
    if resolved not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported precision {resolved}")
    token = _default_dtype.set(resolved)
    try:
        yield resolved
    finally:
        _default_dtype.reset(token)


def current_tape() -> Optional["Tape"]:
    return _active_tape.get()


class Tensor:
    """Immutable n-dimensional float array with optional gradient tracking."""

    __slots__ = ("_data", "requires_grad", "grad", "name", "node_id")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype: Optional[Union[str, type, np.dtype]] = None,
    ):
        array = np.array(data, dtype=np.dtype(dtype) if dtype is not None else get_default_dtype(), copy=True)
        self._data = self._freeze(array)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.node_id = next(_node_ids)

    @staticmethod
    def _freeze(array: np.ndarray) -> np.ndarray:
        if any(axis <= 0 for axis in array.shape):
            raise ShapeMismatchError(f"tensor axes must be positive, got shape {array.shape}")
        array = np.ascontiguousarray(array)
        array.flags.writeable = False
        return array

    @classmethod
    def from_op(cls, array: np.ndarray, requires_grad: bool) -> "Tensor":
        """Wrap an op result without copying."""
        tensor = cls.__new__(cls)
        tensor._data = cls._freeze(np.asarray(array))
        tensor.requires_grad = requires_grad
        tensor.grad = None
        tensor.name = None
        tensor.node_id = next(_node_ids)
        return tensor

    # data access

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return self._data.size

    @property
    def dtype(self) -> np.dtype:
        return self._data.dtype

    def numpy(self) -> np.ndarray:
        return self._data.copy()

    def item(self) -> float:
        if self._data.size != 1:
            raise ShapeMismatchError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self._data.reshape(-1)[0])

    def assign(self, value: ArrayLike) -> None:
        """Replace the stored values in place of an optimizer step or checkpoint load.

        The shape must not change; the dtype of the tensor is kept.
        """
        array = np.array(value, dtype=self._data.dtype, copy=True)
        if array.shape != self._data.shape:
            raise ShapeMismatchError(f"cannot assign shape {array.shape} to tensor of shape {self.shape}")
        self._data = self._freeze(array)

    def detach(self) -> "Tensor":
        return Tensor.from_op(self._data, requires_grad=False)

    def __deepcopy__(self, memo: dict) -> "Tensor":
        # replicas get fresh node ids so their tapes never alias the original
        clone = Tensor.from_op(self._data.copy(), requires_grad=self.requires_grad)
        clone.name = self.name
        clone.grad = None if self.grad is None else self.grad.copy()
        memo[id(self)] = clone
        return clone

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"


@dataclass(frozen=True)
class OpRecord:
    """One forward op: inputs, output and the rule mapping output grad to input grads."""

    index: int
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: GradientRule

    def describe(self) -> str:
        shapes = ", ".join(str(t.shape) for t in self.inputs)
        return f"#{self.index} {self.op}({shapes}) -> {self.output.shape}"


class Tape:
    """
    Ordered record of differentiable ops.

    Usage:
        with Tape() as tape:
            loss = model.loss(batch, graph, stats)
        grads = tape.gradient(loss, model.named_parameters())
    """

    def __init__(self) -> None:
        self.records: list[OpRecord] = []
        self._token: Optional[Token] = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc_info: object) -> None:
        if self._token is not None:
            _active_tape.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self.records)

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward: GradientRule) -> None:
        self.records.append(OpRecord(len(self.records), op, tuple(inputs), output, backward))

    def is_topological(self) -> bool:
        """True when every record's inputs are leaves or outputs of earlier records."""
        produced_at = {rec.output.node_id: rec.index for rec in self.records}
        return all(
            produced_at.get(inp.node_id, -1) < rec.index
            for rec in self.records
            for inp in rec.inputs
        )

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Propagate d(loss)/d(node) for every node reachable from ``loss``.

        Returns gradients keyed by node id; intermediate nodes are dropped
        once consumed, leaves remain.
        """
        if loss.size != 1:
            raise ShapeMismatchError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
        for rec in reversed(self.records):
            upstream = grads.pop(rec.output.node_id, None)
            if upstream is None:
                continue
            input_grads = rec.backward(upstream)
            for tensor, grad in zip(rec.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if not np.all(np.isfinite(grad)):
                    raise NonFiniteGradientError(
                        f"non-finite gradient produced by op record {rec.describe()}",
                        source=rec.describe(),
                    )
                if grad.shape != tensor.shape:
                    raise ShapeMismatchError(
                        f"gradient rule of {rec.describe()} returned shape {grad.shape} for input {tensor.shape}"
                    )
                previous = grads.get(tensor.node_id)
                grads[tensor.node_id] = grad if previous is None else previous + grad
        return grads

    def gradient(self, loss: Tensor, params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
        """Backpropagate and return (and attach as ``.grad``) gradients for named parameters.

        Parameters the loss does not depend on receive zeros.
        """
        grads = self.backward(loss)
        named: dict[str, np.ndarray] = {}
        for name, param in params.items():
            grad = grads.get(param.node_id)
            if grad is None:
                grad = np.zeros_like(param.data)
            param.grad = grad
            named[name] = grad
        return named
