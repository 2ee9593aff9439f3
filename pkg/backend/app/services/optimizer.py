"""
Adam with bias correction, global-norm clipping and the optimizer/early-stop state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from app.core.exceptions import NonFiniteGradientError
from app.tensor.tensor import Tensor

DEFAULT_BETAS = (0.9, 0.999)
DEFAULT_EPS = 1e-8


@dataclass
class TrainState:
    """Optimizer moments and the early-stopping bookkeeping of one run."""

    epoch: int = 0
    step: int = 0
    best_val_mae: float = math.inf
    best_epoch: int = 0
    epochs_since_improvement: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    def record_validation(self, val_mae: float) -> bool:
        """Update the best score; returns True on strict improvement."""
        if val_mae < self.best_val_mae:
            self.best_val_mae = val_mae
            self.best_epoch = self.epoch
            self.epochs_since_improvement = 0
            return True
        self.epochs_since_improvement += 1
        return False

    def should_stop(self, patience: int) -> bool:
        return self.epochs_since_improvement >= patience


def check_finite(grads: Mapping[str, np.ndarray]) -> None:
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name!r}", source=name)


def clip_grad_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``; returns (grads, original norm)."""
    total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if total <= max_norm or total == 0.0:
        return dict(grads), total
    factor = max_norm / (total + 1e-6)
    return {name: g * g.dtype.type(factor) for name, g in grads.items()}, total


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: TrainState,
    lr: float,
    betas: tuple[float, float] = DEFAULT_BETAS,
    eps: float = DEFAULT_EPS,
) -> TrainState:
    """
    One Adam update of every named parameter.

    All gradients are checked before any parameter moves, so a rejected step
    leaves parameters and moments untouched.

    Raises:
        NonFiniteGradientError: naming the first parameter with a NaN/Inf gradient.
    """
    check_finite(grads)
    beta1, beta2 = betas
    state.step += 1
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step
    for name, param in params.items():
        grad = grads[name]
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * (grad * grad)
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        param.assign(param.data - lr * m_hat / (np.sqrt(v_hat) + eps))
    return state
