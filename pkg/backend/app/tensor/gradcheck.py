"""
Finite-difference verification of tape gradients.

All checks run in 64-bit mode and use central differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from app.core.logging import get_logger
from app.tensor.tensor import Tape, Tensor, precision

logger = get_logger(__name__)

DEFAULT_EPS = 1e-6
RELATIVE_FLOOR = 1e-8
KINK_TOLERANCE = 1e-3


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Worst |a - n| / max(|a|, |n|, 1e-8) over all components."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), RELATIVE_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def numeric_gradient(f: Callable[[Tensor], Tensor], x: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        plus = f(Tensor(x, dtype=np.float64)).item()
        flat[i] = original - eps
        minus = f(Tensor(x, dtype=np.float64)).item()
        flat[i] = original
        out[i] = (plus - minus) / (2.0 * eps)
    return grad


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = DEFAULT_EPS) -> float:
    """
    Compare the tape gradient of scalar ``f`` at ``x`` with central differences.

    Returns:
        The worst componentwise relative error.

    Raises:
        NonFiniteGradientError: if backpropagation meets a NaN/Inf gradient.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    with precision("float64"):
        point = Tensor(x.data, requires_grad=True, dtype=np.float64)
        with Tape() as tape:
            loss = f(point)
        grads = tape.backward(loss)
        analytic = grads.get(point.node_id, np.zeros(point.shape))
        numeric = numeric_gradient(f, point.data, eps)
    return max_relative_error(analytic, numeric)


@dataclass
class ParamCheckReport:
    """Outcome of a sampled parameter gradient check."""

    max_relative_error: float
    checked: int
    worst: Optional[tuple[str, int]] = None
    errors: list[float] = field(default_factory=list)
    skipped: int = 0


def grad_check_params(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    n_samples: int = 50,
    eps: float = DEFAULT_EPS,
    rng: Optional[np.random.Generator] = None,
    min_magnitude: float = 1e-4,
    kink_tolerance: float = KINK_TOLERANCE,
) -> ParamCheckReport:
    """
    Check ``d loss_fn() / d params`` on a random subset of parameter entries.

    ``loss_fn`` closes over the parameters; entries are perturbed in place and
    restored. Parameters are expected to be 64-bit. Entries whose analytic
    gradient is smaller than ``min_magnitude`` are not sampled. An entry whose
    forward and backward one-sided slopes disagree by more than
    ``kink_tolerance`` (relative) straddles a ReLU or |x| kink within ``eps``;
    it is skipped and another entry is drawn.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    with Tape() as tape:
        loss = loss_fn()
    center = loss.item()
    analytic = tape.gradient(loss, params)

    candidates = [
        (name, int(i))
        for name, grad in analytic.items()
        for i in np.flatnonzero(np.abs(grad) >= min_magnitude)
    ]
    report = ParamCheckReport(max_relative_error=0.0, checked=0)
    for pick in rng.permutation(len(candidates)):
        if report.checked >= n_samples:
            break
        name, index = candidates[int(pick)]
        param = params[name]
        values = param.numpy()
        flat = values.reshape(-1)
        original = flat[index]

        flat[index] = original + eps
        param.assign(values)
        plus = loss_fn().item()
        flat[index] = original - eps
        param.assign(values)
        minus = loss_fn().item()
        flat[index] = original
        param.assign(values)

        if max_relative_error((plus - center) / eps, (center - minus) / eps) > kink_tolerance:
            report.skipped += 1
            continue
        numeric = (plus - minus) / (2.0 * eps)
        error = max_relative_error(analytic[name].reshape(-1)[index], numeric)
        report.errors.append(error)
        report.checked += 1
        if error >= report.max_relative_error:
            report.max_relative_error = error
            report.worst = (name, index)

    logger.debug(
        "Parameter gradient check: %d entries (%d skipped at kinks), worst %.3e at %s",
        report.checked,
        report.skipped,
        report.max_relative_error,
        report.worst,
    )
    return report
