"""
Gradient verification harness.

``op_gradient_errors`` checks every registered op on small random shapes;
``model_gradient_check`` checks the composed forecasting loss on a tiny
instance over a random subset of parameter entries. Both run in 64-bit mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from app.core.logging import get_logger
from app.data.adjacency import transition_matrices
from app.models.config import TrainConfig, build_config
from app.models.traffic import GraphPair, NormStats, SampleBatch
from app.nn.dtrformer import DTRformer
from app.tensor import ops
from app.tensor.gradcheck import ParamCheckReport, grad_check, grad_check_params
from app.tensor.tensor import Tensor, precision

logger = get_logger(__name__)

OP_TOLERANCE = 1e-5
MODEL_TOLERANCE = 1e-4

GRADCHECK_INSTANCE = {
    "d_f": 4,
    "d_a": 8,
    "d_n": 8,
    "heads": 2,
    "layers": 1,
    "t_in": 12,
    "t_out": 12,
}


def _away_from_zero(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Random values with |v| >= 0.1; keeps kinks and vanishing gradient components out of reach."""
    magnitude = rng.uniform(0.1, 2.0, size=shape)
    return magnitude * rng.choice([-1.0, 1.0], size=shape)


def _op_cases(rng: np.random.Generator) -> dict[str, tuple[Callable[[Tensor], Tensor], np.ndarray]]:
    """op name -> (scalar function of x, point x). Each output is contracted with fixed random weights."""

    def weighted(out: Tensor) -> Tensor:
        weights = Tensor(_away_from_zero(np.random.default_rng(out.size), out.shape))
        return ops.sum(ops.multiply(out, weights))

    c34 = Tensor(rng.standard_normal((3, 4)))
    c42 = Tensor(rng.standard_normal((4, 2)))
    c234 = Tensor(rng.standard_normal((2, 3, 4)))
    gain = Tensor(rng.uniform(0.5, 1.5, size=4))
    bias = Tensor(rng.standard_normal(4))
    indices = np.array([[0, 2, 2], [4, 1, 0]])

    def dropout(t: Tensor) -> Tensor:
        return ops.dropout(t, 0.3, np.random.default_rng(7))

    return {
        "add": (lambda t: weighted(ops.add(c34, t)), rng.standard_normal(4)),
        "sub": (lambda t: weighted(ops.sub(c34, t)), rng.standard_normal((3, 1))),
        "multiply": (lambda t: weighted(ops.multiply(t, c34)), rng.standard_normal((3, 1))),
        "scale": (lambda t: weighted(ops.scale(t, -2.5)), rng.standard_normal((2, 3))),
        "neg": (lambda t: weighted(ops.neg(t)), rng.standard_normal((2, 3))),
        "absolute": (lambda t: weighted(ops.absolute(t)), _away_from_zero(rng, (3, 4))),
        "relu": (lambda t: weighted(ops.relu(t)), _away_from_zero(rng, (3, 4))),
        "gelu": (lambda t: weighted(ops.gelu(t)), rng.standard_normal((3, 4))),
        "matmul": (lambda t: weighted(ops.matmul(t, c42)), rng.standard_normal((2, 3, 4))),
        "matmul_broadcast_rhs": (lambda t: weighted(ops.matmul(c234, t)), rng.standard_normal((4, 2))),
        "permute": (lambda t: weighted(ops.permute(t, (2, 0, 1))), rng.standard_normal((2, 3, 4))),
        "reshape": (lambda t: weighted(ops.reshape(t, (4, 6))), rng.standard_normal((2, 3, 4))),
        "broadcast_to": (lambda t: weighted(ops.broadcast_to(t, (2, 3, 4))), rng.standard_normal((3, 1))),
        "concatenate": (lambda t: weighted(ops.concatenate([c34, t, c34], axis=0)), rng.standard_normal((2, 4))),
        "slice_axis": (lambda t: weighted(ops.slice_axis(t, 1, 3, axis=1)), rng.standard_normal((2, 4))),
        "sum": (lambda t: weighted(ops.sum(t, axis=1)), rng.standard_normal((2, 3, 4))),
        "mean": (lambda t: weighted(ops.mean(t, axis=(0, 2), keepdims=True)), rng.standard_normal((2, 3, 4))),
        "softmax": (lambda t: weighted(ops.softmax(t, axis=1)), rng.standard_normal((2, 4, 3))),
        "layer_norm": (lambda t: weighted(ops.layer_norm(t, gain, bias)), rng.standard_normal((3, 4))),
        "layer_norm_gain": (
            lambda g: weighted(ops.layer_norm(Tensor(np.arange(12.0).reshape(3, 4) ** 1.5), g, bias)),
            rng.uniform(0.5, 1.5, size=4),
        ),
        "embedding": (lambda t: weighted(ops.embedding(t, indices)), rng.standard_normal((5, 3))),
        "dropout": (lambda t: weighted(dropout(t)), rng.standard_normal((3, 4))),
    }


def op_gradient_errors(seed: int = 0) -> dict[str, float]:
    """Worst relative gradient error per op case."""
    with precision("float64"):
        cases = _op_cases(np.random.default_rng(seed))
        errors = {name: grad_check(fn, Tensor(point)) for name, (fn, point) in cases.items()}
    for name, error in errors.items():
        logger.debug("gradcheck %-22s %.3e", name, error)
    return errors


@dataclass
class GradcheckInstance:
    model: DTRformer
    batch: SampleBatch
    stats: NormStats
    graph: GraphPair

    def loss(self) -> Tensor:
        return self.model.loss(self.batch, self.graph, self.stats)


def build_gradcheck_instance(
    seed: int = 0,
    batch_size: int = 2,
    n_nodes: int = 4,
    n_d: int = 288,
    config: Optional[TrainConfig] = None,
) -> GradcheckInstance:
    """A tiny normalized-scale instance (mean 0, std 1), built in 64-bit mode."""
    rng = np.random.default_rng(seed)
    config = config or build_config({**GRADCHECK_INSTANCE, "seed": seed})
    with precision("float64"):
        model = DTRformer(config, n_nodes=n_nodes, c_in=1, n_d=n_d)
    shape_in = (batch_size, config.t_in, n_nodes, 1)
    batch = SampleBatch(
        x=rng.standard_normal(shape_in),
        y=rng.standard_normal((batch_size, config.t_out, n_nodes, config.c_out)),
        tod=rng.integers(0, n_d, size=(batch_size, config.t_in)),
        dow=rng.integers(0, 7, size=(batch_size, config.t_in)),
        starts=np.arange(batch_size),
    )
    graph = transition_matrices(rng.uniform(0.0, 1.0, size=(n_nodes, n_nodes)))
    return GradcheckInstance(model=model, batch=batch, stats=NormStats(np.zeros(1), np.ones(1)), graph=graph)


def model_gradient_check(seed: int = 0, n_samples: int = 50, config: Optional[TrainConfig] = None) -> ParamCheckReport:
    instance = build_gradcheck_instance(seed=seed, config=config)
    with precision("float64"):
        report = grad_check_params(
            instance.loss,
            instance.model.named_parameters(),
            n_samples=n_samples,
            rng=np.random.default_rng(seed + 1),
        )
    logger.info(
        "Model gradient check: %d entries (%d skipped at kinks), worst relative error %.3e at %s",
        report.checked,
        report.skipped,
        report.max_relative_error,
        report.worst,
    )
    return report
